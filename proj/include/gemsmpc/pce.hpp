#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gemsmpc/rng.hpp"

namespace gemsmpc::pce {

// Total-degree multi-index set in graded-lexicographic order: degrees
// ascend, ties broken lexicographically on the exponent tuple. The first
// entry is always the all-zeros index. The order is frozen at construction
// and preserved by serialization.
struct MultiIndexSet {
  int dim = 0;
  int degree = 0;
  std::vector<std::vector<int>> indices;

  static MultiIndexSet total_degree(int n_w, int p) {
    if (n_w < 1 || p < 0)
      throw std::invalid_argument("MultiIndexSet: need n_w >= 1, p >= 0");
    MultiIndexSet set;
    set.dim = n_w;
    set.degree = p;
    std::vector<int> alpha(static_cast<std::size_t>(n_w), 0);
    for (int d = 0; d <= p; ++d) emit_degree(set.indices, alpha, 0, d);
    return set;
  }

  int count() const { return static_cast<int>(indices.size()); }

 private:
  static void emit_degree(std::vector<std::vector<int>>& out,
                          std::vector<int>& alpha, std::size_t pos,
                          int remaining) {
    if (pos + 1 == alpha.size()) {
      alpha[pos] = remaining;
      out.push_back(alpha);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      alpha[pos] = v;
      emit_degree(out, alpha, pos + 1, remaining - v);
    }
    alpha[pos] = 0;
  }
};

// Probabilists' Hermite polynomial He_n(t) scaled by 1/sqrt(n!), orthonormal
// under the standard normal weight.
inline double hermite_orthonormal(int n, double t) {
  if (n < 0) throw std::invalid_argument("hermite_orthonormal: n < 0");
  double prev = 1.0;  // He_0
  if (n == 0) return prev;
  double cur = t;  // He_1
  double fact = 1.0;
  for (int k = 1; k < n; ++k) {
    const double next = t * cur - static_cast<double>(k) * prev;
    prev = cur;
    cur = next;
    fact *= static_cast<double>(k + 1);
  }
  return cur / std::sqrt(fact);
}

// Basis values for every multi-index at one germ sample.
inline Eigen::VectorXd eval_basis(const MultiIndexSet& set,
                                  const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() != set.dim)
    throw std::invalid_argument("eval_basis: germ dimension mismatch");
  // Per-dimension univariate table, degrees 0..p.
  Eigen::MatrixXd table(set.degree + 1, set.dim);
  for (int j = 0; j < set.dim; ++j)
    for (int d = 0; d <= set.degree; ++d)
      table(d, j) = hermite_orthonormal(d, w(j));
  Eigen::VectorXd phi(set.count());
  for (int i = 0; i < set.count(); ++i) {
    double v = 1.0;
    for (int j = 0; j < set.dim; ++j) v *= table(set.indices[i][j], j);
    phi(i) = v;
  }
  return phi;
}

struct PceConfig {
  int n_samples = 0;
  double lambda = 1.0;
  // Regularization weight per total degree, index 0..p. Expanded onto the
  // multi-index ordering by total degree.
  Eigen::VectorXd degree_weights;
  std::uint64_t seed = 0;
  // Test override: identity density weighting instead of the sample density.
  bool unit_gamma = false;
};

// Frozen collocation points (columns), basis evaluations and the linear
// projection operator mapping sample outputs to basis coefficients.
struct PceProjection {
  MultiIndexSet set;
  Eigen::MatrixXd points;  // n_w x N
  Eigen::MatrixXd basis;   // N x P
  Eigen::MatrixXd A;       // P x N

  Eigen::RowVectorXd mean_row() const { return A.row(0); }
};

namespace detail {

inline Eigen::VectorXd expand_degree_weights(const MultiIndexSet& set,
                                             const Eigen::VectorXd& by_degree) {
  Eigen::VectorXd w(set.count());
  for (int i = 0; i < set.count(); ++i) {
    int total = 0;
    for (int v : set.indices[i]) total += v;
    if (total >= by_degree.size())
      throw std::invalid_argument(
          "PceConfig: degree_weights shorter than max total degree + 1");
    w(i) = by_degree(total);
  }
  return w;
}

struct ProjectionParts {
  Eigen::MatrixXd basis;      // N x P
  Eigen::VectorXd gamma;      // N, density weights
  Eigen::VectorXd reg;        // P, per-index regularization weights
  Eigen::MatrixXd points;     // n_w x N
  Eigen::MatrixXd weighted;   // lambda * basis^T * Gamma^2, P x N
};

inline ProjectionParts assemble(const MultiIndexSet& set,
                                const PceConfig& cfg) {
  if (cfg.n_samples < 1)
    throw std::invalid_argument("PceConfig: n_samples must be >= 1");
  if (!(cfg.lambda > 0.0))
    throw std::invalid_argument("PceConfig: lambda must be positive");
  ProjectionParts parts;
  RngStream rng(cfg.seed, stream_domain::kPce);
  parts.points = rng.normal_matrix(set.dim, cfg.n_samples);
  parts.basis.resize(cfg.n_samples, set.count());
  for (int i = 0; i < cfg.n_samples; ++i)
    parts.basis.row(i) = eval_basis(set, parts.points.col(i)).transpose();
  // Standard-normal density at each point, up to the constant (2*pi)^{-n/2};
  // the constant is a uniform rescaling of Gamma that lambda absorbs.
  parts.gamma.resize(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i)
    parts.gamma(i) = cfg.unit_gamma
                         ? 1.0
                         : std::exp(-0.5 * parts.points.col(i).squaredNorm());
  parts.reg = expand_degree_weights(set, cfg.degree_weights);
  parts.weighted = cfg.lambda * parts.basis.transpose() *
                   parts.gamma.array().square().matrix().asDiagonal();
  return parts;
}

}  // namespace detail

// Direct normal-equation solution of the weighted, l2-regularized
// least-squares projector A = (lambda Phi^T G^2 Phi + W^2)^{-1} lambda Phi^T G^2.
inline PceProjection build_projection(const MultiIndexSet& set,
                                      const PceConfig& cfg) {
  detail::ProjectionParts parts = detail::assemble(set, cfg);
  Eigen::MatrixXd normal = parts.weighted * parts.basis;
  normal += parts.reg.array().square().matrix().asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
  if (!lu.isInvertible())
    throw std::runtime_error(
        "build_projection: singular normal matrix (no regularization and "
        "rank-deficient basis)");
  PceProjection proj;
  proj.set = set;
  proj.points = std::move(parts.points);
  proj.basis = std::move(parts.basis);
  proj.A = lu.solve(parts.weighted);
  if (!proj.A.allFinite())
    throw std::runtime_error("build_projection: non-finite operator");
  return proj;
}

// Same operator through the Woodbury identity, efficient when P > N. All
// regularization weights must be positive (W^{-2} must exist).
inline PceProjection build_projection_woodbury(const MultiIndexSet& set,
                                               const PceConfig& cfg) {
  detail::ProjectionParts parts = detail::assemble(set, cfg);
  if ((parts.reg.array() <= 0.0).any())
    throw std::invalid_argument(
        "build_projection_woodbury: all regularization weights must be > 0");
  const Eigen::VectorXd w_inv2 = parts.reg.array().square().inverse();
  // M = I + lambda G Phi W^{-2} Phi^T G  (N x N)
  Eigen::MatrixXd gphi = parts.gamma.asDiagonal() * parts.basis;  // N x P
  Eigen::MatrixXd inner =
      cfg.lambda * gphi * w_inv2.asDiagonal() * gphi.transpose();
  inner += Eigen::MatrixXd::Identity(inner.rows(), inner.cols());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
  // (lambda Phi^T G^2 Phi + W^2)^{-1} = W^{-2} - lambda W^{-2} Phi^T G M^{-1} G Phi W^{-2}
  Eigen::MatrixXd right = ldlt.solve(gphi * w_inv2.asDiagonal());  // N x P
  PceProjection proj;
  proj.set = set;
  proj.A = w_inv2.asDiagonal() * parts.weighted -
           cfg.lambda * (w_inv2.asDiagonal() * gphi.transpose()) * right *
               parts.weighted;
  proj.points = std::move(parts.points);
  proj.basis = std::move(parts.basis);
  if (!proj.A.allFinite())
    throw std::runtime_error("build_projection_woodbury: non-finite operator");
  return proj;
}

// Coefficients of sampled outputs: one column per output dimension.
inline Eigen::MatrixXd project_samples(
    const PceProjection& proj, const Eigen::Ref<const Eigen::MatrixXd>& outputs) {
  if (outputs.rows() != proj.A.cols())
    throw std::invalid_argument("project_samples: sample-count mismatch");
  return proj.A * outputs;
}

inline Eigen::VectorXd pce_mean(const Eigen::Ref<const Eigen::MatrixXd>& coeffs) {
  if (coeffs.rows() < 1) throw std::invalid_argument("pce_mean: empty");
  return coeffs.row(0).transpose();
}

// Covariance captured by the non-constant coefficients of an orthonormal
// expansion: X~^T X~ with X~ the rows 1..P-1.
inline Eigen::MatrixXd pce_covariance(
    const Eigen::Ref<const Eigen::MatrixXd>& coeffs) {
  if (coeffs.rows() < 1) throw std::invalid_argument("pce_covariance: empty");
  const auto tail = coeffs.bottomRows(coeffs.rows() - 1);
  return tail.transpose() * tail;
}

}  // namespace gemsmpc::pce
