#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace gemsmpc {

// Gaussian RKHS kernel, exp(-||a-b||^2 / (2 sigma^2)).
struct KernelSpec {
  double sigma = 0.5;
};

inline void check_kernel(const KernelSpec& k) {
  if (!(k.sigma > 0.0))
    throw std::invalid_argument("KernelSpec: sigma must be positive");
}

inline double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& a,
                              const Eigen::Ref<const Eigen::VectorXd>& b,
                              const KernelSpec& k) {
  check_kernel(k);
  if (a.size() != b.size())
    throw std::invalid_argument("gaussian_kernel: length mismatch");
  return std::exp(-(a - b).squaredNorm() / (2.0 * k.sigma * k.sigma));
}

// Gram block K(i,j) = k(x_i, y_j) for samples stored as columns.
inline Eigen::MatrixXd kernel_gram(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::MatrixXd>& Y,
                                   const KernelSpec& k) {
  check_kernel(k);
  const Eigen::VectorXd x2 = X.colwise().squaredNorm();
  const Eigen::VectorXd y2 = Y.colwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * X.transpose() * Y);
  d2.colwise() += x2;
  d2.rowwise() += y2.transpose();
  return (d2 * (-1.0 / (2.0 * k.sigma * k.sigma))).array().exp();
}

namespace detail {

// Sum of off-diagonal kernel values within one sample set, and the full sum
// against another set, computed in fixed-size blocks so large sample counts
// never materialize an n x n Gram matrix. Block traversal order is fixed, so
// results are bit-stable for a given input.
inline double kernel_offdiag_sum(const Eigen::MatrixXd& X,
                                 const KernelSpec& k) {
  constexpr Eigen::Index kBlock = 1024;
  const Eigen::Index n = X.cols();
  double total = 0.0;
  for (Eigen::Index i0 = 0; i0 < n; i0 += kBlock) {
    const Eigen::Index ib = std::min(kBlock, n - i0);
    for (Eigen::Index j0 = 0; j0 < n; j0 += kBlock) {
      const Eigen::Index jb = std::min(kBlock, n - j0);
      Eigen::MatrixXd g =
          kernel_gram(X.middleCols(i0, ib), X.middleCols(j0, jb), k);
      if (i0 == j0)
        for (Eigen::Index d = 0; d < ib; ++d) g(d, d) = 0.0;
      total += g.sum();
    }
  }
  return total;
}

inline double kernel_cross_sum(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y, const KernelSpec& k) {
  constexpr Eigen::Index kBlock = 1024;
  double total = 0.0;
  for (Eigen::Index i0 = 0; i0 < X.cols(); i0 += kBlock) {
    const Eigen::Index ib = std::min(kBlock, X.cols() - i0);
    for (Eigen::Index j0 = 0; j0 < Y.cols(); j0 += kBlock) {
      const Eigen::Index jb = std::min(kBlock, Y.cols() - j0);
      total +=
          kernel_gram(X.middleCols(i0, ib), Y.middleCols(j0, jb), k).sum();
    }
  }
  return total;
}

}  // namespace detail

// Unbiased three-term MMD^2 estimator between sample sets stored as columns.
// May be slightly negative; that is the price of unbiasedness.
inline double mmd2_unbiased(const Eigen::Ref<const Eigen::MatrixXd>& X,
                            const Eigen::Ref<const Eigen::MatrixXd>& Y,
                            const KernelSpec& k) {
  check_kernel(k);
  const double m = static_cast<double>(X.cols());
  const double n = static_cast<double>(Y.cols());
  if (X.cols() < 2 || Y.cols() < 2)
    throw std::invalid_argument("mmd2_unbiased: need at least 2 samples per set");
  if (X.rows() != Y.rows())
    throw std::invalid_argument("mmd2_unbiased: dimension mismatch");
  const double xx = detail::kernel_offdiag_sum(X, k);
  const double yy = detail::kernel_offdiag_sum(Y, k);
  const double xy = detail::kernel_cross_sum(X, Y, k);
  return xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n);
}

// Gradient of mmd2_unbiased with respect to the columns of X (Y held fixed).
// Used by the prior-matching penalty during training.
inline Eigen::MatrixXd mmd2_unbiased_grad_x(const Eigen::MatrixXd& X,
                                            const Eigen::MatrixXd& Y,
                                            const KernelSpec& k) {
  check_kernel(k);
  const Eigen::Index m = X.cols(), n = Y.cols();
  if (m < 2 || n < 2)
    throw std::invalid_argument("mmd2_unbiased_grad_x: need >= 2 samples");
  const double inv_s2 = 1.0 / (k.sigma * k.sigma);
  Eigen::MatrixXd kxx = kernel_gram(X, X, k);
  kxx.diagonal().setZero();
  const Eigen::MatrixXd kxy = kernel_gram(X, Y, k);
  // d k(a,b) / d a = k(a,b) (b - a) / sigma^2
  const double cxx = 2.0 / (static_cast<double>(m) * (m - 1.0));
  const double cxy = 2.0 / (static_cast<double>(m) * n);
  const Eigen::VectorXd dxx = kxx.rowwise().sum();
  const Eigen::VectorXd dxy = kxy.rowwise().sum();
  Eigen::MatrixXd grad = cxx * (X * kxx - X * dxx.asDiagonal()) -
                         cxy * (Y * kxy.transpose() - X * dxy.asDiagonal());
  return inv_s2 * grad;
}

}  // namespace gemsmpc
