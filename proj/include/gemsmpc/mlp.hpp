#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gemsmpc/rng.hpp"

namespace gemsmpc::nn {

enum class Activation { kRelu, kIdentity };

struct Layer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
  Activation act = Activation::kIdentity;
};

struct MlpParams {
  std::vector<Layer> layers;

  int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().W.rows()); }

  void check() const {
    if (layers.empty()) throw std::invalid_argument("MlpParams: empty");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      if (layers[i].W.rows() != layers[i + 1].W.cols())
        throw std::invalid_argument("MlpParams: layer dimensions do not chain");
  }
};

// Uniform fan-in initialization, final layer linear, hidden layers ReLU.
inline MlpParams make_mlp(const std::vector<int>& sizes, RngStream& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need >= 2 sizes");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer layer;
    const int fan_in = sizes[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layer.W.resize(sizes[l + 1], sizes[l]);
    for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
        layer.W(i, j) = rng.uniform(-bound, bound);
    layer.b = Eigen::VectorXd::Zero(sizes[l + 1]);
    layer.act = (l + 2 < sizes.size()) ? Activation::kRelu
                                       : Activation::kIdentity;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // activation entering each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

// Forward pass over a batch stored as columns; optional cache for backprop.
inline Eigen::MatrixXd mlp_forward(const MlpParams& p,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   MlpCache* cache = nullptr) {
  if (X.rows() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Eigen::MatrixXd a = X;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (const Layer& layer : p.layers) {
    if (cache) cache->inputs.push_back(a);
    Eigen::MatrixXd z = (layer.W * a).colwise() + layer.b;
    if (cache) cache->pre.push_back(z);
    a = (layer.act == Activation::kRelu) ? z.cwiseMax(0.0).eval()
                                         : std::move(z);
  }
  return a;
}

inline Eigen::MatrixXd mlp_eval(const MlpParams& p,
                                const Eigen::Ref<const Eigen::MatrixXd>& X) {
  return mlp_forward(p, X);
}

struct MlpGrad {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static MlpGrad zeros_like(const MlpParams& p) {
    MlpGrad g;
    for (const Layer& l : p.layers) {
      g.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return g;
  }

  void add_scaled(const MlpGrad& other, double s) {
    for (std::size_t i = 0; i < dW.size(); ++i) {
      dW[i] += s * other.dW[i];
      db[i] += s * other.db[i];
    }
  }
};

// Reverse accumulation through the cached forward pass. dY holds the loss
// gradient with respect to the network output (one column per sample);
// returns the gradient with respect to the input batch and accumulates
// parameter gradients into `grad`.
inline Eigen::MatrixXd mlp_backward(const MlpParams& p, const MlpCache& cache,
                                    const Eigen::MatrixXd& dY, MlpGrad& grad) {
  Eigen::MatrixXd delta = dY;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const Layer& layer = p.layers[static_cast<std::size_t>(l)];
    if (layer.act == Activation::kRelu)
      delta = delta.cwiseProduct(
          (cache.pre[static_cast<std::size_t>(l)].array() > 0.0)
              .cast<double>()
              .matrix());
    grad.dW[static_cast<std::size_t>(l)] +=
        delta * cache.inputs[static_cast<std::size_t>(l)].transpose();
    grad.db[static_cast<std::size_t>(l)] += delta.rowwise().sum();
    if (l > 0) delta = (layer.W.transpose() * delta).eval();
  }
  return p.layers.front().W.transpose() * delta;
}

// Flat views used by the optimizer and the finite-difference tests.
inline Eigen::Index mlp_param_count(const MlpParams& p) {
  Eigen::Index n = 0;
  for (const Layer& l : p.layers) n += l.W.size() + l.b.size();
  return n;
}

inline double* mlp_param_at(MlpParams& p, Eigen::Index idx) {
  for (Layer& l : p.layers) {
    if (idx < l.W.size()) return l.W.data() + idx;
    idx -= l.W.size();
    if (idx < l.b.size()) return l.b.data() + idx;
    idx -= l.b.size();
  }
  throw std::out_of_range("mlp_param_at");
}

inline double mlp_grad_at(const MlpGrad& g, Eigen::Index idx) {
  for (std::size_t i = 0; i < g.dW.size(); ++i) {
    if (idx < g.dW[i].size()) return g.dW[i].data()[idx];
    idx -= g.dW[i].size();
    if (idx < g.db[i].size()) return g.db[i].data()[idx];
    idx -= g.db[i].size();
  }
  throw std::out_of_range("mlp_grad_at");
}

// Adaptive-moment optimizer state for one network.
struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  static AdamState zeros_like(const MlpParams& p) {
    AdamState s;
    for (const Layer& l : p.layers) {
      s.mW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      s.vW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      s.mb.push_back(Eigen::VectorXd::Zero(l.b.size()));
      s.vb.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return s;
  }
};

inline void adam_step(MlpParams& p, const MlpGrad& g, AdamState& s, double lr,
                      double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  s.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    s.mW[i] = beta1 * s.mW[i] + (1.0 - beta1) * g.dW[i];
    s.vW[i] = beta2 * s.vW[i] + (1.0 - beta2) * g.dW[i].cwiseProduct(g.dW[i]);
    p.layers[i].W -=
        (lr / bc1) * s.mW[i].cwiseQuotient(
                         ((s.vW[i] / bc2).cwiseSqrt().array() + eps).matrix());
    s.mb[i] = beta1 * s.mb[i] + (1.0 - beta1) * g.db[i];
    s.vb[i] = beta2 * s.vb[i] + (1.0 - beta2) * g.db[i].cwiseProduct(g.db[i]);
    p.layers[i].b -=
        (lr / bc1) * s.mb[i].cwiseQuotient(
                         ((s.vb[i] / bc2).cwiseSqrt().array() + eps).matrix());
  }
}

}  // namespace gemsmpc::nn
