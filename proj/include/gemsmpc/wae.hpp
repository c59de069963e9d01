#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gemsmpc/engine.hpp"
#include "gemsmpc/kernel.hpp"
#include "gemsmpc/mlp.hpp"
#include "gemsmpc/rng.hpp"

namespace gemsmpc::gen {

inline constexpr double kLogVarFloor = -8.0;
inline constexpr double kLogVarCeil = 4.0;

// Conditional residual sampler: a reparameterized encoder and a deterministic
// decoder g(x, w), both conditioned on the normalized (CA50, IMEP) state.
// Encoder input order is residual-then-state; the latent prior is N(0, I2).
struct WaeModel {
  nn::MlpParams encoder;  // (residual 2 + cond 2) -> (mu 2, logvar 2)
  nn::MlpParams decoder;  // (latent 2 + cond 2) -> residual 2
  int latent_dim = 2;
  int cond_dim = 2;
  std::uint64_t train_seed = 0;
  // Normalization metadata carried with the model file.
  Eigen::Vector3d state_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d state_halfwidth = Eigen::Vector3d::Ones();
};

inline WaeModel make_wae(RngStream& rng, int hidden = 30, int depth = 3) {
  WaeModel m;
  std::vector<int> enc{4};
  std::vector<int> dec{4};
  for (int i = 0; i < depth; ++i) {
    enc.push_back(hidden);
    dec.push_back(hidden);
  }
  enc.push_back(4);
  dec.push_back(2);
  m.encoder = nn::make_mlp(enc, rng);
  m.decoder = nn::make_mlp(dec, rng);
  engine::Normalizer norm;
  m.state_center = norm.state_center();
  m.state_halfwidth = norm.state_halfwidth();
  return m;
}

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top,
                                  const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

struct EncoderOut {
  Eigen::MatrixXd mu;       // 2 x n
  Eigen::MatrixXd log_var;  // 2 x n, clamped
};

inline EncoderOut encoder_eval(const WaeModel& m, const Eigen::MatrixXd& Y,
                               const Eigen::MatrixXd& C,
                               nn::MlpCache* cache = nullptr) {
  const Eigen::MatrixXd out = nn::mlp_forward(m.encoder, stack_rows(Y, C), cache);
  EncoderOut e;
  e.mu = out.topRows(m.latent_dim);
  e.log_var = out.bottomRows(m.latent_dim)
                  .cwiseMax(kLogVarFloor)
                  .cwiseMin(kLogVarCeil);
  return e;
}

// Noise scale; the clamp floor collapses to an exactly deterministic encoder.
inline double std_from_logvar(double lv) {
  return lv <= kLogVarFloor ? 0.0 : std::exp(0.5 * lv);
}

inline Eigen::MatrixXd sample_std(const Eigen::MatrixXd& log_var) {
  return log_var.unaryExpr([](double lv) { return std_from_logvar(lv); });
}

// Reparameterized posterior draw w = mu + std(logvar) .* eta.
inline Eigen::Vector2d encoder_sample(const WaeModel& m,
                                      const Eigen::Vector2d& y,
                                      const Eigen::Vector2d& cond,
                                      RngStream& rng) {
  const EncoderOut e = encoder_eval(m, y, cond);
  const Eigen::Vector2d eta(rng.normal(), rng.normal());
  return e.mu.col(0) + sample_std(e.log_var).col(0).cwiseProduct(eta);
}

inline Eigen::MatrixXd encoder_sample_batch(const WaeModel& m,
                                            const Eigen::MatrixXd& Y,
                                            const Eigen::MatrixXd& C,
                                            const Eigen::MatrixXd& Eta) {
  const EncoderOut e = encoder_eval(m, Y, C);
  return e.mu + sample_std(e.log_var).cwiseProduct(Eta);
}

inline Eigen::MatrixXd decoder_eval(const WaeModel& m, const Eigen::MatrixXd& W,
                                    const Eigen::MatrixXd& C) {
  return nn::mlp_eval(m.decoder, stack_rows(W, C));
}

struct TrainConfig {
  int batch_size = 320;
  int epochs = 15;
  double lambda = 2.5;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void check() const {
    if (batch_size < 2)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (lambda < 0.0)
      throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1");
  }
};

struct BatchLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double penalty = 0.0;
  nn::MlpGrad d_encoder;
  nn::MlpGrad d_decoder;
};

// Mean-squared reconstruction (averaged over components and samples) plus the
// lambda-weighted unbiased MMD between batch latents and fresh prior draws.
// Eta and Prior are injected so gradients can be checked against finite
// differences with the randomness held fixed.
inline BatchLoss wae_batch_loss(const WaeModel& m, const Eigen::MatrixXd& Y,
                                const Eigen::MatrixXd& C,
                                const Eigen::MatrixXd& Eta,
                                const Eigen::MatrixXd& Prior, double lambda,
                                const KernelSpec& kernel) {
  const Eigen::Index n = Y.cols();
  if (n < 2)
    throw std::invalid_argument("wae_batch_loss: batch must have >= 2 samples");
  BatchLoss out;
  out.d_encoder = nn::MlpGrad::zeros_like(m.encoder);
  out.d_decoder = nn::MlpGrad::zeros_like(m.decoder);

  nn::MlpCache enc_cache;
  const Eigen::MatrixXd enc_out =
      nn::mlp_forward(m.encoder, stack_rows(Y, C), &enc_cache);
  const Eigen::MatrixXd mu = enc_out.topRows(2);
  const Eigen::MatrixXd lv_raw = enc_out.bottomRows(2);
  const Eigen::MatrixXd lv =
      lv_raw.cwiseMax(kLogVarFloor).cwiseMin(kLogVarCeil);
  const Eigen::MatrixXd std_mat = sample_std(lv);
  const Eigen::MatrixXd W = mu + std_mat.cwiseProduct(Eta);

  nn::MlpCache dec_cache;
  const Eigen::MatrixXd R_hat =
      nn::mlp_forward(m.decoder, stack_rows(W, C), &dec_cache);

  const Eigen::MatrixXd diff = R_hat - Y;
  const double denom = static_cast<double>(diff.size());
  out.reconstruction = diff.squaredNorm() / denom;
  out.penalty = lambda * mmd2_unbiased(W, Prior, kernel);
  out.total = out.reconstruction + out.penalty;

  // Reconstruction path.
  const Eigen::MatrixXd d_rhat = (2.0 / denom) * diff;
  const Eigen::MatrixXd d_dec_in =
      nn::mlp_backward(m.decoder, dec_cache, d_rhat, out.d_decoder);
  Eigen::MatrixXd dW = d_dec_in.topRows(2);
  // Prior-matching path.
  if (lambda > 0.0) dW += lambda * mmd2_unbiased_grad_x(W, Prior, kernel);

  // Through the reparameterization into (mu, logvar); the clamp gates the
  // log-variance gradient.
  Eigen::MatrixXd d_enc_out(4, n);
  d_enc_out.topRows(2) = dW;
  const Eigen::MatrixXd clamp_mask =
      ((lv_raw.array() > kLogVarFloor) && (lv_raw.array() < kLogVarCeil))
          .cast<double>();
  d_enc_out.bottomRows(2) =
      (0.5 * dW.array() * Eta.array() * std_mat.array() * clamp_mask.array())
          .matrix();
  nn::mlp_backward(m.encoder, enc_cache, d_enc_out, out.d_encoder);
  return out;
}

struct TrainResult {
  WaeModel model;
  std::vector<double> epoch_loss;
};

// First-order stochastic training over shuffled mini-batches, deterministic
// for a given seed. Throws on a non-finite loss.
inline TrainResult wae_train(const std::vector<engine::DatasetRecord>& data,
                             const TrainConfig& cfg, const KernelSpec& kernel) {
  cfg.check();
  if (data.empty()) throw std::invalid_argument("wae_train: empty dataset");
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd Y(2, n), C(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Y.col(i) = data[static_cast<std::size_t>(i)].residual_n;
    C.col(i) = data[static_cast<std::size_t>(i)].state_n.head<2>();
  }

  RngStream rng(cfg.seed, stream_domain::kTraining);
  TrainResult result;
  result.model = make_wae(rng);
  result.model.train_seed = cfg.seed;
  nn::AdamState enc_state = nn::AdamState::zeros_like(result.model.encoder);
  nn::AdamState dec_state = nn::AdamState::zeros_like(result.model.decoder);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle on the dedicated stream.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(rng.uniform01() *
                                               static_cast<double>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    double epoch_sum = 0.0;
    long batches = 0;
    for (Eigen::Index start = 0; start + 2 <= n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      if (b < 2) break;
      Eigen::MatrixXd Yb(2, b), Cb(2, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        Yb.col(i) = Y.col(order[static_cast<std::size_t>(start + i)]);
        Cb.col(i) = C.col(order[static_cast<std::size_t>(start + i)]);
      }
      const Eigen::MatrixXd Eta = rng.normal_matrix(2, b);
      const Eigen::MatrixXd Prior = rng.normal_matrix(2, b);
      BatchLoss loss = wae_batch_loss(result.model, Yb, Cb, Eta, Prior,
                                      cfg.lambda, kernel);
      if (!std::isfinite(loss.total))
        throw std::runtime_error("wae_train: non-finite loss at epoch " +
                                 std::to_string(epoch));
      // Mini-batch mean gradients are already scaled; step both networks.
      nn::adam_step(result.model.encoder, loss.d_encoder, enc_state,
                    cfg.learning_rate);
      nn::adam_step(result.model.decoder, loss.d_decoder, dec_state,
                    cfg.learning_rate);
      epoch_sum += loss.total;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(batches));
  }
  return result;
}

// Decoder pushforward of n fresh prior draws at a fixed condition.
inline Eigen::MatrixXd sample_conditional_residuals(const WaeModel& m,
                                                    const Eigen::Vector2d& cond,
                                                    Eigen::Index n,
                                                    RngStream& rng) {
  if (n < 1)
    throw std::invalid_argument("sample_conditional_residuals: n < 1");
  const Eigen::MatrixXd W = rng.normal_matrix(2, n);
  return decoder_eval(m, W, cond.replicate(1, n));
}

struct SliceSummary {
  Eigen::Vector2d condition;
  Eigen::Vector2d mean;
  Eigen::Vector2d stddev;
  Eigen::Vector2d skewness;
};

struct FitReport {
  double marginal_mmd2 = 0.0;      // generated vs held-out residuals
  double latent_prior_mmd2 = 0.0;  // encoder latents vs fresh prior draws
  std::vector<SliceSummary> slices;
};

inline SliceSummary summarize_slice(const Eigen::Vector2d& cond,
                                    const Eigen::MatrixXd& samples) {
  SliceSummary s;
  s.condition = cond;
  const double n = static_cast<double>(samples.cols());
  s.mean = samples.rowwise().mean();
  Eigen::MatrixXd centered = samples.colwise() - s.mean;
  const Eigen::Vector2d m2 = centered.array().square().rowwise().sum() / n;
  const Eigen::Vector2d m3 = centered.array().cube().rowwise().sum() / n;
  s.stddev = m2.cwiseSqrt();
  s.skewness = m3.cwiseQuotient(m2.array().pow(1.5).matrix());
  return s;
}

// Held-out fit statistics: marginal residual MMD^2, latent prior MMD^2 and
// conditional slices at the stable and boundary operating points.
inline FitReport evaluate_fit(const WaeModel& m,
                              const std::vector<engine::DatasetRecord>& test,
                              const KernelSpec& kernel, std::uint64_t seed,
                              Eigen::Index slice_samples = 10000) {
  if (test.empty()) throw std::invalid_argument("evaluate_fit: empty test set");
  const Eigen::Index n = static_cast<Eigen::Index>(test.size());
  Eigen::MatrixXd Y(2, n), C(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Y.col(i) = test[static_cast<std::size_t>(i)].residual_n;
    C.col(i) = test[static_cast<std::size_t>(i)].state_n.head<2>();
  }
  RngStream rng(seed, stream_domain::kEval);
  FitReport report;
  const Eigen::MatrixXd W = rng.normal_matrix(2, n);
  report.marginal_mmd2 = mmd2_unbiased(decoder_eval(m, W, C), Y, kernel);
  const Eigen::MatrixXd Eta = rng.normal_matrix(2, n);
  const Eigen::MatrixXd Prior = rng.normal_matrix(2, n);
  report.latent_prior_mmd2 =
      mmd2_unbiased(encoder_sample_batch(m, Y, C, Eta), Prior, kernel);

  engine::Normalizer norm;
  const Eigen::Vector2d stable =
      norm.state(engine::EngineState{7.0, 3.0, 0.0}).head<2>();
  const Eigen::Vector2d boundary =
      norm.state(engine::EngineState{2.0, 2.2, 0.0}).head<2>();
  for (const Eigen::Vector2d& cond : {stable, boundary}) {
    const Eigen::MatrixXd s =
        sample_conditional_residuals(m, cond, slice_samples, rng);
    report.slices.push_back(summarize_slice(cond, s));
  }
  return report;
}

// --- model and report files ---

inline nlohmann::json mlp_to_json(const nn::MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const nn::Layer& l : p.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.W.size()));
    // Row-major on disk.
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c)
        w[static_cast<std::size_t>(r * l.W.cols() + c)] = l.W(r, c);
    layers.push_back({{"rows", l.W.rows()},
                      {"cols", l.W.cols()},
                      {"activation",
                       l.act == nn::Activation::kRelu ? "relu" : "identity"},
                      {"weights", w},
                      {"bias", std::vector<double>(l.b.data(),
                                                   l.b.data() + l.b.size())}});
  }
  return layers;
}

inline nn::MlpParams mlp_from_json(const nlohmann::json& j) {
  nn::MlpParams p;
  for (const auto& lj : j) {
    nn::Layer l;
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weights").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows)
      throw std::runtime_error("model file: inconsistent layer shape");
    l.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        l.W(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    l.act = lj.at("activation").get<std::string>() == "relu"
                ? nn::Activation::kRelu
                : nn::Activation::kIdentity;
    p.layers.push_back(std::move(l));
  }
  p.check();
  return p;
}

inline void save_wae(const WaeModel& m, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "wae-residual-model";
  j["latent_dim"] = m.latent_dim;
  j["cond_dim"] = m.cond_dim;
  j["train_seed"] = m.train_seed;
  j["encoder_input_order"] = "residual_then_state";
  j["normalization"] = {
      {"state_center", std::vector<double>(m.state_center.data(),
                                           m.state_center.data() + 3)},
      {"state_halfwidth", std::vector<double>(m.state_halfwidth.data(),
                                              m.state_halfwidth.data() + 3)}};
  j["encoder"] = mlp_to_json(m.encoder);
  j["decoder"] = mlp_to_json(m.decoder);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_wae: cannot open " + path);
  f << j.dump(1) << "\n";
}

inline WaeModel load_wae(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_wae: cannot open " + path);
  nlohmann::json j;
  f >> j;
  WaeModel m;
  m.latent_dim = j.at("latent_dim").get<int>();
  m.cond_dim = j.at("cond_dim").get<int>();
  m.train_seed = j.at("train_seed").get<std::uint64_t>();
  const auto sc = j.at("normalization").at("state_center").get<std::vector<double>>();
  const auto sh =
      j.at("normalization").at("state_halfwidth").get<std::vector<double>>();
  m.state_center = Eigen::Map<const Eigen::Vector3d>(sc.data());
  m.state_halfwidth = Eigen::Map<const Eigen::Vector3d>(sh.data());
  m.encoder = mlp_from_json(j.at("encoder"));
  m.decoder = mlp_from_json(j.at("decoder"));
  return m;
}

inline nlohmann::json fit_report_to_json(const FitReport& r) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["marginal_mmd2"] = r.marginal_mmd2;
  j["latent_prior_mmd2"] = r.latent_prior_mmd2;
  j["slices"] = nlohmann::json::array();
  for (const SliceSummary& s : r.slices) {
    j["slices"].push_back(
        {{"condition", {s.condition(0), s.condition(1)}},
         {"mean", {s.mean(0), s.mean(1)}},
         {"stddev", {s.stddev(0), s.stddev(1)}},
         {"skewness", {s.skewness(0), s.skewness(1)}}});
  }
  return j;
}

}  // namespace gemsmpc::gen
