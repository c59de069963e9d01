#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemsmpc/rng.hpp"

namespace gemsmpc::engine {

// Cycle-to-cycle combustion state: CA50 [deg CA], IMEP [bar], DPmax [bar/degCA].
struct EngineState {
  double ca50 = 7.0;
  double imep = 3.0;
  double dpmax = 2.5;
};

// Actuators: NVO [deg CA], main fuel injection [ms], ethanol injection [ms].
struct ControlInput {
  double nvo = 202.0;
  double fuel = 0.735;
  double eth = 0.2;
};

struct StateBounds {
  double ca50_lo = 2.0, ca50_hi = 13.0;
  double imep_lo = 2.0, imep_hi = 4.5;
  double dpmax_lo = 0.0, dpmax_hi = 5.0;
};

struct InputBounds {
  double nvo_lo = 172.0, nvo_hi = 232.0;
  double fuel_lo = 0.5, fuel_hi = 0.97;
  double eth_lo = 0.0, eth_hi = 0.4;
};

// One-sided halfspace rows G x <= g for the operating boxes, expressed in
// normalized coordinates. Rows are +/- unit vectors, bounds are 1.
struct OperatingLimits {
  Eigen::Matrix<double, 6, 3> G_x;
  Eigen::Matrix<double, 6, 1> g_x;
  Eigen::Matrix<double, 6, 3> G_u;
  Eigen::Matrix<double, 6, 1> g_u;

  static OperatingLimits boxes_normalized() {
    OperatingLimits lim;
    lim.G_x.setZero();
    lim.G_u.setZero();
    for (int j = 0; j < 3; ++j) {
      lim.G_x(2 * j, j) = 1.0;
      lim.G_x(2 * j + 1, j) = -1.0;
      lim.G_u(2 * j, j) = 1.0;
      lim.G_u(2 * j + 1, j) = -1.0;
    }
    lim.g_x.setOnes();
    lim.g_u.setOnes();
    return lim;
  }
};

// Affine map of each operating interval onto [-1, 1]. Residuals transform
// with the interval scale only (they are differences, not positions).
class Normalizer {
 public:
  Normalizer() : Normalizer(StateBounds{}, InputBounds{}) {}

  Normalizer(const StateBounds& sb, const InputBounds& ub) {
    state_center_ << 0.5 * (sb.ca50_lo + sb.ca50_hi),
        0.5 * (sb.imep_lo + sb.imep_hi), 0.5 * (sb.dpmax_lo + sb.dpmax_hi);
    state_half_ << 0.5 * (sb.ca50_hi - sb.ca50_lo),
        0.5 * (sb.imep_hi - sb.imep_lo), 0.5 * (sb.dpmax_hi - sb.dpmax_lo);
    input_center_ << 0.5 * (ub.nvo_lo + ub.nvo_hi),
        0.5 * (ub.fuel_lo + ub.fuel_hi), 0.5 * (ub.eth_lo + ub.eth_hi);
    input_half_ << 0.5 * (ub.nvo_hi - ub.nvo_lo),
        0.5 * (ub.fuel_hi - ub.fuel_lo), 0.5 * (ub.eth_hi - ub.eth_lo);
  }

  Eigen::Vector3d state(const EngineState& s) const {
    Eigen::Vector3d raw(s.ca50, s.imep, s.dpmax);
    return (raw - state_center_).cwiseQuotient(state_half_);
  }
  EngineState state_inv(const Eigen::Vector3d& n) const {
    Eigen::Vector3d raw = state_center_ + n.cwiseProduct(state_half_);
    return EngineState{raw(0), raw(1), raw(2)};
  }

  Eigen::Vector3d input(const ControlInput& u) const {
    Eigen::Vector3d raw(u.nvo, u.fuel, u.eth);
    return (raw - input_center_).cwiseQuotient(input_half_);
  }
  ControlInput input_inv(const Eigen::Vector3d& n) const {
    Eigen::Vector3d raw = input_center_ + n.cwiseProduct(input_half_);
    return ControlInput{raw(0), raw(1), raw(2)};
  }

  // (r_ca50, r_imep) raw <-> normalized.
  Eigen::Vector2d residual(const Eigen::Vector2d& raw) const {
    return raw.cwiseQuotient(state_half_.head<2>());
  }
  Eigen::Vector2d residual_inv(const Eigen::Vector2d& n) const {
    return n.cwiseProduct(state_half_.head<2>());
  }

  const Eigen::Vector3d& state_center() const { return state_center_; }
  const Eigen::Vector3d& state_halfwidth() const { return state_half_; }
  const Eigen::Vector3d& input_center() const { return input_center_; }
  const Eigen::Vector3d& input_halfwidth() const { return input_half_; }

 private:
  Eigen::Vector3d state_center_, state_half_;
  Eigen::Vector3d input_center_, input_half_;
};

// Saturating analytic surrogate of the cycle-to-cycle HCCI map. Trapped
// residual gas (low NVO advances CA50), fueling raises load and advances
// phasing, ethanol cooling delays ignition, off-phase combustion costs load.
struct SurrogateCoeffs {
  // ca50 drift
  double ca50_set = 7.0, ca50_span = 6.0;
  double c_self = 0.3, c_nvo = -4.0, c_fuel = -2.0, c_eth = 3.0, c_cross = 0.2;
  // imep drift
  double imep_set = 3.25, imep_span = 1.25;
  double i_self = 0.25, i_fuel = 1.6, i_eth = 0.4, i_phase = -0.005;
  // pressure-rise proxy
  double d_base = 2.5, d_imep = 0.8, d_ca50 = -0.25;
  // physical saturation of the measured outputs
  double ca50_phys_lo = 1.0, ca50_phys_hi = 13.5;
  double imep_phys_lo = 1.8, imep_phys_hi = 4.7;
};

// State-dependent residual process: scale grows with late phasing and low
// load, upper skew from the squared-latent term, negative CA50-IMEP coupling.
struct ResidualCoeffs {
  double s1_base = 0.8, s1_ca50 = 0.6, s1_ca50_mid = 10.0, s1_ca50_width = 1.5;
  double s1_imep = 0.4, s1_imep_mid = 2.6, s1_imep_width = 0.2;
  double gamma_gain = 0.3, gamma_mid = 9.0, gamma_width = 1.5;
  double s2_base = 0.05, s2_gain = 0.03, s2_mid = 10.0, s2_width = 1.5;
  double rho = -0.5;
};

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline ControlInput clamp_input(const ControlInput& u,
                                const InputBounds& b = InputBounds{}) {
  return ControlInput{std::clamp(u.nvo, b.nvo_lo, b.nvo_hi),
                      std::clamp(u.fuel, b.fuel_lo, b.fuel_hi),
                      std::clamp(u.eth, b.eth_lo, b.eth_hi)};
}

// Deterministic part of the cycle map, before the residual acts.
inline Eigen::Vector2d drift(const EngineState& x, const ControlInput& u,
                             const SurrogateCoeffs& c = SurrogateCoeffs{}) {
  const double n = (u.nvo - 202.0) / 30.0;
  const double f = (u.fuel - 0.735) / 0.235;
  const double e = (u.eth - 0.2) / 0.2;
  const double dc = x.ca50 - c.ca50_set;
  const double di = x.imep - c.imep_set;
  const double a_ca50 = (c.c_self * dc + c.c_nvo * n + c.c_fuel * f +
                         c.c_eth * e + c.c_cross * dc * n) /
                        c.ca50_span;
  const double a_imep =
      (c.i_self * di + c.i_fuel * f + c.i_eth * e + c.i_phase * dc * dc) /
      c.imep_span;
  return {c.ca50_set + c.ca50_span * std::tanh(a_ca50),
          c.imep_set + c.imep_span * std::tanh(a_imep)};
}

inline double dpmax_of(double ca50, double imep,
                       const SurrogateCoeffs& c = SurrogateCoeffs{}) {
  return std::max(0.0, c.d_base + c.d_imep * (imep - c.imep_set) +
                           c.d_ca50 * (ca50 - c.ca50_set));
}

inline double residual_sigma_ca50(const EngineState& x,
                                  const ResidualCoeffs& c) {
  return c.s1_base +
         c.s1_ca50 * logistic((x.ca50 - c.s1_ca50_mid) / c.s1_ca50_width) +
         c.s1_imep * logistic((c.s1_imep_mid - x.imep) / c.s1_imep_width);
}

inline double residual_gamma(const EngineState& x, const ResidualCoeffs& c) {
  return c.gamma_gain * logistic((x.ca50 - c.gamma_mid) / c.gamma_width);
}

inline double residual_sigma_imep(const EngineState& x,
                                  const ResidualCoeffs& c) {
  return c.s2_base + c.s2_gain * logistic((x.ca50 - c.s2_mid) / c.s2_width);
}

// Ground-truth residual map g(x, w) for a given latent draw w ~ N(0, I2).
inline Eigen::Vector2d residual_from_latent(const EngineState& x,
                                            const Eigen::Vector2d& w,
                                            const ResidualCoeffs& c) {
  const double s1 = residual_sigma_ca50(x, c);
  const double g = residual_gamma(x, c);
  const double s2 = residual_sigma_imep(x, c);
  const double r1 = s1 * (w(0) + g * (w(0) * w(0) - 1.0));
  const double r2 =
      s2 * (c.rho * w(0) + std::sqrt(1.0 - c.rho * c.rho) * w(1));
  return {r1, r2};
}

inline Eigen::Vector2d true_residual_sample(const EngineState& x,
                                            RngStream& rng,
                                            const ResidualCoeffs& c =
                                                ResidualCoeffs{}) {
  if (!std::isfinite(x.ca50) || !std::isfinite(x.imep))
    throw std::invalid_argument("true_residual_sample: non-finite state");
  Eigen::Vector2d w(rng.normal(), rng.normal());
  return residual_from_latent(x, w, c);
}

// One engine cycle with an externally supplied residual (raw units). The
// measured outputs saturate at the physical envelope; DPmax follows from the
// post-residual phasing and load.
inline EngineState step_with_residual(const EngineState& x,
                                      const ControlInput& u_raw,
                                      const Eigen::Vector2d& residual,
                                      const SurrogateCoeffs& c =
                                          SurrogateCoeffs{}) {
  if (!std::isfinite(x.ca50) || !std::isfinite(x.imep) ||
      !std::isfinite(x.dpmax))
    throw std::invalid_argument("step_with_residual: non-finite state");
  const ControlInput u = clamp_input(u_raw);
  const Eigen::Vector2d pre = drift(x, u, c);
  const double ca50 =
      std::clamp(pre(0) + residual(0), c.ca50_phys_lo, c.ca50_phys_hi);
  const double imep =
      std::clamp(pre(1) + residual(1), c.imep_phys_lo, c.imep_phys_hi);
  return EngineState{ca50, imep, dpmax_of(ca50, imep, c)};
}

inline EngineState plant_step(const EngineState& x, const ControlInput& u,
                              RngStream& rng,
                              const SurrogateCoeffs& sc = SurrogateCoeffs{},
                              const ResidualCoeffs& rc = ResidualCoeffs{},
                              bool residual_enabled = true) {
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  if (residual_enabled) r = true_residual_sample(x, rng, rc);
  return step_with_residual(x, u, r, sc);
}

// IMEP reference steps (bar) over 30-cycle phases; CA50 setpoint is fixed.
inline std::pair<double, double> reference_profile(long cycle) {
  if (cycle < 0) throw std::invalid_argument("reference_profile: cycle < 0");
  static constexpr double kImepPhases[4] = {2.8, 2.2, 3.2, 3.9};
  const long phase = std::min<long>(cycle / 30, 3);
  return {7.0, kImepPhases[phase]};
}

struct Equilibrium {
  EngineState state;
  ControlInput input;
};

// Solves drift(x*, u) = (ca50*, imep*) for (nvo, fuel) with ethanol held at
// the box center. Newton on the pre-tanh coordinates; throws if the target
// is outside the reachable band or iteration stalls.
inline Equilibrium find_equilibrium(double ca50_target, double imep_target,
                                    const SurrogateCoeffs& c =
                                        SurrogateCoeffs{}) {
  const double dc = ca50_target - c.ca50_set;
  const double di = imep_target - c.imep_set;
  if (std::abs(dc) >= c.ca50_span || std::abs(di) >= c.imep_span)
    throw std::invalid_argument("find_equilibrium: target outside drift range");
  // Required pre-tanh arguments.
  const double a1 = c.ca50_span * std::atanh(dc / c.ca50_span);
  const double a2 = c.imep_span * std::atanh(di / c.imep_span);
  // Linear 2x2 in (n, f) once ethanol is pinned at e = 0:
  //   (c_nvo + c_cross*dc) n + c_fuel f = a1 - c_self*dc
  //   i_fuel f = a2 - i_self*di - i_phase*dc^2
  const double f = (a2 - c.i_self * di - c.i_phase * dc * dc) / c.i_fuel;
  const double n = (a1 - c.c_self * dc - c.c_fuel * f) / (c.c_nvo + c.c_cross * dc);
  ControlInput u{202.0 + 30.0 * n, 0.735 + 0.235 * f, 0.2};
  InputBounds box;
  if (u.nvo < box.nvo_lo || u.nvo > box.nvo_hi || u.fuel < box.fuel_lo ||
      u.fuel > box.fuel_hi)
    throw std::invalid_argument("find_equilibrium: required input leaves the box");
  EngineState x{ca50_target, imep_target, dpmax_of(ca50_target, imep_target, c)};
  return Equilibrium{x, u};
}

// Normalized (state, residual) pair as stored in the training corpus.
struct DatasetRecord {
  Eigen::Vector3d state_n;
  Eigen::Vector2d residual_n;
};

// Persistently exciting closed-box exploration: low-pass filtered uniform
// inputs with occasional direct jumps so the marginals reach the box edges.
inline std::vector<DatasetRecord> generate_dataset(
    long n, std::uint64_t seed, const SurrogateCoeffs& sc = SurrogateCoeffs{},
    const ResidualCoeffs& rc = ResidualCoeffs{},
    std::vector<ControlInput>* applied_inputs = nullptr) {
  if (n < 0) throw std::invalid_argument("generate_dataset: n < 0");
  std::vector<DatasetRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  Normalizer norm;
  RngStream input_rng(seed, stream_domain::kExcitation);
  RngStream residual_rng(seed, stream_domain::kPlant);
  EngineState x = find_equilibrium(7.0, 2.8, sc).state;
  Eigen::Vector3d u_n = Eigen::Vector3d::Zero();
  constexpr double kFilter = 0.7;
  constexpr double kJumpProb = 0.1;
  for (long i = 0; i < n; ++i) {
    Eigen::Vector3d fresh(input_rng.uniform(-1.0, 1.0),
                          input_rng.uniform(-1.0, 1.0),
                          input_rng.uniform(-1.0, 1.0));
    const bool jump = input_rng.uniform01() < kJumpProb;
    u_n = jump ? fresh : (kFilter * u_n + (1.0 - kFilter) * fresh).eval();
    const ControlInput u = norm.input_inv(u_n);
    if (applied_inputs) applied_inputs->push_back(u);
    const Eigen::Vector2d r = true_residual_sample(x, residual_rng, rc);
    out.push_back(DatasetRecord{norm.state(x), norm.residual(r)});
    x = step_with_residual(x, u, r, sc);
  }
  return out;
}

}  // namespace gemsmpc::engine
