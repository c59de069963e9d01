#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gemsmpc {

// Counter-based random stream (Philox-2x64, 10 rounds).
//
// A stream is identified by (seed, stream_id). Outputs are a keyed bijection
// of the 128-bit block (counter, stream_id), so streams with distinct ids
// never overlap for any draw count. Copying a stream copies its position.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : key_(seed), stream_(stream_id) {}

  std::uint64_t next_u64() {
    if (buf_pos_ >= 2) {
      block(counter_++);
      buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; draws come in cached pairs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  // Column-major fill order, one normal per entry.
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  static std::uint64_t mulhi(std::uint64_t a, std::uint64_t b) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(a) * b) >> 64);
  }

  void block(std::uint64_t ctr) {
    constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ULL;
    constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;
    std::uint64_t x0 = ctr, x1 = stream_, k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t hi = mulhi(x0, kMul);
      const std::uint64_t lo = x0 * kMul;
      x0 = hi ^ k ^ x1;
      x1 = lo;
      k += kWeyl;
    }
    buf_[0] = x0;
    buf_[1] = x1;
  }

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t buf_[2] = {0, 0};
  int buf_pos_ = 2;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fixed stream-id namespaces so independent subsystems never share a stream.
namespace stream_domain {
inline constexpr std::uint64_t kPlant = 1ULL << 32;
inline constexpr std::uint64_t kExcitation = 2ULL << 32;
inline constexpr std::uint64_t kTraining = 3ULL << 32;
inline constexpr std::uint64_t kPce = 4ULL << 32;
inline constexpr std::uint64_t kEval = 5ULL << 32;
}  // namespace stream_domain

}  // namespace gemsmpc
