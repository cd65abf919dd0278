#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace rvolmin {

// 64-bit finalizer used both as the output function of the generator and as
// the seed-mixing hash for derived streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Derive an independent stream seed from (base, a, b). Used for per-trial
// seeds so trials can run in any order with identical results.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  constexpr std::uint64_t gamma = 0x9E3779B97F4A7C15ULL;
  return mix64(base + gamma * (a + 1) + mix64(gamma * (b + 1)));
}

// Counter-based SplitMix64 stream. The i-th output is a pure function of
// (seed, i), so the stream is portable across platforms and compilers.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform on [0, 1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double next_double_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; kept explicit because the distribution
  // adapters in <random> are not bit-reproducible across standard libraries.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double next_exponential() { return -std::log(next_double_open()); }

  // Uniform point on the unit simplex (flat Dirichlet) of dimension k.
  Eigen::VectorXd next_simplex_point(Eigen::Index k) {
    Eigen::VectorXd v(k);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      v[i] = next_exponential();
      sum += v[i];
    }
    return v / sum;
  }

  // k distinct indices drawn from {0, ..., n-1} (partial Fisher-Yates).
  std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto j = i + static_cast<Eigen::Index>(next_u64() % static_cast<std::uint64_t>(n - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rvolmin
