#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "casft/common.hpp"

namespace casft {

/// Deterministic random stream with portable draw algorithms.
///
/// std::mt19937_64 output is specified bit-for-bit by the standard, but the
/// distribution adaptors are not; all transformations here are hand-rolled so
/// identical seeds give identical streams on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n-1] by rejection (unbiased).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw CasftError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  /// Exponential with the given rate.
  double exponential(double rate) {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return -std::log(u) / rate;
  }

  /// Standard normal via Box-Muller (one draw per call, spare cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Poisson by Knuth's product-of-uniforms; fine for the small means used here.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  /// Deterministic sub-stream: mixes the tag into a fresh generator state.
  Rng fork(std::uint64_t tag) {
    std::uint64_t s = gen_();
    s ^= tag * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
    return Rng(s);
  }

  std::mt19937_64& engine() { return gen_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace casft
