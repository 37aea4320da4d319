#ifndef RDSIM_RNG_HPP
#define RDSIM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>

#include "rdsim/common.hpp"

namespace rdsim {

// Counter-based generator: every draw is a pure function of its key, so
// per-cell sampling is order-independent and thread-count-independent.
namespace rng {

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

inline uint64_t combine(uint64_t a, uint64_t b) {
  return mix64(a + 0x9e3779b97f4a7c15ull * (b + 1));
}

// Stable key for one (seed, row, column, direction, stream) draw.
inline uint64_t cell_key(uint64_t master_seed, uint32_t row, uint32_t column,
                         uint8_t direction, uint8_t stream) {
  uint64_t k = mix64(master_seed ^ 0x6a09e667f3bcc909ull);
  k = combine(k, row);
  k = combine(k, (uint64_t(column) << 8) | direction);
  k = combine(k, stream);
  return k;
}

// Uniform in [0, 1) with 53 random bits.
inline double to_unit(uint64_t h) {
  return double(h >> 11) * 0x1.0p-53;
}

// Acklam's rational approximation of the standard normal quantile.
// Absolute error below 1.2e-9 over (0, 1); deterministic and branch-light,
// which is what the per-cell sampling hot path needs.
inline double inverse_normal_cdf(double p) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log1p(-p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865476);
}

// Lightweight sequential generator for places that want a stream (profile
// randomization, test-case generation), seeded from the same key machinery.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  double next_unit() { return to_unit(next()); }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  uint64_t state_;
};

}  // namespace rng
}  // namespace rdsim

#endif  // RDSIM_RNG_HPP
