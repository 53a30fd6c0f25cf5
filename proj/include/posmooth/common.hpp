#pragma once

// Shared basic types: linear algebra aliases, observation ids, error
// categories and a self-contained deterministic RNG.

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace posmooth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Caller misuse (bad arguments, malformed structure).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent data (files, scenarios).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure surfaced to the caller (singular covariance, degenerate
// particle set).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Observation identity: time step k (1-based) and index i within the scan.
struct ObsId {
  std::int32_t k = 0;
  std::int32_t i = 0;

  friend auto operator<=>(const ObsId&, const ObsId&) = default;
};

// Deterministic RNG built on mt19937_64 with explicitly implemented
// derived draws, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  Rng(std::uint64_t seed, std::uint64_t stream)
      : eng_(mix(seed, stream)) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw UsageError("uniform_int: empty range");
    const std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = eng_();
    while (r >= bound) r = eng_();
    return r % n;
  }

  // Standard normal, Marsaglia polar method (no cached spare).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform01() - 1.0;
      const double v = 2.0 * uniform01() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Poisson by the product method; adequate for the rates used here
  // (exp(-lambda) stays representable for lambda < ~700).
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda > 700.0) throw UsageError("poisson: rate too large");
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > limit);
    return k - 1;
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace posmooth
