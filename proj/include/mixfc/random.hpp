#pragma once

#include <cstdint>
#include <random>

namespace mixfc {

/// Seeded source of uniform deviates. The mapping from engine bits to
/// doubles is fixed here (not delegated to std::uniform_real_distribution,
/// whose algorithm is implementation-defined) so draws reproduce exactly
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double open01() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform on [a, b).
  double uniform(double a, double b) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double x = a + (b - a) * u;
    return x < b ? x : a;
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixfc
