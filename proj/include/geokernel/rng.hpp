#pragma once

#include <cstdint>
#include <random>

#include "geokernel/stats.hpp"

namespace geokernel {

/// Deterministic random stream. All distribution sampling goes through the
/// inverse-CDF path so the draw sequence is pinned by the engine sequence
/// alone (no reliance on implementation-defined std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in (0, 1); never returns an exact endpoint.
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() { return stats::normal_quantile(uniform()); }

  double normal(double mu, double sd) { return mu + sd * normal(); }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace geokernel
