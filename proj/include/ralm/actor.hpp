#pragma once

// Stochastic action modifier: Gaussian exploration around the recommended
// action, gated by how much the critic trusts the current state.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "ralm/error.hpp"

namespace ralm {

/// Seeded generator. Conversions to uniform/normal variates are done here so
/// draw sequences do not depend on the standard library's distributions.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller (one variate per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

struct SAMConfig {
  double var = 1.0;    // actuator units squared
  double alpha = 2.0;  // gate sharpness
  std::uint64_t seed = 1;

  void validate() const {
    if (!(std::isfinite(var) && var >= 0.0)) throw ConfigError("sam var must be finite and non-negative");
    if (!(std::isfinite(alpha) && alpha > 0.0)) throw ConfigError("sam alpha must be finite and positive");
  }
};

/// exp(-alpha * v) - exp(-alpha): zero at v = 1, growing as v falls.
inline double exploration_gate(double rpp_value, double alpha) {
  return std::exp(-alpha * rpp_value) - std::exp(-alpha);
}

/// F = asn_out + N(0, var) * gate(rpp_value). One normal variate is drawn per
/// call whatever the gate, so the stream stays aligned across runs.
inline double modulate(double asn_out, double rpp_value, const SAMConfig& cfg, RngStream& rng) {
  cfg.validate();
  detail::require_finite(asn_out, "modulate asn_out");
  detail::require_finite(rpp_value, "modulate rpp_value");
  const double n = std::sqrt(cfg.var) * rng.normal();
  return asn_out + n * exploration_gate(rpp_value, cfg.alpha);
}

}  // namespace ralm
