#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwauth/error.hpp"
#include "uwauth/mobility.hpp"
#include "uwauth/rng.hpp"

namespace uwauth {

enum class EstimateSource { kOracle, kExternal };

/// Output of the position-estimator stage at one sampling instant.
struct PositionEstimate {
  double t = 0.0;
  Vec2 p = Vec2::Zero();
  EstimateSource source = EstimateSource::kOracle;
};

/// One-step-ahead prediction for instant t, paired with the estimate that
/// arrived at t.
struct Prediction {
  double t = 0.0;
  Vec2 predicted = Vec2::Zero();
  Vec2 estimate = Vec2::Zero();
};

struct OracleConfig {
  double sigma_pos = 25.0;

  void validate() const {
    if (!(sigma_pos >= 0.0)) throw ConfigError("estimator.sigma_pos must be non-negative");
  }
};

/// True position plus i.i.d. Gaussian noise of std sigma_pos per component.
/// The draw is a pure function of (seed, t).
inline PositionEstimate oracle_estimate(const Vec2& true_p, const OracleConfig& cfg, std::uint64_t seed, double t) {
  cfg.validate();
  Random rng(derive_seed(seed, std::bit_cast<std::uint64_t>(t)));
  const double wx = rng.normal() * cfg.sigma_pos;
  const double wy = rng.normal() * cfg.sigma_pos;
  return {t, true_p + Vec2{wx, wy}, EstimateSource::kOracle};
}

inline std::vector<PositionEstimate> oracle_stream(const Trajectory& traj, const OracleConfig& cfg, std::uint64_t seed) {
  std::vector<PositionEstimate> out;
  out.reserve(traj.size());
  for (const MobilityState& s : traj.samples) out.push_back(oracle_estimate(s.p, cfg, seed, s.t));
  return out;
}

/// True when b follows a by one sampling period.
inline bool is_next_instant(double a, double b, double period) noexcept {
  return std::abs((b - a) - period) <= 1e-6 * period;
}

/// Throws StreamError unless consecutive estimates are exactly one period apart.
inline void require_regular(const std::vector<PositionEstimate>& stream, double period) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (!is_next_instant(stream[i - 1].t, stream[i].t, period))
      throw StreamError("irregular sampling between t=" + std::to_string(stream[i - 1].t) + " and t=" +
                        std::to_string(stream[i].t) + " (period " + std::to_string(period) + " s)");
  }
}

}  // namespace uwauth
