#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uwauth/error.hpp"
#include "uwauth/rng.hpp"

namespace uwauth {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned rectangle in metres.
struct Area {
  double x_min = 313.0;
  double x_max = 1813.0;
  double y_min = 275.0;
  double y_max = 2275.0;

  bool contains(const Vec2& p) const noexcept {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
  }

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max)) throw ConfigError("mobility area is degenerate");
  }
};

/// Correlated Gauss-Markov mobility. Defaults reproduce the reference
/// scenario: 1500 m x 2000 m transmitter area, T = 10 s, sigma = 2 m/s.
struct GaussMarkovParams {
  double alpha = 1.0 - 2e-3;
  double period_s = 10.0;
  double sigma_v = 2.0;
  double v0 = 2.0;
  double depth_m = 50.0;
  Area area{};

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("mobility.alpha must lie in [0, 1]");
    if (!(period_s > 0.0)) throw ConfigError("mobility.T must be positive");
    if (!(sigma_v >= 0.0)) throw ConfigError("mobility.sigma_v must be non-negative");
    if (!(v0 >= 0.0)) throw ConfigError("mobility.v0 must be non-negative");
    area.validate();
  }
};

struct MobilityState {
  double t = 0.0;
  Vec2 p = Vec2::Zero();
  Vec2 v = Vec2::Zero();
};

struct Trajectory {
  std::vector<MobilityState> samples;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// A trace whose samples may come from different transmitters.
/// labels[i] is 0 for Alice, 1 for Eve.
struct LabeledTrajectory {
  Trajectory trace;
  std::vector<int> labels;
};

struct AttackScenario {
  std::size_t onset_index = 35;
  double standoff_m = 500.0;
  double eve_v0 = 1.0;
  double eve_heading_halfwidth = std::numbers::pi / 4.0;

  void validate(std::size_t trace_length) const {
    if (onset_index == 0 || onset_index >= trace_length)
      throw ConfigError("attack.onset_index must satisfy 0 < onset < M");
    if (!(standoff_m > 0.0)) throw ConfigError("attack.standoff_m must be positive");
    if (!(eve_v0 >= 0.0)) throw ConfigError("attack.eve_v0 must be non-negative");
    if (!(eve_heading_halfwidth >= 0.0)) throw ConfigError("attack.eve_heading_halfwidth must be non-negative");
  }
};

/// Specular reflection at the area boundary: the offending coordinate is
/// mirrored about the crossed edge and the matching velocity component is
/// negated. Repeats until the position is inside, so oversized steps fold.
inline void confine(Vec2& p, Vec2& v, const Area& area) noexcept {
  auto fold = [](double& x, double& vx, double lo, double hi) {
    for (int guard = 0; guard < 64 && (x < lo || x > hi); ++guard) {
      if (x < lo) {
        x = 2.0 * lo - x;
      } else {
        x = 2.0 * hi - x;
      }
      vx = -vx;
    }
    if (x < lo) x = lo;
    if (x > hi) x = hi;
  };
  fold(p.x(), v.x(), area.x_min, area.x_max);
  fold(p.y(), v.y(), area.y_min, area.y_max);
}

/// One mobility update. Position advances with the velocity held at the
/// start of the step; eta is the caller's Gaussian draw in m/s.
inline MobilityState step_gauss_markov(const MobilityState& state, const GaussMarkovParams& params,
                                       const Vec2& eta) noexcept {
  MobilityState next;
  next.t = state.t + params.period_s;
  next.v = params.alpha * state.v + eta * std::sqrt(1.0 - params.alpha * params.alpha);
  next.p = state.p + state.v * params.period_s;
  confine(next.p, next.v, params.area);
  return next;
}

namespace detail {

inline Vec2 draw_eta(Random& rng, double sigma) noexcept {
  const double ex = rng.normal() * sigma;
  const double ey = rng.normal() * sigma;
  return {ex, ey};
}

inline void advance(Trajectory& traj, std::size_t count, const GaussMarkovParams& params, Random& rng) {
  for (std::size_t i = 1; i < count; ++i) {
    const Vec2 eta = draw_eta(rng, params.sigma_v);
    traj.samples.push_back(step_gauss_markov(traj.samples.back(), params, eta));
  }
}

}  // namespace detail

inline Trajectory simulate_trajectory(const GaussMarkovParams& params, std::size_t count, std::uint64_t seed) {
  params.validate();
  if (count == 0) throw ConfigError("trajectory length M must be at least 1");
  Random rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.samples.reserve(count);

  MobilityState start;
  start.p = {rng.uniform(params.area.x_min, params.area.x_max), rng.uniform(params.area.y_min, params.area.y_max)};
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  start.v = params.v0 * Vec2{std::cos(heading), std::sin(heading)};
  traj.samples.push_back(start);
  detail::advance(traj, count, params, rng);
  return traj;
}

/// Eve's trajectory from the onset instant to the end of Alice's trace.
/// Her first position lies on the circle of radius D around Alice's last
/// legitimate position (rejection-sampled into the area) and her heading is
/// drawn within +-halfwidth of Alice's heading at that sample.
inline Trajectory spawn_attacker(const Trajectory& alice, const AttackScenario& scenario,
                                 const GaussMarkovParams& params, std::uint64_t seed) {
  params.validate();
  scenario.validate(alice.size());
  const MobilityState& last = alice.samples[scenario.onset_index - 1];
  const Vec2 centre = last.p;
  const double radius = scenario.standoff_m;

  auto on_circle = [&](double theta) -> Vec2 { return centre + radius * Vec2{std::cos(theta), std::sin(theta)}; };

  constexpr int kProbe = 7200;
  bool feasible = false;
  for (int i = 0; i < kProbe && !feasible; ++i)
    feasible = params.area.contains(on_circle(2.0 * std::numbers::pi * i / kProbe));
  if (!feasible)
    throw ConfigError("attacker standoff circle of radius " + std::to_string(radius) + " m does not intersect the area");

  Random rng(seed);
  Vec2 start_p;
  bool placed = false;
  for (int attempt = 0; attempt < 1'000'000; ++attempt) {
    start_p = on_circle(rng.uniform(0.0, 2.0 * std::numbers::pi));
    if (params.area.contains(start_p)) {
      placed = true;
      break;
    }
  }
  if (!placed) throw ConfigError("could not place attacker inside the area");

  const double phi = std::atan2(last.v.y(), last.v.x());
  const double hw = scenario.eve_heading_halfwidth;
  const double heading = hw > 0.0 ? rng.uniform(phi - hw, phi + hw) : phi;

  Trajectory eve;
  eve.seed = seed;
  const std::size_t count = alice.size() - scenario.onset_index;
  eve.samples.reserve(count);
  MobilityState first;
  first.t = alice.samples[scenario.onset_index - 1].t + params.period_s;
  first.p = start_p;
  first.v = scenario.eve_v0 * Vec2{std::cos(heading), std::sin(heading)};
  eve.samples.push_back(first);
  detail::advance(eve, count, params, rng);
  return eve;
}

/// Samples [0, onset) from Alice, [onset, M) from Eve. onset == M is the
/// legitimate trace. eve.samples[j] stands at index onset + j.
inline LabeledTrajectory compose_attack_trace(const Trajectory& alice, const Trajectory& eve, std::size_t onset) {
  const std::size_t m = alice.size();
  if (onset > m) throw DataError("attack onset index " + std::to_string(onset) + " beyond trace length " + std::to_string(m));
  if (onset < m && eve.size() < m - onset)
    throw DataError("attacker trajectory shorter than the attacked part of the trace");
  LabeledTrajectory out;
  out.trace.seed = alice.seed;
  out.trace.samples.reserve(m);
  out.labels.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (i < onset) {
      out.trace.samples.push_back(alice.samples[i]);
      out.labels.push_back(0);
    } else {
      out.trace.samples.push_back(eve.samples[i - onset]);
      out.labels.push_back(1);
    }
  }
  return out;
}

inline LabeledTrajectory legitimate_trace(const Trajectory& alice) {
  return LabeledTrajectory{alice, std::vector<int>(alice.size(), 0)};
}

}  // namespace uwauth
