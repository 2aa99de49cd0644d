#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uwauth/error.hpp"
#include "uwauth/mobility.hpp"
#include "uwauth/rng.hpp"

namespace uwauth {

using Complex = std::complex<double>;

/// Flat isovelocity waveguide with complex boundary reflection coefficients.
/// temperature/salinity/pH only enter through thorp_absorption().
struct Environment {
  double depth_water_m = 100.0;
  double sound_speed_mps = 1500.0;
  Complex surface_reflection{-1.0, 0.0};
  Complex bottom_reflection{0.5, 0.0};
  int max_bounces = 4;
  double temperature_c = 14.0;
  double salinity_ppt = 35.0;
  double ph = 8.0;

  void validate() const {
    if (!(depth_water_m > 0.0)) throw ConfigError("environment.depth_water_m must be positive");
    if (!(sound_speed_mps > 0.0)) throw ConfigError("environment.sound_speed_mps must be positive");
    if (std::abs(surface_reflection) > 1.0 || std::abs(bottom_reflection) > 1.0)
      throw ConfigError("reflection coefficients must have modulus at most 1");
    if (max_bounces < 0) throw ConfigError("environment.max_bounces must be non-negative");
    if (!std::isfinite(temperature_c) || !std::isfinite(salinity_ppt) || !(ph > 0.0))
      throw ConfigError("environment water properties must be finite");
  }
};

/// Centered sub-band grid over [f0 - B/2, f0 + B/2].
struct SubbandGrid {
  double f0_hz = 11500.0;
  double bandwidth_hz = 5000.0;
  std::size_t count = 48;

  void validate() const {
    if (count < 1) throw ConfigError("grid.K must be at least 1");
    if (!(bandwidth_hz > 0.0)) throw ConfigError("grid.B must be positive");
    if (!(f0_hz - bandwidth_hz / 2.0 > 0.0)) throw ConfigError("grid band must lie above 0 Hz");
  }
};

/// A transmitter or receiver: horizontal position plus depth (positive down).
struct Node {
  Vec2 p = Vec2::Zero();
  double depth_m = 50.0;
};

struct Arrival {
  Complex amplitude;
  double delay_s = 0.0;

  bool operator==(const Arrival&) const = default;
};

using ArrivalSet = std::vector<Arrival>;

/// N_rx x K complex sub-band gains, rows = receivers.
struct ChannelSnapshot {
  Eigen::MatrixXcd gains;
  bool noisy = false;
};

inline std::vector<double> subband_frequencies(const SubbandGrid& grid) {
  grid.validate();
  std::vector<double> f(grid.count);
  const double width = grid.bandwidth_hz / static_cast<double>(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k)
    f[k] = grid.f0_hz - grid.bandwidth_hz / 2.0 + (static_cast<double>(k) + 0.5) * width;
  return f;
}

/// Seawater absorption in dB/km.
///
/// Thorp's fit (f in kHz) is the baseline at T = 14 C, S = 35 ppt, pH 8:
///   0.11 f^2/(1+f^2) + 44 f^2/(4100+f^2) + 2.75e-4 f^2 + 0.003.
/// The boric-acid relaxation term is scaled by (S/35) exp((pH-8)/0.56), the
/// MgSO4 term by (S/35)(1 + (T-14)/43) and the pure-water term by
/// exp(-(T-14)/27). Each factor is 1 at the baseline and monotone in its
/// variable; the exponents follow the Ainslie-McColm dependencies.
inline double thorp_absorption(double f_hz, const Environment& env) {
  if (!(f_hz > 0.0)) throw ConfigError("absorption frequency must be positive");
  const double f = f_hz / 1000.0;
  const double f2 = f * f;
  const double s = env.salinity_ppt / 35.0;
  const double dt = env.temperature_c - 14.0;
  const double boric = 0.11 * f2 / (1.0 + f2) * s * std::exp((env.ph - 8.0) / 0.56);
  const double mgso4 = 44.0 * f2 / (4100.0 + f2) * s * (1.0 + dt / 43.0);
  const double water = 2.75e-4 * f2 * std::exp(-dt / 27.0);
  return boric + mgso4 + water + 0.003;
}

/// Image-method eigenrays between tx and rx in the flat waveguide, every
/// path with at most env.max_bounces boundary reflections. Amplitudes carry
/// the reflection product, spherical spreading and absorption at carrier_hz.
inline ArrivalSet synthesize_arrivals(const Node& tx, const Node& rx, const Environment& env,
                                      double carrier_hz = 11500.0) {
  env.validate();
  const double depth = env.depth_water_m;
  if (!(tx.depth_m > 0.0 && tx.depth_m < depth) || !(rx.depth_m > 0.0 && rx.depth_m < depth))
    throw ConfigError("node depths must lie strictly inside the water column");
  const double horizontal = (tx.p - rx.p).norm();
  if (horizontal == 0.0 && tx.depth_m == rx.depth_m) throw ConfigError("transmitter and receiver coincide");

  const double absorption = thorp_absorption(carrier_hz, env);
  const double zs = tx.depth_m;
  const double zr = rx.depth_m;

  ArrivalSet arrivals;
  auto add_path = [&](double vertical, int surface, int bottom) {
    if (surface + bottom > env.max_bounces) return;
    const double r = std::hypot(horizontal, vertical);
    Complex refl{1.0, 0.0};
    for (int i = 0; i < surface; ++i) refl *= env.surface_reflection;
    for (int i = 0; i < bottom; ++i) refl *= env.bottom_reflection;
    const double loss = std::pow(10.0, -absorption * r / 20000.0) / r;
    arrivals.push_back({refl * loss, r / env.sound_speed_mps});
  };

  // Four image families per order m: direct-like, surface-first,
  // bottom-first and doubly reflected.
  for (int m = 0; 2 * m <= env.max_bounces; ++m) {
    const double base = 2.0 * m * depth;
    add_path(base + (zr - zs), m, m);
    add_path(base + (zr + zs), m + 1, m);
    add_path(base + 2.0 * depth - (zr + zs), m, m + 1);
    add_path(base + 2.0 * depth - (zr - zs), m + 1, m + 1);
  }
  return arrivals;
}

/// H_k = sum_i a_i exp(-j 2 pi f_k tau_i).
inline std::vector<Complex> frequency_response(const ArrivalSet& arrivals, std::span<const double> freqs) {
  if (arrivals.empty()) throw DataError("frequency response of an empty arrival set");
  std::vector<Complex> h(freqs.size(), Complex{0.0, 0.0});
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    for (const Arrival& a : arrivals) {
      const double phase = -2.0 * std::numbers::pi * freqs[k] * a.delay_s;
      h[k] += a.amplitude * Complex{std::cos(phase), std::sin(phase)};
    }
  }
  return h;
}

inline std::vector<Complex> frequency_response(const ArrivalSet& arrivals, const SubbandGrid& grid) {
  const std::vector<double> f = subband_frequencies(grid);
  return frequency_response(arrivals, std::span<const double>(f));
}

/// Noise-free snapshot for one transmitter position.
inline ChannelSnapshot channel_snapshot(const Node& tx, std::span<const Node> receivers, const Environment& env,
                                        const SubbandGrid& grid) {
  if (receivers.empty()) throw ConfigError("at least one receiver is required");
  const std::vector<double> f = subband_frequencies(grid);
  ChannelSnapshot snap;
  snap.gains.resize(static_cast<Eigen::Index>(receivers.size()), static_cast<Eigen::Index>(grid.count));
  for (std::size_t r = 0; r < receivers.size(); ++r) {
    const std::vector<Complex> h = frequency_response(synthesize_arrivals(tx, receivers[r], env, grid.f0_hz), f);
    for (std::size_t k = 0; k < h.size(); ++k)
      snap.gains(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = h[k];
  }
  return snap;
}

/// Mean of |g|^2.
inline double mean_power(std::span<const Complex> gains) {
  if (gains.empty()) throw DataError("mean power of an empty gain set");
  double acc = 0.0;
  for (const Complex& g : gains) acc += std::norm(g);
  return acc / static_cast<double>(gains.size());
}

/// Per-receiver reference power P_r: mean |H_{r,k}|^2 over the calibration
/// transmitter positions of receiver r (horizontal ranges in [200, 300] m)
/// and over all sub-bands.
inline std::vector<double> reference_power(const std::vector<std::vector<Node>>& calibration, std::span<const Node> receivers,
                                           const Environment& env, const SubbandGrid& grid) {
  if (calibration.size() != receivers.size())
    throw DataError("calibration set count does not match receiver count");
  const std::vector<double> f = subband_frequencies(grid);
  std::vector<double> power(receivers.size());
  for (std::size_t r = 0; r < receivers.size(); ++r) {
    if (calibration[r].empty()) throw DataError("empty calibration set for receiver " + std::to_string(r));
    std::vector<Complex> gains;
    gains.reserve(calibration[r].size() * f.size());
    for (const Node& tx : calibration[r]) {
      const double range = (tx.p - receivers[r].p).norm();
      if (range < 200.0 - 1e-9 || range > 300.0 + 1e-9)
        throw DataError("calibration position outside the 200-300 m range of receiver " + std::to_string(r));
      const std::vector<Complex> h = frequency_response(synthesize_arrivals(tx, receivers[r], env, grid.f0_hz), f);
      gains.insert(gains.end(), h.begin(), h.end());
    }
    power[r] = mean_power(gains);
  }
  return power;
}

/// Random calibration positions: `count` per receiver, uniform range in
/// [200, 300] m and uniform bearing, at the given transmitter depth.
inline std::vector<std::vector<Node>> calibration_positions(std::span<const Node> receivers, std::size_t count,
                                                            double tx_depth_m, std::uint64_t seed) {
  Random rng(seed);
  std::vector<std::vector<Node>> out(receivers.size());
  for (std::size_t r = 0; r < receivers.size(); ++r) {
    for (std::size_t i = 0; i < count; ++i) {
      const double range = rng.uniform(200.0, 300.0);
      const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
      out[r].push_back({receivers[r].p + range * Vec2{std::cos(bearing), std::sin(bearing)}, tx_depth_m});
    }
  }
  return out;
}

/// sigma_r^2 = P_r / 10^(SNR/10).
inline double noise_variance(double reference_power_r, double snr_db) noexcept {
  return reference_power_r / std::pow(10.0, snr_db / 10.0);
}

/// Adds circularly-symmetric complex Gaussian noise with per-receiver
/// variance sigma_r^2 (half per real/imaginary part). snr_db = +inf leaves
/// the gains untouched.
inline ChannelSnapshot add_noise(const ChannelSnapshot& snapshot, double snr_db, std::span<const double> ref_power,
                                 std::uint64_t seed) {
  if (snapshot.noisy) throw DataError("snapshot already carries noise");
  if (ref_power.size() != static_cast<std::size_t>(snapshot.gains.rows()))
    throw DataError("reference power count does not match receiver count");
  if (std::isnan(snr_db)) throw ConfigError("SNR is NaN");
  ChannelSnapshot out = snapshot;
  out.noisy = true;
  if (snr_db == std::numeric_limits<double>::infinity()) return out;
  Random rng(seed);
  for (Eigen::Index r = 0; r < out.gains.rows(); ++r) {
    const double scale = std::sqrt(noise_variance(ref_power[static_cast<std::size_t>(r)], snr_db) / 2.0);
    for (Eigen::Index k = 0; k < out.gains.cols(); ++k) {
      const double re = rng.normal();
      const double im = rng.normal();
      out.gains(r, k) += scale * Complex{re, im};
    }
  }
  return out;
}

}  // namespace uwauth
