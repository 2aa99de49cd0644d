#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uwauth/error.hpp"
#include "uwauth/estimators.hpp"

namespace uwauth {

using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;
using Matrix24 = Eigen::Matrix<double, 2, 4>;
using Matrix42 = Eigen::Matrix<double, 4, 2>;

/// Constant-velocity model over the state (x, v_x, y, v_y).
struct KalmanConfig {
  double period_s = 10.0;
  Matrix4 F = Matrix4::Identity();
  Matrix24 O = Matrix24::Zero();
  Matrix4 Qn = Matrix4::Zero();
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();

  /// F has the per-axis block [1 T; 0 1] and O picks x and y. Process noise
  /// is the white-acceleration form q_accel^2 [T^4/4 T^3/2; T^3/2 T^2] per
  /// axis; R = r_std^2 I.
  static KalmanConfig constant_velocity(double period_s, double q_accel, double r_std) {
    if (!(period_s > 0.0)) throw ConfigError("kalman.T must be positive");
    if (!(q_accel >= 0.0)) throw ConfigError("kalman.q_accel must be non-negative");
    if (!(r_std >= 0.0)) throw ConfigError("kalman.r_std must be non-negative");
    KalmanConfig cfg;
    const double t = period_s;
    cfg.period_s = t;
    cfg.F(0, 1) = t;
    cfg.F(2, 3) = t;
    cfg.O(0, 0) = 1.0;
    cfg.O(1, 2) = 1.0;
    Eigen::Matrix2d block;
    block << t * t * t * t / 4.0, t * t * t / 2.0, t * t * t / 2.0, t * t;
    block *= q_accel * q_accel;
    cfg.Qn.block<2, 2>(0, 0) = block;
    cfg.Qn.block<2, 2>(2, 2) = block;
    cfg.R = r_std * r_std * Eigen::Matrix2d::Identity();
    return cfg;
  }
};

struct KalmanState {
  Vector4 h = Vector4::Zero();
  Matrix4 P = Matrix4::Identity();
};

/// h(0) = (x0, 1, y0, 1), P(0) = 1e3 I.
inline KalmanState init_state(const Vec2& first_estimate) {
  KalmanState s;
  s.h << first_estimate.x(), 1.0, first_estimate.y(), 1.0;
  s.P = 1e3 * Matrix4::Identity();
  return s;
}

inline KalmanState time_update(const KalmanState& s, const KalmanConfig& cfg) {
  KalmanState out;
  out.h = cfg.F * s.h;
  out.P = cfg.F * s.P * cfg.F.transpose() + cfg.Qn;
  return out;
}

namespace detail {

/// Inverse of a symmetric 2x2 innovation covariance, rejecting singular or
/// badly conditioned inputs.
inline Eigen::Matrix2d invert_innovation(const Eigen::Matrix2d& s) {
  const double a = s(0, 0);
  const double b = 0.5 * (s(0, 1) + s(1, 0));
  const double d = s(1, 1);
  const double mid = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  const double lmax = mid + rad;
  const double lmin = mid - rad;
  const double det = a * d - b * b;
  if (!(lmin > 0.0) || !(lmax / lmin < 1e12) || !(det > 0.0)) {
    std::ostringstream msg;
    msg << "singular innovation covariance (eigenvalues " << lmin << ", " << lmax << "; condition "
        << (lmin > 0.0 ? lmax / lmin : INFINITY) << ")";
    throw NumericalError(msg.str());
  }
  Eigen::Matrix2d inv;
  inv << d, -b, -b, a;
  return inv / det;
}

}  // namespace detail

inline Matrix42 kalman_gain(const KalmanState& s, const KalmanConfig& cfg) {
  const Eigen::Matrix2d innovation = cfg.O * s.P * cfg.O.transpose() + cfg.R;
  return s.P * cfg.O.transpose() * detail::invert_innovation(innovation);
}

/// Corrects a predicted state with measurement z. Covariance uses the
/// Joseph form (I - KO) P (I - KO)^T + K R K^T.
inline KalmanState measurement_update(const KalmanState& s, const Vec2& z, const KalmanConfig& cfg) {
  const Matrix42 k = kalman_gain(s, cfg);
  KalmanState out;
  out.h = s.h + k * (z - cfg.O * s.h);
  const Matrix4 ikh = Matrix4::Identity() - k * cfg.O;
  out.P = ikh * s.P * ikh.transpose() + k * cfg.R * k.transpose();
  return out;
}

/// p_hat(t) = O F h_corrected(t - T).
inline Vec2 predict_position(const KalmanState& corrected, const KalmanConfig& cfg) {
  return cfg.O * (cfg.F * corrected.h);
}

/// Streaming one-step-ahead predictor. prediction() is the position expected
/// at the next instant and is available once one estimate has been consumed.
class KalmanTracker {
 public:
  explicit KalmanTracker(KalmanConfig cfg) : cfg_(std::move(cfg)) {}

  std::optional<Vec2> prediction() const {
    if (!corrected_) return std::nullopt;
    return predict_position(*corrected_, cfg_);
  }

  void consume(const PositionEstimate& est) {
    if (!corrected_) {
      prior_ = init_state(est.p);
    } else {
      if (!is_next_instant(last_t_, est.t, cfg_.period_s))
        throw StreamError("timestamp gap at t=" + std::to_string(est.t) + " s");
      prior_ = time_update(*corrected_, cfg_);
    }
    corrected_ = measurement_update(prior_, est.p, cfg_);
    last_t_ = est.t;
  }

  const std::optional<KalmanState>& state() const noexcept { return corrected_; }
  const KalmanConfig& config() const noexcept { return cfg_; }

 private:
  KalmanConfig cfg_;
  KalmanState prior_;
  std::optional<KalmanState> corrected_;
  double last_t_ = 0.0;
};

/// Runs the tracker over a regular estimate stream: one prediction for every
/// instant from the second estimate on, computed before that estimate is used.
inline std::vector<Prediction> track_kalman(const std::vector<PositionEstimate>& estimates, const KalmanConfig& cfg) {
  KalmanTracker tracker(cfg);
  std::vector<Prediction> out;
  out.reserve(estimates.empty() ? 0 : estimates.size() - 1);
  for (const PositionEstimate& est : estimates) {
    if (auto p = tracker.prediction()) out.push_back({est.t, *p, est.p});
    tracker.consume(est);
  }
  return out;
}

}  // namespace uwauth
