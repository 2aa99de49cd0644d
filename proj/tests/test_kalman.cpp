#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "uwauth/kalman.hpp"
#include "uwauth/rng.hpp"

namespace uwauth {
namespace {

using Dense = std::vector<std::vector<double>>;

template <typename M>
Dense dense(const M& m) {
  Dense out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

Dense mul(const Dense& a, const Dense& b) {
  Dense c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Dense add(const Dense& a, const Dense& b, double sb = 1.0) {
  Dense c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) c[i][j] += sb * b[i][j];
  return c;
}

Dense tr(const Dense& a) {
  Dense c(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) c[j][i] = a[i][j];
  return c;
}

Dense inv2(const Dense& s) {
  const double det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
  return {{s[1][1] / det, -s[0][1] / det}, {-s[1][0] / det, s[0][0] / det}};
}

Dense eye(std::size_t n) {
  Dense c(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) c[i][i] = 1.0;
  return c;
}

template <typename M>
void expect_close(const M& got, const Dense& want, double tol) {
  for (Eigen::Index i = 0; i < got.rows(); ++i)
    for (Eigen::Index j = 0; j < got.cols(); ++j)
      EXPECT_NEAR(got(i, j), want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], tol) << i << "," << j;
}

Matrix4 random_spd(Random& rng, double scale) {
  Matrix4 a;
  for (int i = 0; i < 16; ++i) a(i) = rng.normal();
  return scale * (a * a.transpose() + 0.1 * Matrix4::Identity());
}

TEST(InitState, Examples) {
  const KalmanState s = init_state({0.0, 0.0});
  EXPECT_EQ(s.h, Vector4(0.0, 1.0, 0.0, 1.0));
  EXPECT_EQ(s.P, 1000.0 * Matrix4::Identity());
  EXPECT_EQ(init_state({100.0, -50.0}).h, Vector4(100.0, 1.0, -50.0, 1.0));
}

TEST(KalmanConfigTest, ConstantVelocityStructure) {
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.5, 25.0);
  Matrix4 f;
  f << 1, 10, 0, 0, 0, 1, 0, 0, 0, 0, 1, 10, 0, 0, 0, 1;
  EXPECT_EQ(cfg.F, f);
  Matrix24 o;
  o << 1, 0, 0, 0, 0, 0, 1, 0;
  EXPECT_EQ(cfg.O, o);
  EXPECT_DOUBLE_EQ(cfg.Qn(0, 0), 0.25 * 2500.0);
  EXPECT_DOUBLE_EQ(cfg.Qn(0, 1), 0.25 * 500.0);
  EXPECT_DOUBLE_EQ(cfg.Qn(1, 1), 0.25 * 100.0);
  EXPECT_EQ(cfg.Qn(0, 2), 0.0);
  EXPECT_EQ(cfg.R, 625.0 * Eigen::Matrix2d::Identity());
  EXPECT_THROW(KalmanConfig::constant_velocity(0.0, 0.5, 25.0), ConfigError);
}

TEST(TimeUpdate, ConstantVelocityPropagation) {
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.0, 1.0);
  KalmanState s;
  s.h << 0.0, 2.0, 0.0, 0.0;
  s.P.setZero();
  const KalmanState out = time_update(s, cfg);
  EXPECT_EQ(out.h, Vector4(20.0, 2.0, 0.0, 0.0));
  EXPECT_EQ(out.P, Matrix4::Zero());
}

TEST(TimeUpdate, MatchesNaiveOracle) {
  Random rng(1);
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.3, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    KalmanState s;
    for (int i = 0; i < 4; ++i) s.h(i) = rng.normal(0.0, 100.0);
    s.P = random_spd(rng, 10.0);
    const KalmanState out = time_update(s, cfg);
    const Dense f = dense(cfg.F);
    expect_close(out.h, mul(f, dense(s.h)), 1e-9);
    expect_close(out.P, add(mul(mul(f, dense(s.P)), tr(f)), dense(cfg.Qn)), 1e-9);
  }
}

TEST(MeasurementUpdate, ZeroPriorCovarianceIgnoresMeasurement) {
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.1, 5.0);
  KalmanState s;
  s.h << 10.0, 1.0, 20.0, -1.0;
  s.P.setZero();
  EXPECT_EQ(kalman_gain(s, cfg), Matrix42::Zero());
  const KalmanState out = measurement_update(s, {999.0, -999.0}, cfg);
  EXPECT_EQ(out.h, s.h);
  EXPECT_EQ(out.P, Matrix4::Zero());
}

TEST(MeasurementUpdate, LargeNoiseBarelyMoves) {
  KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.1, 1.0);
  cfg.R = 1e9 * Eigen::Matrix2d::Identity();
  KalmanState s = init_state({0.0, 0.0});
  const Vec2 z{500.0, -300.0};
  const KalmanState out = measurement_update(s, z, cfg);
  EXPECT_LE(std::abs(out.h(0) - s.h(0)), 1e-3 * 500.0);
  EXPECT_LE(std::abs(out.h(2) - s.h(2)), 1e-3 * 300.0);
}

TEST(MeasurementUpdate, MatchesNaiveOracle) {
  Random rng(2);
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.3, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    KalmanState s;
    for (int i = 0; i < 4; ++i) s.h(i) = rng.normal(0.0, 100.0);
    s.P = random_spd(rng, 10.0);
    const Vec2 z{rng.normal(0.0, 100.0), rng.normal(0.0, 100.0)};
    const KalmanState out = measurement_update(s, z, cfg);

    const Dense p = dense(s.P), o = dense(cfg.O), r = dense(cfg.R);
    const Dense k = mul(mul(p, tr(o)), inv2(add(mul(mul(o, p), tr(o)), r)));
    const Dense h = add(dense(s.h), mul(k, add(dense(z), mul(o, dense(s.h)), -1.0)));
    const Dense ikh = add(eye(4), mul(k, o), -1.0);
    const Dense pp = add(mul(mul(ikh, p), tr(ikh)), mul(mul(k, r), tr(k)));
    expect_close(kalman_gain(s, cfg), k, 1e-12);
    expect_close(out.h, h, 1e-9);
    expect_close(out.P, pp, 1e-9);
  }
}

TEST(MeasurementUpdate, SingularInnovationRejected) {
  KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.0, 0.0);
  KalmanState s;
  s.P.setZero();
  EXPECT_THROW(kalman_gain(s, cfg), NumericalError);
}

TEST(PredictPosition, Examples) {
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.0, 1.0);
  KalmanState s;
  s.h << 0.0, 2.0, 0.0, 0.0;
  EXPECT_EQ(predict_position(s, cfg), Vec2(20.0, 0.0));
}

TEST(PredictPosition, StationaryExactMeasurements) {
  KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.0, 1e-6);
  KalmanState s;
  s.h << 0.0, 0.0, 0.0, 0.0;
  s.P = 1e3 * Matrix4::Identity();
  s.P(1, 1) = 0.0;
  s.P(3, 3) = 0.0;
  const Vec2 z{123.0, 456.0};
  const KalmanState c = measurement_update(s, z, cfg);
  EXPECT_LE((predict_position(c, cfg) - z).norm(), 1e-6);
}

TEST(KalmanTrackerTest, GapRejected) {
  KalmanTracker tracker(KalmanConfig::constant_velocity(10.0, 0.02, 25.0));
  EXPECT_FALSE(tracker.prediction().has_value());
  tracker.consume({0.0, {1.0, 1.0}});
  tracker.consume({10.0, {2.0, 2.0}});
  EXPECT_THROW(tracker.consume({30.0, {3.0, 3.0}}), StreamError);
}

TEST(TrackKalman, OnePredictionPerInstantAfterFirst) {
  std::vector<PositionEstimate> est;
  for (int i = 0; i < 50; ++i) est.push_back({10.0 * i, {1.0 * i, 2.0 * i}});
  const auto preds = track_kalman(est, KalmanConfig::constant_velocity(10.0, 0.02, 25.0));
  ASSERT_EQ(preds.size(), 49u);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(preds[i].t, est[i + 1].t);
    EXPECT_EQ(preds[i].estimate, est[i + 1].p);
  }
}

TEST(TrackKalman, ExactTrackConverges) {
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.0, 1.0);
  const Vec2 p0{400.0, 900.0};
  const Vec2 v{1.3, -0.7};
  std::vector<PositionEstimate> est;
  for (int i = 0; i <= 40; ++i) est.push_back({10.0 * i, p0 + 10.0 * i * v});
  const auto preds = track_kalman(est, cfg);
  std::vector<double> err;
  for (const auto& p : preds) err.push_back((p.predicted - p.estimate).norm());
  EXPECT_LE(err[19], 0.1);
  for (std::size_t i = 11; i < err.size(); ++i) EXPECT_LE(err[i], err[i - 1] + 1e-12) << i;
}

TEST(JosephForm, SymmetricPsdAfterManyUpdates) {
  Random rng(77);
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.02, 50.0);
  KalmanState s = init_state({1000.0, 1000.0});
  for (int i = 0; i < 10'000; ++i) {
    s = measurement_update(time_update(s, cfg), {rng.uniform(0.0, 2000.0), rng.uniform(0.0, 2000.0)}, cfg);
    ASSERT_LE((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
  Eigen::SelfAdjointEigenSolver<Matrix4> eig(0.5 * (s.P + s.P.transpose()));
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
}

TEST(GainBound, PositionGainSpectralNormAtMostOne) {
  Random rng(5);
  for (double q : {0.0, 0.02, 0.5}) {
    for (double r : {1.0, 25.0, 100.0}) {
      const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, q, r);
      KalmanState s = init_state({0.0, 0.0});
      for (int i = 0; i < 200; ++i) {
        const KalmanState prior = time_update(s, cfg);
        const Eigen::Matrix2d ok = cfg.O * kalman_gain(prior, cfg);
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(ok);
        ASSERT_LE(svd.singularValues()(0), 1.0 + 1e-9);
        s = measurement_update(prior, {rng.normal(), rng.normal()}, cfg);
      }
    }
  }
}

TEST(Smoothing, BeatsRawMeasurementNoise) {
  const double sigma = 50.0;
  const KalmanConfig cfg = KalmanConfig::constant_velocity(10.0, 0.02, sigma);
  std::vector<double> err;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Trajectory traj = simulate_trajectory(GaussMarkovParams{}, 50, derive_seed(100, k));
    const auto est = oracle_stream(traj, {sigma}, derive_seed(200, k));
    const auto preds = track_kalman(est, cfg);
    for (std::size_t i = 0; i < preds.size(); ++i) err.push_back((preds[i].predicted - traj.samples[i + 1].p).norm());
  }
  std::nth_element(err.begin(), err.begin() + static_cast<std::ptrdiff_t>(err.size() / 2), err.end());
  EXPECT_LT(err[err.size() / 2], sigma * std::sqrt(2.0 * std::numbers::ln2));
}

}  // namespace
}  // namespace uwauth
