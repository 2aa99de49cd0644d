#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwauth/error.hpp"
#include "uwauth/estimators.hpp"

namespace uwauth {

/// Authentication metric and decision at one instant. `decision` is empty
/// during the pilot phase.
struct AuthSample {
  std::size_t index = 0;
  double t = 0.0;
  double error_m2 = 0.0;
  std::optional<int> decision;
  int truth = 0;
};

struct DetPoint {
  double lambda_m2 = 0.0;
  double p_fa = 0.0;
  double p_md = 0.0;
};

struct DetCurve {
  std::vector<DetPoint> points;
};

struct Rates {
  double p_fa = 0.0;
  double p_md = 0.0;
};

inline double squared_error(const Vec2& predicted, const Vec2& estimated) noexcept {
  return (predicted - estimated).squaredNorm();
}

/// 0 (authentic) iff E < lambda.
inline int decide(double error_m2, double lambda_m2) noexcept { return error_m2 < lambda_m2 ? 0 : 1; }

/// Runs the per-message test over a prediction stream. predictions[j] must
/// refer to instant index j + 1 of `truth` (the first estimate only seeds the
/// predictor). Instants with index <= pilot_count are pilot messages: their
/// metric is reported but no decision is taken.
inline std::vector<AuthSample> run_protocol(std::span<const Prediction> predictions, std::span<const int> truth,
                                            double lambda_m2, std::size_t pilot_count, double period_s) {
  if (!(lambda_m2 >= 0.0)) throw ConfigError("threshold lambda must be non-negative");
  if (predictions.size() + 1 != truth.size())
    throw StreamError("prediction stream does not align with the labelled trace (" + std::to_string(predictions.size()) +
                      " predictions for " + std::to_string(truth.size()) + " instants)");
  std::vector<AuthSample> out;
  out.reserve(predictions.size());
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    if (j > 0 && !is_next_instant(predictions[j - 1].t, predictions[j].t, period_s))
      throw StreamError("prediction stream is not regularly sampled at t=" + std::to_string(predictions[j].t));
    AuthSample s;
    s.index = j + 1;
    s.t = predictions[j].t;
    s.error_m2 = squared_error(predictions[j].predicted, predictions[j].estimate);
    s.truth = truth[j + 1];
    if (s.index > pilot_count) s.decision = decide(s.error_m2, lambda_m2);
    out.push_back(s);
  }
  return out;
}

/// Per-message false-alarm and missed-detection rates over decided samples.
inline Rates empirical_rates(std::span<const AuthSample> samples, double lambda_m2) {
  std::size_t legit = 0, attack = 0, false_alarms = 0, misses = 0;
  for (const AuthSample& s : samples) {
    if (!s.decision) continue;
    const int d = decide(s.error_m2, lambda_m2);
    if (s.truth == 0) {
      ++legit;
      false_alarms += d == 1;
    } else {
      ++attack;
      misses += d == 0;
    }
  }
  if (legit == 0 || attack == 0) throw DataError("rates undefined: a hypothesis class has no decided samples");
  return {static_cast<double>(false_alarms) / static_cast<double>(legit),
          static_cast<double>(misses) / static_cast<double>(attack)};
}

/// Exact empirical DET: one point per distinct threshold among 0, every
/// observed metric value and +inf.
inline DetCurve det_curve(std::vector<double> legit, std::vector<double> attack) {
  if (legit.empty() || attack.empty()) throw DataError("DET curve needs both legitimate and attack metrics");
  std::sort(legit.begin(), legit.end());
  std::sort(attack.begin(), attack.end());
  std::vector<double> lambdas;
  lambdas.reserve(legit.size() + attack.size() + 2);
  lambdas.push_back(0.0);
  lambdas.insert(lambdas.end(), legit.begin(), legit.end());
  lambdas.insert(lambdas.end(), attack.begin(), attack.end());
  lambdas.push_back(std::numeric_limits<double>::infinity());
  std::sort(lambdas.begin(), lambdas.end());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

  DetCurve curve;
  curve.points.reserve(lambdas.size());
  const auto nl = static_cast<double>(legit.size());
  const auto na = static_cast<double>(attack.size());
  for (double lambda : lambdas) {
    // Flagged iff E >= lambda; missed iff E < lambda.
    const auto below_legit = std::lower_bound(legit.begin(), legit.end(), lambda) - legit.begin();
    const auto below_attack = std::lower_bound(attack.begin(), attack.end(), lambda) - attack.begin();
    curve.points.push_back({lambda, (nl - static_cast<double>(below_legit)) / nl, static_cast<double>(below_attack) / na});
  }
  return curve;
}

/// Splits decided samples into legitimate and attack metric multisets.
inline std::pair<std::vector<double>, std::vector<double>> split_by_truth(std::span<const AuthSample> samples) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const AuthSample& s : samples) {
    if (!s.decision) continue;
    (s.truth == 0 ? out.first : out.second).push_back(s.error_m2);
  }
  return out;
}

}  // namespace uwauth
