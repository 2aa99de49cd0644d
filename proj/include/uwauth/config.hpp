#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "uwauth/channel.hpp"
#include "uwauth/error.hpp"
#include "uwauth/estimators.hpp"
#include "uwauth/kalman.hpp"
#include "uwauth/lstm.hpp"
#include "uwauth/mobility.hpp"
#include "uwauth/rnn.hpp"

namespace uwauth {

enum class PredictorKind { kKalman, kRnn };

struct KalmanSettings {
  std::optional<double> period_s;  // defaults to mobility.T
  double q_accel = 0.02;
  std::optional<double> r_std;     // defaults to estimator.sigma_pos
};

/// Everything one Monte-Carlo campaign needs. Configuration files are JSON;
/// nested objects flatten to dotted keys ("kalman.q_accel"), which are also
/// the keys accepted by --set overrides.
struct ScenarioConfig {
  GaussMarkovParams mobility{};
  std::size_t trajectory_length = 50;
  std::vector<Node> receivers;
  Environment environment{};
  SubbandGrid grid{};
  double snr_db = 20.0;
  std::size_t calibration_samples = 64;
  bool export_channels = false;
  OracleConfig estimator{};
  PredictorKind predictor = PredictorKind::kKalman;
  KalmanSettings kalman{};
  std::string rnn_model_path;
  RnnArchitecture rnn_architecture{};
  TrainConfig train{};
  std::size_t train_trajectories = 400;
  std::size_t validation_trajectories = 100;
  AttackScenario attack{};
  double lambda_m2 = 1e4;
  std::size_t pilot_count = 10;
  std::size_t n_legit = 500;
  std::size_t n_attack = 500;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  ScenarioConfig() : receivers(default_receivers()) {}

  /// Ten receivers on x = 1970 m between y = 1230 m and 1320 m, 50 m deep.
  static std::vector<Node> default_receivers() {
    std::vector<Node> rx;
    for (int i = 0; i < 10; ++i) rx.push_back({Vec2{1970.0, 1230.0 + 10.0 * i}, 50.0});
    return rx;
  }

  KalmanConfig kalman_config() const {
    return KalmanConfig::constant_velocity(kalman.period_s.value_or(mobility.period_s), kalman.q_accel,
                                           kalman.r_std.value_or(estimator.sigma_pos));
  }

  void validate() const {
    mobility.validate();
    if (trajectory_length < 2) throw ConfigError("mobility.M must be at least 2");
    if (receivers.empty()) throw ConfigError("at least one receiver is required");
    environment.validate();
    grid.validate();
    estimator.validate();
    if (n_attack > 0) attack.validate(trajectory_length);
    if (!(lambda_m2 >= 0.0)) throw ConfigError("auth.lambda_m2 must be non-negative");
    if (workers == 0) throw ConfigError("workers must be positive");
    if (calibration_samples == 0) throw ConfigError("channel.calibration_samples must be positive");
    if (predictor == PredictorKind::kKalman) (void)kalman_config();
    train.validate();
  }
};

namespace detail {

inline void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, nlohmann::json>& out) {
  if (j.is_object() && prefix != "receivers") {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out[prefix] = j;
  }
}

inline Complex json_complex(const nlohmann::json& v) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2) return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError("reflection coefficient must be a number or [re, im]");
}

}  // namespace detail

/// Applies one dotted key. Values are JSON (numbers, strings, booleans, arrays).
inline void apply_setting(ScenarioConfig& cfg, const std::string& key, const nlohmann::json& v) {
  try {
    auto num = [&] { return v.get<double>(); };
    auto count = [&] {
      const auto n = v.get<long long>();
      if (n < 0) throw ConfigError(key + " must be non-negative");
      return static_cast<std::size_t>(n);
    };
    if (key == "mobility.alpha") cfg.mobility.alpha = num();
    else if (key == "mobility.T") cfg.mobility.period_s = num();
    else if (key == "mobility.sigma_v") cfg.mobility.sigma_v = num();
    else if (key == "mobility.v0") cfg.mobility.v0 = num();
    else if (key == "mobility.depth_m") cfg.mobility.depth_m = num();
    else if (key == "mobility.area.x_min") cfg.mobility.area.x_min = num();
    else if (key == "mobility.area.x_max") cfg.mobility.area.x_max = num();
    else if (key == "mobility.area.y_min") cfg.mobility.area.y_min = num();
    else if (key == "mobility.area.y_max") cfg.mobility.area.y_max = num();
    else if (key == "mobility.M") cfg.trajectory_length = count();
    else if (key == "receivers") {
      cfg.receivers.clear();
      for (const auto& r : v) {
        if (r.is_array() && (r.size() == 2 || r.size() == 3))
          cfg.receivers.push_back({Vec2{r[0].get<double>(), r[1].get<double>()}, r.size() == 3 ? r[2].get<double>() : cfg.mobility.depth_m});
        else if (r.is_object())
          cfg.receivers.push_back({Vec2{r.at("x").get<double>(), r.at("y").get<double>()}, r.value("depth", cfg.mobility.depth_m)});
        else
          throw ConfigError("receivers entries must be [x, y, depth] or {x, y, depth}");
      }
    }
    else if (key == "environment.depth_water_m") cfg.environment.depth_water_m = num();
    else if (key == "environment.sound_speed_mps") cfg.environment.sound_speed_mps = num();
    else if (key == "environment.surface_reflection") cfg.environment.surface_reflection = detail::json_complex(v);
    else if (key == "environment.bottom_reflection") cfg.environment.bottom_reflection = detail::json_complex(v);
    else if (key == "environment.max_bounces") cfg.environment.max_bounces = static_cast<int>(count());
    else if (key == "environment.temperature_c") cfg.environment.temperature_c = num();
    else if (key == "environment.salinity_ppt") cfg.environment.salinity_ppt = num();
    else if (key == "environment.ph") cfg.environment.ph = num();
    else if (key == "grid.f0_hz") cfg.grid.f0_hz = num();
    else if (key == "grid.bandwidth_hz") cfg.grid.bandwidth_hz = num();
    else if (key == "grid.K") cfg.grid.count = count();
    else if (key == "channel.snr_db") cfg.snr_db = num();
    else if (key == "channel.calibration_samples") cfg.calibration_samples = count();
    else if (key == "channel.export") cfg.export_channels = v.get<bool>();
    else if (key == "estimator.kind") {
      if (v.get<std::string>() != "oracle") throw ConfigError("estimator.kind must be \"oracle\" (external estimates enter through files)");
    }
    else if (key == "estimator.sigma_pos") cfg.estimator.sigma_pos = num();
    else if (key == "predictor.kind") {
      const auto s = v.get<std::string>();
      if (s == "kalman") cfg.predictor = PredictorKind::kKalman;
      else if (s == "rnn") cfg.predictor = PredictorKind::kRnn;
      else throw ConfigError("predictor.kind must be \"kalman\" or \"rnn\"");
    }
    else if (key == "kalman.T") cfg.kalman.period_s = num();
    else if (key == "kalman.q_accel") cfg.kalman.q_accel = num();
    else if (key == "kalman.r_std") cfg.kalman.r_std = num();
    else if (key == "rnn.model") cfg.rnn_model_path = v.get<std::string>();
    else if (key == "rnn.hidden") cfg.rnn_architecture.hidden = v.get<std::vector<Eigen::Index>>();
    else if (key == "rnn.dense_layers") cfg.rnn_architecture.dense_layers = count();
    else if (key == "rnn.dropout") cfg.rnn_architecture.dropout_rate = num();
    else if (key == "train.batch") cfg.train.batch = count();
    else if (key == "train.epochs") cfg.train.epochs = count();
    else if (key == "train.lr_start") cfg.train.lr_start = num();
    else if (key == "train.lr_end") cfg.train.lr_end = num();
    else if (key == "train.weight_decay") cfg.train.weight_decay = num();
    else if (key == "train.seed") cfg.train.seed = v.get<std::uint64_t>();
    else if (key == "train.trajectories") cfg.train_trajectories = count();
    else if (key == "train.validation") cfg.validation_trajectories = count();
    else if (key == "attack.onset_index") cfg.attack.onset_index = count();
    else if (key == "attack.standoff_m") cfg.attack.standoff_m = num();
    else if (key == "attack.eve_v0") cfg.attack.eve_v0 = num();
    else if (key == "attack.eve_heading_halfwidth") cfg.attack.eve_heading_halfwidth = num();
    else if (key == "auth.lambda_m2") cfg.lambda_m2 = num();
    else if (key == "auth.pilot_count") cfg.pilot_count = count();
    else if (key == "trials.legit") cfg.n_legit = count();
    else if (key == "trials.attack") cfg.n_attack = count();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else if (key == "workers") cfg.workers = count();
    else throw ConfigError("unknown configuration key '" + key + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

/// Parses a --set style "key=value"; the value is JSON, falling back to a
/// plain string.
inline void apply_override(ScenarioConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  apply_setting(cfg, key, value);
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ScenarioConfig cfg;
  std::map<std::string, nlohmann::json> flat;
  detail::flatten(j, "", flat);
  // Mobility first so receiver depth defaults see mobility.depth_m.
  for (const auto& [key, value] : flat)
    if (key.rfind("mobility.", 0) == 0) apply_setting(cfg, key, value);
  for (const auto& [key, value] : flat)
    if (key.rfind("mobility.", 0) != 0) apply_setting(cfg, key, value);
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("configuration " + path + " is not valid JSON: " + e.what());
  }
}

/// Full snapshot of the effective configuration (written as config.json).
inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["mobility"] = {{"alpha", c.mobility.alpha}, {"T", c.mobility.period_s}, {"sigma_v", c.mobility.sigma_v}, {"v0", c.mobility.v0},
                   {"depth_m", c.mobility.depth_m}, {"M", c.trajectory_length},
                   {"area", {{"x_min", c.mobility.area.x_min}, {"x_max", c.mobility.area.x_max},
                             {"y_min", c.mobility.area.y_min}, {"y_max", c.mobility.area.y_max}}}};
  nlohmann::json rx = nlohmann::json::array();
  for (const Node& r : c.receivers) rx.push_back({r.p.x(), r.p.y(), r.depth_m});
  j["receivers"] = rx;
  j["environment"] = {{"depth_water_m", c.environment.depth_water_m}, {"sound_speed_mps", c.environment.sound_speed_mps},
                      {"surface_reflection", {c.environment.surface_reflection.real(), c.environment.surface_reflection.imag()}},
                      {"bottom_reflection", {c.environment.bottom_reflection.real(), c.environment.bottom_reflection.imag()}},
                      {"max_bounces", c.environment.max_bounces}, {"temperature_c", c.environment.temperature_c},
                      {"salinity_ppt", c.environment.salinity_ppt}, {"ph", c.environment.ph}};
  j["grid"] = {{"f0_hz", c.grid.f0_hz}, {"bandwidth_hz", c.grid.bandwidth_hz}, {"K", c.grid.count}};
  j["channel"] = {{"snr_db", c.snr_db}, {"calibration_samples", c.calibration_samples}, {"export", c.export_channels}};
  j["estimator"] = {{"kind", "oracle"}, {"sigma_pos", c.estimator.sigma_pos}};
  j["predictor"] = {{"kind", c.predictor == PredictorKind::kKalman ? "kalman" : "rnn"}};
  const KalmanConfig kc = c.kalman_config();
  j["kalman"] = {{"T", kc.period_s}, {"q_accel", c.kalman.q_accel}, {"r_std", c.kalman.r_std.value_or(c.estimator.sigma_pos)}};
  j["rnn"] = {{"model", c.rnn_model_path}, {"hidden", c.rnn_architecture.hidden}, {"dense_layers", c.rnn_architecture.dense_layers},
              {"dropout", c.rnn_architecture.dropout_rate}};
  j["train"] = {{"batch", c.train.batch}, {"epochs", c.train.epochs}, {"lr_start", c.train.lr_start}, {"lr_end", c.train.lr_end},
                {"weight_decay", c.train.weight_decay}, {"seed", c.train.seed}, {"trajectories", c.train_trajectories},
                {"validation", c.validation_trajectories}};
  j["attack"] = {{"onset_index", c.attack.onset_index}, {"standoff_m", c.attack.standoff_m}, {"eve_v0", c.attack.eve_v0},
                 {"eve_heading_halfwidth", c.attack.eve_heading_halfwidth}};
  j["auth"] = {{"lambda_m2", c.lambda_m2}, {"pilot_count", c.pilot_count}};
  j["trials"] = {{"legit", c.n_legit}, {"attack", c.n_attack}};
  j["seed"] = c.seed;
  return j;
}

}  // namespace uwauth
