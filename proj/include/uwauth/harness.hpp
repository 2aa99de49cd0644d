#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "uwauth/auth.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/channel_io.hpp"
#include "uwauth/config.hpp"
#include "uwauth/csv.hpp"
#include "uwauth/estimators.hpp"
#include "uwauth/kalman.hpp"
#include "uwauth/mobility.hpp"
#include "uwauth/rnn.hpp"
#include "uwauth/scm.hpp"
#include "uwauth/stats.hpp"

namespace uwauth {

/// Stream ids under a trial seed.
namespace seed_stream {
inline constexpr std::uint64_t kAlice = 1;
inline constexpr std::uint64_t kEve = 2;
inline constexpr std::uint64_t kEstimator = 3;
inline constexpr std::uint64_t kNoise = 4;
inline constexpr std::uint64_t kCalibration = 0xCA1B;
inline constexpr std::uint64_t kTrainData = 0x7EA1;
inline constexpr std::uint64_t kValidationData = 0x7A11;
inline constexpr std::uint64_t kModelInit = 0x1417;
}  // namespace seed_stream

/// Seed of trial `id` (legitimate trials first, then attack trials).
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t id) noexcept { return derive_seed(master, id); }

struct TrialData {
  std::size_t id = 0;
  bool attack = false;
  LabeledTrajectory trace;
  std::vector<PositionEstimate> estimates;
  ArrivalMap arrivals;
  std::vector<ScmTensor> scm;
};

struct TrialResult {
  TrialData data;
  std::vector<Prediction> predictions;
  std::vector<AuthSample> auth;
};

struct MonteCarloResult {
  std::vector<TrialResult> trials;
  RunSummary summary;
  std::optional<DetCurve> det;
};

/// Per-receiver reference powers for the configured geometry, or empty
/// when channels are not simulated.
inline std::vector<double> campaign_reference_power(const ScenarioConfig& cfg) {
  const auto calib = calibration_positions(cfg.receivers, cfg.calibration_samples, cfg.mobility.depth_m,
                                           derive_seed(cfg.seed, seed_stream::kCalibration));
  return reference_power(calib, cfg.receivers, cfg.environment, cfg.grid);
}

/// Mobility, optional channel and SCM synthesis, and position estimates for
/// one trial. Attack trials hand over to Eve at cfg.attack.onset_index.
inline TrialData simulate_trial(const ScenarioConfig& cfg, std::size_t id, bool attack, std::span<const double> ref_power = {}) {
  const std::uint64_t seed = trial_seed(cfg.seed, id);
  TrialData d;
  d.id = id;
  d.attack = attack;
  const Trajectory alice = simulate_trajectory(cfg.mobility, cfg.trajectory_length, derive_seed(seed, seed_stream::kAlice));
  if (attack) {
    const Trajectory eve = spawn_attacker(alice, cfg.attack, cfg.mobility, derive_seed(seed, seed_stream::kEve));
    d.trace = compose_attack_trace(alice, eve, cfg.attack.onset_index);
  } else {
    d.trace = legitimate_trace(alice);
  }
  d.estimates = oracle_stream(d.trace.trace, cfg.estimator, derive_seed(seed, seed_stream::kEstimator));

  if (!ref_power.empty()) {
    const std::vector<double> freqs = subband_frequencies(cfg.grid);
    for (std::size_t l = 0; l < d.trace.trace.size(); ++l) {
      const Node tx{d.trace.trace.samples[l].p, cfg.mobility.depth_m};
      ChannelSnapshot snap;
      snap.gains.resize(static_cast<Eigen::Index>(cfg.receivers.size()), static_cast<Eigen::Index>(freqs.size()));
      for (std::size_t r = 0; r < cfg.receivers.size(); ++r) {
        ArrivalSet arr = synthesize_arrivals(tx, cfg.receivers[r], cfg.environment, cfg.grid.f0_hz);
        const std::vector<Complex> h = frequency_response(arr, freqs);
        for (std::size_t k = 0; k < h.size(); ++k)
          snap.gains(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = h[k];
        d.arrivals.emplace(std::make_pair(static_cast<std::int64_t>(l), static_cast<std::int64_t>(r)), std::move(arr));
      }
      const ChannelSnapshot noisy = add_noise(snap, cfg.snr_db, ref_power, derive_seed(derive_seed(seed, seed_stream::kNoise), l));
      ScmTensor tensor = scm_from_snapshot(noisy);
      preprocess(tensor);
      d.scm.push_back(std::move(tensor));
    }
  }
  return d;
}

/// One-step predictions with the configured predictor.
inline std::vector<Prediction> run_predictor(const ScenarioConfig& cfg, const std::vector<PositionEstimate>& estimates,
                                             const RnnModel* model) {
  if (cfg.predictor == PredictorKind::kKalman) return track_kalman(estimates, cfg.kalman_config());
  if (model == nullptr) throw ConfigError("the rnn predictor needs a trained model (rnn.model)");
  return predict_next(*model, estimates, cfg.kalman.period_s.value_or(cfg.mobility.period_s));
}

inline TrialResult run_trial(const ScenarioConfig& cfg, std::size_t id, bool attack, const RnnModel* model,
                             std::span<const double> ref_power = {}) {
  TrialResult r;
  r.data = simulate_trial(cfg, id, attack, ref_power);
  r.predictions = run_predictor(cfg, r.data.estimates, model);
  r.auth = run_protocol(r.predictions, r.data.trace.labels, cfg.lambda_m2, cfg.pilot_count, cfg.mobility.period_s);
  return r;
}

/// Predicted position against the true position at every prediction
/// instant where Alice transmits.
inline std::vector<ErrorSample> prediction_errors(const TrialResult& r) {
  std::vector<ErrorSample> out;
  for (std::size_t j = 0; j < r.predictions.size(); ++j) {
    const std::size_t idx = j + 1;
    if (r.data.trace.labels[idx] != 0) continue;
    out.push_back({r.predictions[j].t, r.data.trace.trace.samples[idx].p, r.predictions[j].predicted});
  }
  return out;
}

/// Runs f(i) for i in [0, n) on `workers` threads. Results must be written
/// to per-index slots; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline MonteCarloResult aggregate(std::vector<TrialResult> trials, double lambda_m2) {
  MonteCarloResult out;
  out.trials = std::move(trials);
  std::vector<ErrorSample> errors;
  std::vector<AuthSample> samples;
  for (const TrialResult& t : out.trials) {
    const auto e = prediction_errors(t);
    errors.insert(errors.end(), e.begin(), e.end());
    samples.insert(samples.end(), t.auth.begin(), t.auth.end());
  }
  if (!errors.empty()) out.summary = summarize_errors(errors);
  std::size_t legit = 0, attack = 0, fa = 0, md = 0;
  for (const AuthSample& s : samples) {
    if (!s.decision) continue;
    const int d = decide(s.error_m2, lambda_m2);
    if (s.truth == 0) {
      ++legit;
      fa += d == 1;
    } else {
      ++attack;
      md += d == 0;
    }
  }
  if (legit > 0) out.summary.p_fa = static_cast<double>(fa) / static_cast<double>(legit);
  if (attack > 0) out.summary.p_md = static_cast<double>(md) / static_cast<double>(attack);
  auto [l, a] = split_by_truth(samples);
  if (!l.empty() && !a.empty()) out.det = det_curve(std::move(l), std::move(a));
  return out;
}

/// n_legit + n_attack independent trials, each seeded from the master seed
/// and its index only, so results do not depend on cfg.workers.
inline MonteCarloResult run_monte_carlo(const ScenarioConfig& cfg, std::size_t n_legit, std::size_t n_attack,
                                        const RnnModel* model = nullptr) {
  cfg.validate();
  if (n_legit + n_attack == 0) throw ConfigError("no trials requested");
  const std::vector<double> ref_power = cfg.export_channels ? campaign_reference_power(cfg) : std::vector<double>{};
  std::vector<TrialResult> trials(n_legit + n_attack);
  parallel_for(trials.size(), cfg.workers, [&](std::size_t i) {
    try {
      trials[i] = run_trial(cfg, i, i >= n_legit, model, ref_power);
    } catch (const ConfigError& e) {
      throw ConfigError("trial " + std::to_string(i) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("trial " + std::to_string(i) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("trial " + std::to_string(i) + ": " + e.what());
    }
  });
  return aggregate(std::move(trials), cfg.lambda_m2);
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"rmse_x_m", s.rmse_x_m},       {"rmse_y_m", s.rmse_y_m},   {"mape_x_pct", opt(s.mape_x_pct)},
          {"mape_y_pct", opt(s.mape_y_pct)}, {"median_err_m", s.euclidean.median}, {"q1_m", s.euclidean.q1},
          {"q3_m", s.euclidean.q3},       {"whisker_low_m", s.euclidean.whisker_low},
          {"whisker_high_m", s.euclidean.whisker_high}, {"p_fa", opt(s.p_fa)}, {"p_md", opt(s.p_md)},
          {"n_excluded_mape", s.n_excluded_mape}, {"n_samples", s.samples}};
}

inline std::string trial_dir_name(std::size_t id) {
  std::string s = std::to_string(id);
  return "trial_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Files describing one trial's inputs: trajectory, estimates and, when
/// simulated, arrivals and folded SCM tensors.
inline void write_trial_inputs(const TrialData& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  csv::write_file((dir / "trajectory.csv").string(), trajectory_csv(d.trace));
  csv::write_file((dir / "estimates.csv").string(), estimates_csv(d.estimates));
  if (!d.arrivals.empty()) csv::write_file((dir / "arrivals.jsonl").string(), arrivals_jsonl(d.arrivals));
  if (!d.scm.empty()) write_folded_tensors(d.scm, (dir / "scm.bin").string(), (dir / "scm.json").string());
}

/// Artifact directory: config.json, summary.json, det.csv, decisions.csv
/// (all trials) and trials/trial_NNNN/ with the per-trial files.
inline void write_artifacts(const MonteCarloResult& result, const ScenarioConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "trials");
  csv::write_file((dir / "config.json").string(), config_to_json(cfg).dump(2) + "\n");
  csv::write_file((dir / "summary.json").string(), summary_to_json(result.summary).dump(2) + "\n");
  if (result.det) csv::write_file((dir / "det.csv").string(), det_csv(*result.det));
  std::string all = "run_id,t_s,E_m2,decision,truth\n";
  for (const TrialResult& t : result.trials) {
    const auto trial_dir = dir / "trials" / trial_dir_name(t.data.id);
    write_trial_inputs(t.data, trial_dir);
    csv::write_file((trial_dir / "predictions.csv").string(), predictions_csv(t.predictions));
    csv::write_file((trial_dir / "decisions.csv").string(), decisions_csv(static_cast<long long>(t.data.id), t.auth));
    csv::write_file((trial_dir / "errors.csv").string(), errors_csv(prediction_errors(t)));
    all += decisions_csv(static_cast<long long>(t.data.id), t.auth, false);
  }
  csv::write_file((dir / "decisions.csv").string(), all);
}

/// Oracle-estimate streams of fresh legitimate trajectories, for training.
inline std::vector<PositionStream> estimate_streams(const ScenarioConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::vector<PositionStream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    const Trajectory traj = simulate_trajectory(cfg.mobility, cfg.trajectory_length, derive_seed(s, seed_stream::kAlice));
    PositionStream stream;
    for (const auto& e : oracle_stream(traj, cfg.estimator, derive_seed(s, seed_stream::kEstimator))) stream.push_back(e.p);
    out.push_back(std::move(stream));
  }
  return out;
}

/// Trains the configured architecture on oracle-estimate streams drawn from
/// seeds disjoint from the evaluation trials.
inline TrainResult train_from_config(const ScenarioConfig& cfg) {
  const auto train_set = estimate_streams(cfg, cfg.train_trajectories, derive_seed(cfg.seed, seed_stream::kTrainData));
  const auto val_set = estimate_streams(cfg, cfg.validation_trajectories, derive_seed(cfg.seed, seed_stream::kValidationData));
  RnnModel model = make_model(cfg.rnn_architecture, cfg.mobility.area, derive_seed(cfg.seed, seed_stream::kModelInit));
  TrainConfig tc = cfg.train;
  return train(std::move(model), train_set, val_set, tc);
}

}  // namespace uwauth
