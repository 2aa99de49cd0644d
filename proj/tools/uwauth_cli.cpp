// uwauth: command-line front end for simulation, tracking, authentication
// and DET evaluation. See README.md for the file formats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "uwauth/auth.hpp"
#include "uwauth/config.hpp"
#include "uwauth/csv.hpp"
#include "uwauth/error.hpp"
#include "uwauth/harness.hpp"
#include "uwauth/kalman.hpp"
#include "uwauth/rnn.hpp"
#include "uwauth/stats.hpp"

namespace fs = std::filesystem;
using namespace uwauth;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config_path, "Scenario configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "Master seed (overrides the configuration)");
  cmd->add_option("--out", opt.out_dir, "Output directory");
  cmd->add_option("--set", opt.overrides, "Configuration override key=value (repeatable)");
  cmd->add_option("--workers", opt.workers, "Worker threads for Monte-Carlo trials");
}

ScenarioConfig resolve_config(const CommonOptions& opt) {
  ScenarioConfig cfg = opt.config_path.empty() ? ScenarioConfig{} : load_config(opt.config_path);
  for (const auto& o : opt.overrides) apply_override(cfg, o);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.workers) cfg.workers = *opt.workers;
  cfg.validate();
  return cfg;
}

std::optional<RnnModel> load_model_if_needed(const ScenarioConfig& cfg, const std::string& model_path) {
  if (cfg.predictor != PredictorKind::kRnn) return std::nullopt;
  const std::string path = model_path.empty() ? cfg.rnn_model_path : model_path;
  if (path.empty()) throw ConfigError("the rnn predictor needs --model or rnn.model");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("model " + path + " is not valid JSON: " + e.what());
  }
}

int cmd_simulate(const CommonOptions& opt, std::optional<std::size_t> legit, std::optional<std::size_t> attack, bool channels) {
  ScenarioConfig cfg = resolve_config(opt);
  if (legit) cfg.n_legit = *legit;
  if (attack) cfg.n_attack = *attack;
  cfg.export_channels = channels;
  cfg.validate();
  const std::vector<double> ref_power = channels ? campaign_reference_power(cfg) : std::vector<double>{};
  const fs::path out = opt.out_dir;
  fs::create_directories(out / "trials");
  csv::write_file((out / "config.json").string(), config_to_json(cfg).dump(2) + "\n");
  const std::size_t total = cfg.n_legit + cfg.n_attack;
  std::vector<TrialData> trials(total);
  parallel_for(total, cfg.workers, [&](std::size_t i) { trials[i] = simulate_trial(cfg, i, i >= cfg.n_legit, ref_power); });
  for (const TrialData& d : trials) write_trial_inputs(d, out / "trials" / trial_dir_name(d.id));
  std::cout << "simulated " << total << " trials into " << out.string() << "\n";
  return kOk;
}

int cmd_track(const CommonOptions& opt, const std::string& input, const std::string& model_path) {
  const ScenarioConfig cfg = resolve_config(opt);
  const std::optional<RnnModel> model = load_model_if_needed(cfg, model_path);
  const std::vector<PositionEstimate> estimates = load_estimates(input);
  const std::vector<Prediction> preds = run_predictor(cfg, estimates, model ? &*model : nullptr);
  fs::create_directories(opt.out_dir);
  csv::write_file((fs::path(opt.out_dir) / "predictions.csv").string(), predictions_csv(preds));
  return kOk;
}

int cmd_auth(const CommonOptions& opt, const std::string& predictions_path, const std::string& trajectory_path, long long run_id,
             std::optional<double> lambda, std::optional<std::size_t> pilots) {
  ScenarioConfig cfg = resolve_config(opt);
  if (lambda) cfg.lambda_m2 = *lambda;
  if (pilots) cfg.pilot_count = *pilots;
  const std::vector<Prediction> preds = load_predictions(predictions_path);
  const LabeledTrajectory traj = load_trajectory(trajectory_path);
  for (std::size_t j = 0; j < preds.size() && j + 1 < traj.trace.size(); ++j)
    if (preds[j].t != traj.trace.samples[j + 1].t)
      throw StreamError("prediction at t=" + format_double(preds[j].t) + " does not match trajectory instant t=" +
                        format_double(traj.trace.samples[j + 1].t));
  const std::vector<AuthSample> samples = run_protocol(preds, traj.labels, cfg.lambda_m2, cfg.pilot_count, cfg.mobility.period_s);
  fs::create_directories(opt.out_dir);
  csv::write_file((fs::path(opt.out_dir) / "decisions.csv").string(), decisions_csv(run_id, samples));
  return kOk;
}

int cmd_det(const CommonOptions& opt, const std::vector<std::string>& inputs, std::optional<double> lambda) {
  std::vector<AuthSample> samples;
  for (const auto& path : inputs)
    for (const DecisionRecord& r : load_decisions(path)) samples.push_back(r.sample);
  auto [legit, attack] = split_by_truth(samples);
  const DetCurve curve = det_curve(std::move(legit), std::move(attack));
  fs::create_directories(opt.out_dir);
  csv::write_file((fs::path(opt.out_dir) / "det.csv").string(), det_csv(curve));
  if (lambda) {
    const Rates r = empirical_rates(samples, *lambda);
    std::cout << "lambda_m2,p_fa,p_md\n" << format_double(*lambda) << ',' << format_double(r.p_fa) << ',' << format_double(r.p_md) << "\n";
  }
  return kOk;
}

int cmd_stats(const CommonOptions& opt, const std::vector<std::string>& inputs) {
  std::vector<ErrorSample> samples;
  for (const auto& path : inputs) {
    const auto e = load_errors(path);
    samples.insert(samples.end(), e.begin(), e.end());
  }
  const RunSummary summary = summarize_errors(samples);
  fs::create_directories(opt.out_dir);
  const std::string text = summary_to_json(summary).dump(2) + "\n";
  csv::write_file((fs::path(opt.out_dir) / "summary.json").string(), text);
  std::cout << text;
  return kOk;
}

int cmd_run(const CommonOptions& opt, const std::string& model_path) {
  const ScenarioConfig cfg = resolve_config(opt);
  const std::optional<RnnModel> model = load_model_if_needed(cfg, model_path);
  const MonteCarloResult result = run_monte_carlo(cfg, cfg.n_legit, cfg.n_attack, model ? &*model : nullptr);
  write_artifacts(result, cfg, opt.out_dir);
  std::cout << summary_to_json(result.summary).dump(2) << "\n";
  return kOk;
}

int cmd_train(const CommonOptions& opt) {
  const ScenarioConfig cfg = resolve_config(opt);
  const TrainResult res = train_from_config(cfg);
  const fs::path out = opt.out_dir;
  fs::create_directories(out);
  csv::write_file((out / "model.json").string(), model_to_json(res.model).dump() + "\n");
  std::ostringstream hist;
  hist << "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < res.train_loss.size(); ++e)
    hist << e << ',' << format_double(res.train_loss[e]) << ',' << format_double(res.validation_loss[e]) << '\n';
  csv::write_file((out / "history.csv").string(), hist.str());
  std::cout << "best epoch " << res.best_epoch << ", validation loss " << format_double(res.validation_loss[res.best_epoch]) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-tracking physical-layer authentication for underwater acoustic links"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::optional<std::size_t> legit, attack;
  bool no_channels = false;
  std::string input, model_path, predictions_path, trajectory_path;
  long long run_id = 0;
  std::optional<double> lambda;
  std::optional<std::size_t> pilots;
  std::vector<std::string> inputs;

  auto* simulate = app.add_subcommand("simulate", "Emit trajectories, estimates, arrivals and SCM tensors");
  add_common(simulate, opt);
  simulate->add_option("--legit", legit, "Legitimate trials");
  simulate->add_option("--attack", attack, "Attack trials");
  simulate->add_flag("--no-channels", no_channels, "Skip channel and SCM synthesis");

  auto* track = app.add_subcommand("track", "Run a predictor over an estimate file");
  add_common(track, opt);
  track->add_option("--in", input, "Estimate CSV (t_s,x_m,y_m)")->required()->check(CLI::ExistingFile);
  track->add_option("--model", model_path, "RNN model file (rnn predictor)");

  auto* auth = app.add_subcommand("auth", "Run the authentication protocol over a prediction log");
  add_common(auth, opt);
  auth->add_option("--predictions", predictions_path, "Prediction log CSV")->required()->check(CLI::ExistingFile);
  auth->add_option("--trajectory", trajectory_path, "Trajectory CSV with ground-truth labels")->required()->check(CLI::ExistingFile);
  auth->add_option("--run-id", run_id, "Run identifier written to the decisions file");
  auth->add_option("--lambda", lambda, "Threshold in m^2 (overrides auth.lambda_m2)");
  auth->add_option("--pilots", pilots, "Pilot messages before decisions (overrides auth.pilot_count)");

  auto* det = app.add_subcommand("det", "Aggregate decision files into a DET curve");
  add_common(det, opt);
  det->add_option("--decisions", inputs, "Decision CSV files")->required()->check(CLI::ExistingFile);
  det->add_option("--lambda", lambda, "Also print (p_fa, p_md) at this threshold");

  auto* stats = app.add_subcommand("stats", "Summarize error files");
  add_common(stats, opt);
  stats->add_option("--errors", inputs, "Error CSV files (t_s,x_m,y_m,xhat_m,yhat_m)")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Full Monte-Carlo campaign with artifacts");
  add_common(run, opt);
  run->add_option("--model", model_path, "RNN model file (rnn predictor)");

  auto* train_cmd = app.add_subcommand("train", "Train the RNN predictor on simulated oracle estimates");
  add_common(train_cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opt, legit, attack, !no_channels);
    if (track->parsed()) return cmd_track(opt, input, model_path);
    if (auth->parsed()) return cmd_auth(opt, predictions_path, trajectory_path, run_id, lambda, pilots);
    if (det->parsed()) return cmd_det(opt, inputs, lambda);
    if (stats->parsed()) return cmd_stats(opt, inputs);
    if (run->parsed()) return cmd_run(opt, model_path);
    if (train_cmd->parsed()) return cmd_train(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
