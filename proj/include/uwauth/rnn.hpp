#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "uwauth/adam.hpp"
#include "uwauth/error.hpp"
#include "uwauth/estimators.hpp"
#include "uwauth/lstm.hpp"

namespace uwauth {

struct TrainConfig {
  std::size_t batch = 8;
  std::size_t epochs = 300;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double weight_decay = 1e-3;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch == 0) throw ConfigError("train.batch must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (!(lr_start >= 0.0) || !(lr_end >= 0.0) || lr_end > lr_start)
      throw ConfigError("train learning rates must satisfy 0 <= lr_end <= lr_start");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  }

  /// Geometric decay from lr_start (first epoch) to lr_end (last epoch).
  double learning_rate(std::size_t epoch) const noexcept {
    if (epochs == 1 || lr_start == 0.0) return lr_start;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, frac);
  }
};

struct TrainResult {
  RnnModel model;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
};

/// One estimate stream per trajectory; every stream trains the model to map
/// p(t - T) to p(t) at each step.
using PositionStream = std::vector<Vec2>;

namespace detail {

inline void require_streams(const std::vector<PositionStream>& streams, const char* what) {
  if (streams.empty()) throw DataError(std::string("empty ") + what + " dataset");
  const std::size_t n = streams.front().size();
  if (n < 2) throw DataError(std::string(what) + " streams need at least two positions");
  for (const auto& s : streams)
    if (s.size() != n) throw DataError(std::string(what) + " streams must share one length");
}

inline std::pair<SequenceBatch, SequenceBatch> io_batch(const RnnModel& model, const std::vector<PositionStream>& streams,
                                                        std::span<const std::size_t> pick) {
  std::vector<std::span<const Vec2>> in;
  std::vector<std::span<const Vec2>> out;
  for (std::size_t idx : pick) {
    const PositionStream& s = streams[idx];
    in.emplace_back(s.data(), s.size() - 1);
    out.emplace_back(s.data() + 1, s.size() - 1);
  }
  return {make_batch(model, in), make_batch(model, out)};
}

}  // namespace detail

/// Inference-mode loss over a whole dataset (unit coordinates).
inline double dataset_loss(const RnnModel& model, const std::vector<PositionStream>& streams) {
  detail::require_streams(streams, "evaluation");
  std::vector<std::size_t> all(streams.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto [in, out] = detail::io_batch(model, streams, all);
  return batch_loss(forward_batch(model, in, false), out);
}

/// Minibatch AdamW over shuffled training streams; returns the parameters of
/// the epoch with the lowest validation loss.
inline TrainResult train(RnnModel model, const std::vector<PositionStream>& train_set,
                         const std::vector<PositionStream>& validation_set, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  detail::require_streams(train_set, "training");
  detail::require_streams(validation_set, "validation");

  Random rng(cfg.seed);
  std::vector<bool> frozen;
  for (const std::string& name : param_names(model))
    frozen.push_back(std::find(model.frozen.begin(), model.frozen.end(), name) != model.frozen.end());
  AdamState adam(param_spans(model));

  TrainResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamConfig step_cfg;
    step_cfg.lr = cfg.learning_rate(epoch);
    step_cfg.weight_decay = cfg.weight_decay;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const auto [in, out] = detail::io_batch(model, train_set, std::span<const std::size_t>(order).subspan(start, stop - start));
      const ForwardCache cache = forward_batch(model, in, true, &rng);
      loss_sum += batch_loss(cache, out);
      ++batches;
      RnnModel grad = backward_batch(model, cache, out);
      adam.step(param_spans(model), param_spans(grad), step_cfg, frozen);
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(batches));
    const double val = dataset_loss(model, validation_set);
    result.validation_loss.push_back(val);
    if (val < best) {
      best = val;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

/// Streaming inference with hidden states carried across the stream.
class RnnTracker {
 public:
  RnnTracker(RnnModel model, double period_s) : model_(std::move(model)), period_(period_s) {
    model_.validate();
    if (!(period_s > 0.0)) throw ConfigError("sampling period must be positive");
    for (const auto& layer : model_.layers) states_.push_back(LstmState::zeros(layer.hidden_size()));
  }

  const std::optional<Vec2>& prediction() const noexcept { return next_; }

  void consume(const PositionEstimate& est) {
    if (next_ && !is_next_instant(last_t_, est.t, period_))
      throw StreamError("timestamp gap at t=" + std::to_string(est.t) + " s");
    VectorXd x = model_.to_unit(est.p);
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
      states_[l] = lstm_step(model_.layers[l], x, states_[l]).state;
      x = states_[l].h;
    }
    for (std::size_t d = 0; d < model_.dense.size(); ++d) {
      x = model_.dense[d].W * x + model_.dense[d].b;
      if (d + 1 < model_.dense.size()) x = x.array().tanh().matrix();
    }
    next_ = model_.from_unit(Vec2{x(0), x(1)});
    last_t_ = est.t;
  }

  const std::vector<LstmState>& states() const noexcept { return states_; }

 private:
  RnnModel model_;
  double period_;
  std::vector<LstmState> states_;
  std::optional<Vec2> next_;
  double last_t_ = 0.0;
};

/// One prediction per instant from the second estimate on, each emitted
/// before the estimate at that instant is consumed.
inline std::vector<Prediction> predict_next(const RnnModel& model, const std::vector<PositionEstimate>& estimates,
                                            double period_s) {
  RnnTracker tracker(model, period_s);
  std::vector<Prediction> out;
  out.reserve(estimates.empty() ? 0 : estimates.size() - 1);
  for (const PositionEstimate& est : estimates) {
    if (const auto& p = tracker.prediction()) out.push_back({est.t, *p, est.p});
    tracker.consume(est);
  }
  return out;
}

// Model file: JSON, every tensor stored row-major with its shape.

inline constexpr int kModelFormatVersion = 1;

namespace detail {

template <typename Tensor>
nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["rows"] = t.rows();
  j["cols"] = t.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(t.size()));
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
  j["data"] = std::move(data);
  return j;
}

template <typename Tensor>
void tensor_from_json(const nlohmann::json& j, Tensor& t, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows != t.rows() || cols != t.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError("model tensor " + name + " has an unexpected shape");
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = data[static_cast<std::size_t>(r * cols + c)];
}

}  // namespace detail

inline nlohmann::json model_to_json(const RnnModel& model) {
  nlohmann::json j;
  j["format"] = "uwauth-rnn";
  j["version"] = kModelFormatVersion;
  j["dropout_rate"] = model.dropout_rate;
  j["bounds"] = {{"x_min", model.bounds.x_min}, {"x_max", model.bounds.x_max},
                 {"y_min", model.bounds.y_min}, {"y_max", model.bounds.y_max}};
  std::vector<Eigen::Index> hidden;
  for (const auto& l : model.layers) hidden.push_back(l.hidden_size());
  j["lstm_hidden"] = hidden;
  std::vector<Eigen::Index> widths;
  for (const auto& d : model.dense) widths.push_back(d.W.rows());
  j["dense_widths"] = widths;
  nlohmann::json tensors = nlohmann::json::object();
  for_each_param(model, [&](const std::string& name, const auto& t) { tensors[name] = detail::tensor_to_json(t); });
  j["tensors"] = std::move(tensors);
  return j;
}

inline RnnModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "uwauth-rnn") throw DataError("not an uwauth RNN model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw DataError("unsupported model version " + std::to_string(j.at("version").get<int>()));
    RnnModel model;
    model.dropout_rate = j.at("dropout_rate").get<double>();
    const auto& b = j.at("bounds");
    model.bounds = {b.at("x_min").get<double>(), b.at("x_max").get<double>(), b.at("y_min").get<double>(),
                    b.at("y_max").get<double>()};
    Eigen::Index input = 2;
    for (auto h : j.at("lstm_hidden").get<std::vector<Eigen::Index>>()) {
      if (h < 1) throw DataError("invalid hidden size in model file");
      model.layers.push_back(LstmLayerParams::zeros(input, h));
      input = h;
    }
    for (auto w : j.at("dense_widths").get<std::vector<Eigen::Index>>()) {
      if (w < 1) throw DataError("invalid dense width in model file");
      model.dense.push_back({MatrixXd::Zero(w, input), VectorXd::Zero(w)});
      input = w;
    }
    const auto& tensors = j.at("tensors");
    for_each_param(model, [&](const std::string& name, auto& t) {
      if (!tensors.contains(name)) throw DataError("model file lacks tensor " + name);
      detail::tensor_from_json(tensors.at(name), t, name);
    });
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace uwauth
