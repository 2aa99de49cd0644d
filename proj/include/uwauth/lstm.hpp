#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "uwauth/error.hpp"
#include "uwauth/mobility.hpp"
#include "uwauth/rng.hpp"

namespace uwauth {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Weights of one LSTM layer, one input and one recurrent matrix per gate
/// (input i, forget f, cell g, output o), each with its own bias.
struct LstmLayerParams {
  MatrixXd W_ii, W_if, W_ig, W_io;
  MatrixXd W_hi, W_hf, W_hg, W_ho;
  VectorXd b_ii, b_if, b_ig, b_io;
  VectorXd b_hi, b_hf, b_hg, b_ho;

  static LstmLayerParams zeros(Eigen::Index input, Eigen::Index hidden) {
    LstmLayerParams p;
    for (MatrixXd* w : {&p.W_ii, &p.W_if, &p.W_ig, &p.W_io}) *w = MatrixXd::Zero(hidden, input);
    for (MatrixXd* w : {&p.W_hi, &p.W_hf, &p.W_hg, &p.W_ho}) *w = MatrixXd::Zero(hidden, hidden);
    for (VectorXd* b : {&p.b_ii, &p.b_if, &p.b_ig, &p.b_io, &p.b_hi, &p.b_hf, &p.b_hg, &p.b_ho})
      *b = VectorXd::Zero(hidden);
    return p;
  }

  Eigen::Index input_size() const noexcept { return W_ii.cols(); }
  Eigen::Index hidden_size() const noexcept { return W_ii.rows(); }

  void validate() const {
    const Eigen::Index h = hidden_size();
    const Eigen::Index in = input_size();
    for (const MatrixXd* w : {&W_ii, &W_if, &W_ig, &W_io})
      if (w->rows() != h || w->cols() != in) throw DataError("LSTM input-weight shape mismatch");
    for (const MatrixXd* w : {&W_hi, &W_hf, &W_hg, &W_ho})
      if (w->rows() != h || w->cols() != h) throw DataError("LSTM recurrent-weight shape mismatch");
    for (const VectorXd* b : {&b_ii, &b_if, &b_ig, &b_io, &b_hi, &b_hf, &b_hg, &b_ho})
      if (b->size() != h) throw DataError("LSTM bias shape mismatch");
  }
};

struct LstmState {
  VectorXd c;
  VectorXd h;

  static LstmState zeros(Eigen::Index hidden) { return {VectorXd::Zero(hidden), VectorXd::Zero(hidden)}; }
};

struct LstmGates {
  VectorXd i, f, g, o;
};

struct LstmStepResult {
  LstmGates gates;
  LstmState state;
};

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// One cell update:
///   i = s(W_ii x + b_ii + W_hi h + b_hi), f and o alike, g with tanh,
///   c' = f * c + i * g,  h' = o * tanh(c').
inline LstmStepResult lstm_step(const LstmLayerParams& p, const VectorXd& x, const LstmState& s) {
  if (x.size() != p.input_size() || s.h.size() != p.hidden_size() || s.c.size() != p.hidden_size())
    throw DataError("lstm_step dimension mismatch");
  LstmStepResult r;
  auto sig = [](const VectorXd& v) -> VectorXd { return v.unaryExpr([](double a) { return sigmoid(a); }); };
  r.gates.i = sig(p.W_ii * x + p.b_ii + p.W_hi * s.h + p.b_hi);
  r.gates.f = sig(p.W_if * x + p.b_if + p.W_hf * s.h + p.b_hf);
  r.gates.g = (p.W_ig * x + p.b_ig + p.W_hg * s.h + p.b_hg).array().tanh().matrix();
  r.gates.o = sig(p.W_io * x + p.b_io + p.W_ho * s.h + p.b_ho);
  r.state.c = r.gates.f.cwiseProduct(s.c) + r.gates.i.cwiseProduct(r.gates.g);
  r.state.h = r.gates.o.cwiseProduct(r.state.c.array().tanh().matrix());
  return r;
}

struct DenseLayer {
  MatrixXd W;
  VectorXd b;
};

/// Stacked LSTM, dropout on the last hidden state, then an affine head with
/// tanh between layers and a linear output of size 2. Coordinates are
/// min-max scaled into the unit square of `bounds` on the way in and mapped
/// back on the way out.
struct RnnModel {
  std::vector<LstmLayerParams> layers;
  double dropout_rate = 0.2;
  std::vector<DenseLayer> dense;
  Area bounds{};
  /// Names of parameters excluded from training (see param_names()).
  std::vector<std::string> frozen;

  void validate() const {
    if (layers.empty()) throw DataError("model has no LSTM layers");
    if (dense.empty()) throw DataError("model has no dense layers");
    if (layers.front().input_size() != 2) throw DataError("first LSTM layer must take 2-D positions");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].validate();
      if (l > 0 && layers[l].input_size() != layers[l - 1].hidden_size())
        throw DataError("LSTM layer " + std::to_string(l) + " input does not match previous hidden size");
    }
    Eigen::Index width = layers.back().hidden_size();
    for (const DenseLayer& d : dense) {
      if (d.W.cols() != width || d.b.size() != d.W.rows()) throw DataError("dense layer shape mismatch");
      width = d.W.rows();
    }
    if (width != 2) throw DataError("model output dimension must be 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DataError("dropout rate must lie in [0, 1)");
    bounds.validate();
  }

  Vec2 to_unit(const Vec2& p) const noexcept {
    return {(p.x() - bounds.x_min) / (bounds.x_max - bounds.x_min), (p.y() - bounds.y_min) / (bounds.y_max - bounds.y_min)};
  }
  Vec2 from_unit(const Vec2& u) const noexcept {
    return {bounds.x_min + u.x() * (bounds.x_max - bounds.x_min), bounds.y_min + u.y() * (bounds.y_max - bounds.y_min)};
  }
};

struct RnnArchitecture {
  std::vector<Eigen::Index> hidden{32, 64};
  std::size_t dense_layers = 4;
  double dropout_rate = 0.2;
};

/// Dense widths from the last hidden size down to 2, geometrically spaced.
inline std::vector<Eigen::Index> dense_widths(Eigen::Index from, std::size_t count) {
  std::vector<Eigen::Index> widths;
  const double ratio = std::pow(2.0 / static_cast<double>(from), 1.0 / static_cast<double>(count));
  for (std::size_t i = 1; i < count; ++i)
    widths.push_back(std::max<Eigen::Index>(2, std::llround(static_cast<double>(from) * std::pow(ratio, static_cast<double>(i)))));
  widths.push_back(2);
  return widths;
}

/// Uniform(-1/sqrt(n), 1/sqrt(n)) initialization, n = hidden size for LSTM
/// layers and fan-in for dense layers.
inline RnnModel make_model(const RnnArchitecture& arch, const Area& bounds, std::uint64_t seed) {
  if (arch.hidden.empty() || arch.dense_layers == 0) throw ConfigError("architecture needs LSTM and dense layers");
  Random rng(seed);
  auto fill = [&rng](auto& m, double k) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-k, k);
  };
  RnnModel model;
  model.bounds = bounds;
  model.dropout_rate = arch.dropout_rate;
  Eigen::Index input = 2;
  for (Eigen::Index h : arch.hidden) {
    if (h < 1) throw ConfigError("hidden size must be positive");
    LstmLayerParams p = LstmLayerParams::zeros(input, h);
    const double k = 1.0 / std::sqrt(static_cast<double>(h));
    for (MatrixXd* w : {&p.W_ii, &p.W_if, &p.W_ig, &p.W_io, &p.W_hi, &p.W_hf, &p.W_hg, &p.W_ho}) fill(*w, k);
    for (VectorXd* b : {&p.b_ii, &p.b_if, &p.b_ig, &p.b_io, &p.b_hi, &p.b_hf, &p.b_hg, &p.b_ho}) fill(*b, k);
    model.layers.push_back(std::move(p));
    input = h;
  }
  for (Eigen::Index w : dense_widths(input, arch.dense_layers)) {
    DenseLayer d{MatrixXd::Zero(w, input), VectorXd::Zero(w)};
    const double k = 1.0 / std::sqrt(static_cast<double>(input));
    fill(d.W, k);
    fill(d.b, k);
    model.dense.push_back(std::move(d));
    input = w;
  }
  model.validate();
  return model;
}

/// Calls fn(name, storage) for every parameter tensor in a fixed order.
template <typename Model, typename Fn>
void for_each_param(Model& model, Fn&& fn) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    const std::string pre = "lstm" + std::to_string(l) + ".";
    fn(pre + "W_ii", p.W_ii); fn(pre + "W_if", p.W_if); fn(pre + "W_ig", p.W_ig); fn(pre + "W_io", p.W_io);
    fn(pre + "W_hi", p.W_hi); fn(pre + "W_hf", p.W_hf); fn(pre + "W_hg", p.W_hg); fn(pre + "W_ho", p.W_ho);
    fn(pre + "b_ii", p.b_ii); fn(pre + "b_if", p.b_if); fn(pre + "b_ig", p.b_ig); fn(pre + "b_io", p.b_io);
    fn(pre + "b_hi", p.b_hi); fn(pre + "b_hf", p.b_hf); fn(pre + "b_hg", p.b_hg); fn(pre + "b_ho", p.b_ho);
  }
  for (std::size_t d = 0; d < model.dense.size(); ++d) {
    const std::string pre = "dense" + std::to_string(d) + ".";
    fn(pre + "W", model.dense[d].W);
    fn(pre + "b", model.dense[d].b);
  }
}

inline std::vector<std::string> param_names(const RnnModel& model) {
  std::vector<std::string> names;
  for_each_param(model, [&](const std::string& n, const auto&) { names.push_back(n); });
  return names;
}

/// Flat views over every parameter tensor, in for_each_param order.
inline std::vector<std::span<double>> param_spans(RnnModel& model) {
  std::vector<std::span<double>> spans;
  for_each_param(model, [&](const std::string&, auto& t) { spans.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return spans;
}

inline RnnModel zeros_like(const RnnModel& model) {
  RnnModel z = model;
  for_each_param(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

/// (1/b) sum (x - x~)^2 + (1/b) sum (y - y~)^2 over b 2-D points.
inline double mse_loss(std::span<const Vec2> pred, std::span<const Vec2> target) {
  if (pred.size() != target.size()) throw DataError("mse_loss batch shape mismatch");
  if (pred.empty()) throw DataError("mse_loss of an empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]).squaredNorm();
  return acc / static_cast<double>(pred.size());
}

/// A batch of equally long sequences in unit coordinates: steps[t] is 2 x B.
struct SequenceBatch {
  std::vector<MatrixXd> steps;

  Eigen::Index batch() const noexcept { return steps.empty() ? 0 : steps.front().cols(); }
  std::size_t length() const noexcept { return steps.size(); }
};

/// Everything the backward pass needs from one forward pass.
struct ForwardCache {
  struct LayerStep {
    MatrixXd x, h_prev, c_prev, i, f, g, o, tanh_c;
  };
  std::vector<std::vector<LayerStep>> layers;  // [layer][t]
  std::vector<MatrixXd> dropout_mask;          // [t], empty when inactive
  std::vector<std::vector<MatrixXd>> dense_in; // [t][layer] input of each dense layer
  std::vector<MatrixXd> outputs;               // [t], unit coordinates
};

namespace detail {

inline MatrixXd sigmoid_m(const MatrixXd& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

inline MatrixXd affine(const MatrixXd& w, const VectorXd& b, const MatrixXd& x) {
  MatrixXd out = w * x;
  out.colwise() += b;
  return out;
}

}  // namespace detail

/// Batched forward pass from zero states. With `training` and a positive
/// dropout rate, `rng` draws inverted-dropout masks on the last hidden state.
inline ForwardCache forward_batch(const RnnModel& model, const SequenceBatch& input, bool training, Random* rng = nullptr) {
  if (input.steps.empty()) throw DataError("forward pass over an empty sequence");
  const Eigen::Index batch = input.batch();
  const std::size_t length = input.length();
  ForwardCache cache;
  cache.layers.resize(model.layers.size());

  std::vector<MatrixXd> below = input.steps;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LstmLayerParams& p = model.layers[l];
    const Eigen::Index hidden = p.hidden_size();
    MatrixXd h = MatrixXd::Zero(hidden, batch);
    MatrixXd c = MatrixXd::Zero(hidden, batch);
    auto& steps = cache.layers[l];
    steps.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
      const MatrixXd& x = below[t];
      if (x.rows() != p.input_size() || x.cols() != batch) throw DataError("sequence step shape mismatch");
      auto& s = steps[t];
      s.x = x;
      s.h_prev = h;
      s.c_prev = c;
      MatrixXd ai = p.W_ii * x + p.W_hi * h;
      ai.colwise() += p.b_ii + p.b_hi;
      MatrixXd af = p.W_if * x + p.W_hf * h;
      af.colwise() += p.b_if + p.b_hf;
      MatrixXd ag = p.W_ig * x + p.W_hg * h;
      ag.colwise() += p.b_ig + p.b_hg;
      MatrixXd ao = p.W_io * x + p.W_ho * h;
      ao.colwise() += p.b_io + p.b_ho;
      s.i = detail::sigmoid_m(ai);
      s.f = detail::sigmoid_m(af);
      s.g = ag.array().tanh().matrix();
      s.o = detail::sigmoid_m(ao);
      c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
      s.tanh_c = c.array().tanh().matrix();
      h = s.o.cwiseProduct(s.tanh_c);
      below[t] = h;
    }
  }

  const bool drop = training && model.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw DataError("dropout in training mode needs a random source");
  cache.dense_in.resize(length);
  cache.outputs.resize(length);
  if (drop) cache.dropout_mask.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    MatrixXd a = below[t];
    if (drop) {
      MatrixXd mask(a.rows(), a.cols());
      const double keep = 1.0 - model.dropout_rate;
      for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = rng->uniform() < keep ? 1.0 / keep : 0.0;
      a = a.cwiseProduct(mask);
      cache.dropout_mask[t] = std::move(mask);
    }
    auto& ins = cache.dense_in[t];
    for (std::size_t d = 0; d < model.dense.size(); ++d) {
      ins.push_back(a);
      a = detail::affine(model.dense[d].W, model.dense[d].b, a);
      if (d + 1 < model.dense.size()) a = a.array().tanh().matrix();
    }
    cache.outputs[t] = std::move(a);
  }
  return cache;
}

/// Mean squared error of a batch forward pass against unit-coordinate targets.
inline double batch_loss(const ForwardCache& cache, const SequenceBatch& target) {
  if (target.length() != cache.outputs.size()) throw DataError("target length mismatch");
  double acc = 0.0;
  Eigen::Index points = 0;
  for (std::size_t t = 0; t < cache.outputs.size(); ++t) {
    if (target.steps[t].rows() != 2 || target.steps[t].cols() != cache.outputs[t].cols())
      throw DataError("target shape mismatch");
    acc += (cache.outputs[t] - target.steps[t]).squaredNorm();
    points += target.steps[t].cols();
  }
  return acc / static_cast<double>(points);
}

/// Exact gradients of batch_loss by reverse accumulation through the dense
/// head and back through time in every LSTM layer. Frozen tensors get zero.
inline RnnModel backward_batch(const RnnModel& model, const ForwardCache& cache, const SequenceBatch& target) {
  RnnModel grad = zeros_like(model);
  const std::size_t length = cache.outputs.size();
  Eigen::Index points = 0;
  for (const auto& s : target.steps) points += s.cols();
  const double scale = 2.0 / static_cast<double>(points);

  const std::size_t n_layers = model.layers.size();
  std::vector<MatrixXd> d_below(length);

  for (std::size_t t = 0; t < length; ++t) {
    MatrixXd delta = scale * (cache.outputs[t] - target.steps[t]);
    for (std::size_t d = model.dense.size(); d-- > 0;) {
      const MatrixXd& in = cache.dense_in[t][d];
      grad.dense[d].W.noalias() += delta * in.transpose();
      grad.dense[d].b += delta.rowwise().sum();
      delta = model.dense[d].W.transpose() * delta;
      if (d > 0) delta = delta.cwiseProduct((1.0 - in.array().square()).matrix());
    }
    if (!cache.dropout_mask.empty()) delta = delta.cwiseProduct(cache.dropout_mask[t]);
    d_below[t] = std::move(delta);
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const LstmLayerParams& p = model.layers[l];
    LstmLayerParams& gp = grad.layers[l];
    const auto& steps = cache.layers[l];
    const Eigen::Index batch = steps.front().x.cols();
    MatrixXd dh_next = MatrixXd::Zero(p.hidden_size(), batch);
    MatrixXd dc_next = MatrixXd::Zero(p.hidden_size(), batch);
    for (std::size_t t = length; t-- > 0;) {
      const auto& s = steps[t];
      const MatrixXd dh = d_below[t] + dh_next;
      const MatrixXd dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
      const MatrixXd dai = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
      const MatrixXd daf = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
      const MatrixXd dag = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
      const MatrixXd dao = dh.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
      dc_next = dc.cwiseProduct(s.f);

      gp.W_ii.noalias() += dai * s.x.transpose();
      gp.W_if.noalias() += daf * s.x.transpose();
      gp.W_ig.noalias() += dag * s.x.transpose();
      gp.W_io.noalias() += dao * s.x.transpose();
      gp.W_hi.noalias() += dai * s.h_prev.transpose();
      gp.W_hf.noalias() += daf * s.h_prev.transpose();
      gp.W_hg.noalias() += dag * s.h_prev.transpose();
      gp.W_ho.noalias() += dao * s.h_prev.transpose();
      const VectorXd si = dai.rowwise().sum();
      const VectorXd sf = daf.rowwise().sum();
      const VectorXd sg = dag.rowwise().sum();
      const VectorXd so = dao.rowwise().sum();
      gp.b_ii += si; gp.b_hi += si;
      gp.b_if += sf; gp.b_hf += sf;
      gp.b_ig += sg; gp.b_hg += sg;
      gp.b_io += so; gp.b_ho += so;

      dh_next = p.W_hi.transpose() * dai + p.W_hf.transpose() * daf + p.W_hg.transpose() * dag + p.W_ho.transpose() * dao;
      if (l > 0)
        d_below[t] = p.W_ii.transpose() * dai + p.W_if.transpose() * daf + p.W_ig.transpose() * dag + p.W_io.transpose() * dao;
    }
  }

  if (!model.frozen.empty()) {
    for_each_param(grad, [&](const std::string& name, auto& t) {
      for (const std::string& f : model.frozen)
        if (f == name) t.setZero();
    });
  }
  return grad;
}

/// Packs sequences of 2-D points (metres) into a unit-coordinate batch.
inline SequenceBatch make_batch(const RnnModel& model, const std::vector<std::span<const Vec2>>& sequences) {
  if (sequences.empty()) throw DataError("empty batch");
  const std::size_t length = sequences.front().size();
  SequenceBatch batch;
  batch.steps.assign(length, MatrixXd(2, static_cast<Eigen::Index>(sequences.size())));
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    if (sequences[b].size() != length) throw DataError("sequences in one batch must share a length");
    for (std::size_t t = 0; t < length; ++t) batch.steps[t].col(static_cast<Eigen::Index>(b)) = model.to_unit(sequences[b][t]);
  }
  return batch;
}

/// Inference-mode predictions (metres) for one sequence of inputs (metres).
inline std::vector<Vec2> model_forward(const RnnModel& model, std::span<const Vec2> inputs) {
  if (inputs.empty()) throw DataError("model_forward over an empty sequence");
  const SequenceBatch batch = make_batch(model, {inputs});
  const ForwardCache cache = forward_batch(model, batch, false);
  std::vector<Vec2> out;
  out.reserve(inputs.size());
  for (const MatrixXd& y : cache.outputs) out.push_back(model.from_unit(Vec2{y(0, 0), y(1, 0)}));
  return out;
}

}  // namespace uwauth
