#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "uwauth/rnn.hpp"

namespace uwauth {
namespace {

const Area kArea{};

LstmLayerParams random_layer(Random& rng, Eigen::Index input, Eigen::Index hidden, double scale) {
  LstmLayerParams p = LstmLayerParams::zeros(input, hidden);
  RnnModel shell;
  shell.layers.push_back(p);
  for_each_param(shell, [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, scale);
  });
  return shell.layers.front();
}

double scalar_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TEST(LstmStep, ZeroWeightsZeroCell) {
  const auto p = LstmLayerParams::zeros(2, 3);
  const auto r = lstm_step(p, VectorXd::Ones(2), LstmState::zeros(3));
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_EQ(r.gates.i(k), 0.5);
    EXPECT_EQ(r.gates.f(k), 0.5);
    EXPECT_EQ(r.gates.o(k), 0.5);
    EXPECT_EQ(r.gates.g(k), 0.0);
    EXPECT_EQ(r.state.c(k), 0.0);
    EXPECT_EQ(r.state.h(k), 0.0);
  }
}

TEST(LstmStep, ZeroWeightsHalveTheCell) {
  const auto p = LstmLayerParams::zeros(2, 3);
  LstmState s = LstmState::zeros(3);
  s.c << 1.0, -2.0, 4.0;
  const auto r = lstm_step(p, VectorXd::Zero(2), s);
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(r.state.c(k), 0.5 * s.c(k));
    EXPECT_DOUBLE_EQ(r.state.h(k), 0.5 * std::tanh(0.5 * s.c(k)));
  }
}

TEST(LstmStep, MatchesScalarTranscription) {
  Random rng(4);
  const LstmLayerParams p = random_layer(rng, 2, 3, 0.7);
  VectorXd x(2);
  x << 0.3, -1.2;
  LstmState s{VectorXd::Random(3), VectorXd::Random(3)};
  const auto r = lstm_step(p, x, s);
  for (Eigen::Index k = 0; k < 3; ++k) {
    double ai = p.b_ii(k) + p.b_hi(k), af = p.b_if(k) + p.b_hf(k), ag = p.b_ig(k) + p.b_hg(k), ao = p.b_io(k) + p.b_ho(k);
    for (Eigen::Index j = 0; j < 2; ++j) {
      ai += p.W_ii(k, j) * x(j);
      af += p.W_if(k, j) * x(j);
      ag += p.W_ig(k, j) * x(j);
      ao += p.W_io(k, j) * x(j);
    }
    for (Eigen::Index j = 0; j < 3; ++j) {
      ai += p.W_hi(k, j) * s.h(j);
      af += p.W_hf(k, j) * s.h(j);
      ag += p.W_hg(k, j) * s.h(j);
      ao += p.W_ho(k, j) * s.h(j);
    }
    const double i = scalar_sigmoid(ai), f = scalar_sigmoid(af), g = std::tanh(ag), o = scalar_sigmoid(ao);
    const double c = f * s.c(k) + i * g;
    EXPECT_NEAR(r.gates.o(k), o, 1e-15);
    EXPECT_NEAR(r.state.c(k), c, 1e-15);
    EXPECT_NEAR(r.state.h(k), o * std::tanh(c), 1e-15);
  }
  EXPECT_THROW(lstm_step(p, VectorXd::Zero(3), s), DataError);
}

TEST(LstmStep, HiddenBoundedCellLinear) {
  Random rng(6);
  const LstmLayerParams p = random_layer(rng, 2, 8, 5.0);
  LstmState s = LstmState::zeros(8);
  for (int t = 1; t <= 500; ++t) {
    VectorXd x(2);
    x << rng.normal(0.0, 10.0), rng.normal(0.0, 10.0);
    s = lstm_step(p, x, s).state;
    ASSERT_LE(s.h.cwiseAbs().maxCoeff(), 1.0);
    ASSERT_LE(s.c.cwiseAbs().maxCoeff(), static_cast<double>(t) + 1e-12);
  }
}

TEST(DenseWidths, GeometricDownToTwo) {
  const auto w = dense_widths(64, 4);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w.back(), 2);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LE(w[i], w[i - 1]);
  EXPECT_LT(w.front(), 64);
}

TEST(MseLoss, Examples) {
  const std::vector<Vec2> a{{1.0, 2.0}};
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_EQ(mse_loss(std::vector<Vec2>{{0.0, 0.0}}, std::vector<Vec2>{{3.0, 4.0}}), 25.0);
  EXPECT_EQ(mse_loss(std::vector<Vec2>{{1.0, 0.0}, {0.0, 2.0}}, std::vector<Vec2>{{0.0, 0.0}, {0.0, 0.0}}), 2.5);
  EXPECT_THROW(mse_loss(a, std::vector<Vec2>{}), DataError);
}

TEST(Normalization, RoundTrip) {
  const RnnModel m = make_model({{4}, 2, 0.0}, kArea, 1);
  Random rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{rng.uniform(kArea.x_min, kArea.x_max), rng.uniform(kArea.y_min, kArea.y_max)};
    const Vec2 u = m.to_unit(p);
    EXPECT_GE(u.minCoeff(), 0.0);
    EXPECT_LE(u.maxCoeff(), 1.0);
    EXPECT_LE((m.from_unit(u) - p).norm(), 1e-9);
  }
}

TEST(ModelForward, SingleStepIsStepPlusHead) {
  const RnnModel m = make_model({{5, 6}, 3, 0.2}, kArea, 9);
  const Vec2 p{900.0, 1300.0};
  const std::vector<Vec2> in{p};
  const Vec2 y = model_forward(m, in).front();

  VectorXd x = m.to_unit(p);
  for (const auto& layer : m.layers) x = lstm_step(layer, x, LstmState::zeros(layer.hidden_size())).state.h;
  for (std::size_t d = 0; d < m.dense.size(); ++d) {
    x = m.dense[d].W * x + m.dense[d].b;
    if (d + 1 < m.dense.size()) x = x.array().tanh().matrix();
  }
  EXPECT_LE((y - m.from_unit(Vec2{x(0), x(1)})).norm(), 1e-9);
  EXPECT_THROW(model_forward(m, std::vector<Vec2>{}), DataError);
}

SequenceBatch random_batch(Random& rng, std::size_t length, Eigen::Index batch) {
  SequenceBatch b;
  for (std::size_t t = 0; t < length; ++t) {
    MatrixXd s(2, batch);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform();
    b.steps.push_back(s);
  }
  return b;
}

TEST(ModelForward, InferenceIsDeterministicAndDropoutFreeTrainingMatches) {
  RnnModel m = make_model({{4, 4}, 4, 0.3}, kArea, 3);
  Random rng(1);
  const SequenceBatch in = random_batch(rng, 6, 3);
  const auto a = forward_batch(m, in, false);
  const auto b = forward_batch(m, in, false);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(a.outputs[t], b.outputs[t]);
  m.dropout_rate = 0.0;
  Random drop(2);
  const auto c = forward_batch(m, in, true, &drop);
  const auto d = forward_batch(m, in, false);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(c.outputs[t], d.outputs[t]);
}

TEST(ModelForward, BatchedEqualsStreaming) {
  const RnnModel m = make_model({{4, 5}, 3, 0.0}, kArea, 12);
  std::vector<PositionEstimate> est;
  std::vector<Vec2> pts;
  for (int i = 0; i < 8; ++i) {
    pts.push_back({500.0 + 13.0 * i, 700.0 - 4.0 * i});
    est.push_back({10.0 * i, pts.back()});
  }
  const auto batched = model_forward(m, pts);
  const auto streamed = predict_next(m, est, 10.0);
  ASSERT_EQ(streamed.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_LE((streamed[i].predicted - batched[i]).norm(), 1e-9);
}

TEST(Backward, FiniteDifferenceEveryParameter) {
  RnnModel m = make_model({{4, 4}, 4, 0.0}, kArea, 21);
  Random rng(22);
  const SequenceBatch in = random_batch(rng, 5, 2);
  const SequenceBatch target = random_batch(rng, 5, 2);
  const RnnModel grad = backward_batch(m, forward_batch(m, in, false), target);

  auto params = param_spans(m);
  RnnModel g = grad;
  const auto grads = param_spans(g);
  const auto names = param_names(m);
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t k = 0; k < params[t].size(); ++k) {
      const double saved = params[t][k];
      params[t][k] = saved + eps;
      const double up = batch_loss(forward_batch(m, in, false), target);
      params[t][k] = saved - eps;
      const double down = batch_loss(forward_batch(m, in, false), target);
      params[t][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grads[t][k];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, rel);
      EXPECT_LE(rel, 1e-4) << names[t] << "[" << k << "] analytic " << analytic << " numeric " << numeric;
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Backward, ZeroLossGivesZeroGradients) {
  RnnModel m = make_model({{4, 4}, 3, 0.0}, kArea, 5);
  m.dense.back().W.setZero();
  m.dense.back().b << 0.25, 0.75;
  Random rng(5);
  const SequenceBatch in = random_batch(rng, 5, 3);
  SequenceBatch target = in;
  for (auto& s : target.steps) {
    s.row(0).setConstant(0.25);
    s.row(1).setConstant(0.75);
  }
  const auto cache = forward_batch(m, in, false);
  EXPECT_EQ(batch_loss(cache, target), 0.0);
  RnnModel g = backward_batch(m, cache, target);
  for (const auto& s : param_spans(g))
    for (double v : s) ASSERT_EQ(v, 0.0);
}

TEST(Backward, FrozenParameterHasZeroGradient) {
  RnnModel m = make_model({{4}, 2, 0.0}, kArea, 6);
  m.frozen = {"lstm0.W_hf", "dense1.b"};
  Random rng(7);
  const SequenceBatch in = random_batch(rng, 4, 2);
  const SequenceBatch target = random_batch(rng, 4, 2);
  const RnnModel g = backward_batch(m, forward_batch(m, in, false), target);
  EXPECT_TRUE(g.layers[0].W_hf.isZero(0.0));
  EXPECT_TRUE(g.dense[1].b.isZero(0.0));
  EXPECT_FALSE(g.layers[0].W_hi.isZero(0.0));
}

std::vector<std::span<double>> spans_of(std::vector<double>& v) { return {std::span<double>(v)}; }

TEST(Adam, ZeroGradientNoDecayIsIdentity) {
  std::vector<double> p{1.0, -2.0, 3.0};
  std::vector<double> g(3, 0.0);
  AdamState adam(spans_of(p));
  for (int i = 0; i < 10; ++i) adam.step(spans_of(p), spans_of(g), AdamConfig{});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, ConstantGradientStepTendsToLearningRate) {
  std::vector<double> p{0.0, 0.0};
  std::vector<double> g{0.3, -7.0};
  AdamConfig cfg;
  cfg.lr = 1e-2;
  AdamState adam(spans_of(p));
  std::vector<double> prev = p;
  for (int i = 0; i < 200; ++i) {
    prev = p;
    adam.step(spans_of(p), spans_of(g), cfg);
  }
  // Bias-corrected moments equal g and g^2 exactly, so each step is lr * g / (|g| + eps).
  EXPECT_NEAR(prev[0] - p[0], 1e-2 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(p[1] - prev[1], 1e-2 * 7.0 / (7.0 + 1e-8), 1e-12);
}

TEST(Adam, DecoupledDecayShrinksNorm) {
  std::vector<double> p{1.0, -2.0, 3.0};
  std::vector<double> g(3, 0.0);
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  AdamState adam(spans_of(p));
  double norm = std::sqrt(14.0);
  for (int i = 0; i < 5; ++i) {
    adam.step(spans_of(p), spans_of(g), cfg);
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    EXPECT_LT(n, norm);
    norm = n;
  }
}

TEST(Adam, FrozenTensorUntouched) {
  std::vector<double> a{1.0}, b{1.0};
  std::vector<double> ga{1.0}, gb{1.0};
  std::vector<std::span<double>> params{a, b}, grads{ga, gb};
  AdamState adam(params);
  adam.step(params, grads, AdamConfig{}, {true, false});
  EXPECT_EQ(a[0], 1.0);
  EXPECT_LT(b[0], 1.0);
}

std::vector<PositionStream> cv_streams(std::size_t count, std::size_t length, std::uint64_t seed) {
  Random rng(seed);
  std::vector<PositionStream> out;
  for (std::size_t n = 0; n < count; ++n) {
    const Vec2 p0{rng.uniform(600.0, 1500.0), rng.uniform(600.0, 1900.0)};
    const Vec2 v{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    PositionStream s;
    for (std::size_t t = 0; t < length; ++t) s.push_back(p0 + 10.0 * static_cast<double>(t) * v);
    out.push_back(std::move(s));
  }
  return out;
}

std::string dump(const RnnModel& m) { return model_to_json(m).dump(); }

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  const RnnModel m = make_model({{4}, 2, 0.2}, kArea, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_start = 0.0;
  cfg.lr_end = 0.0;
  const auto r = train(m, cv_streams(8, 6, 1), cv_streams(4, 6, 2), cfg);
  EXPECT_EQ(dump(r.model), dump(m));
  EXPECT_EQ(r.train_loss.size(), 1u);
  EXPECT_EQ(r.validation_loss.size(), 1u);
  EXPECT_THROW(train(m, {}, cv_streams(4, 6, 2), cfg), DataError);
}

TEST(Train, LossDropsTenfoldOnConstantVelocityData) {
  const RnnModel m = make_model({{16, 16}, 4, 0.0}, kArea, 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  cfg.weight_decay = 0.0;
  const auto r = train(m, cv_streams(32, 12, 3), cv_streams(8, 12, 4), cfg);
  EXPECT_LE(r.train_loss.back(), r.train_loss.front() / 10.0)
      << "first " << r.train_loss.front() << " last " << r.train_loss.back();
  EXPECT_EQ(r.validation_loss[r.best_epoch], *std::min_element(r.validation_loss.begin(), r.validation_loss.end()));
}

TEST(Train, DeterministicUnderSeed) {
  const RnnModel m = make_model({{6}, 2, 0.2}, kArea, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto train_set = cv_streams(10, 8, 5);
  const auto val_set = cv_streams(4, 8, 6);
  EXPECT_EQ(dump(train(m, train_set, val_set, cfg).model), dump(train(m, train_set, val_set, cfg).model));
}

TEST(ModelJson, RoundTripAndValidation) {
  const RnnModel m = make_model({{3, 5}, 4, 0.25}, kArea, 8);
  const RnnModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  EXPECT_EQ(dump(back), dump(m));
  EXPECT_EQ(back.dropout_rate, 0.25);

  auto bad_version = model_to_json(m);
  bad_version["version"] = 99;
  EXPECT_THROW(model_from_json(bad_version), DataError);
  auto bad_shape = model_to_json(m);
  bad_shape["tensors"]["lstm1.W_ii"]["cols"] = 4;
  EXPECT_THROW(model_from_json(bad_shape), DataError);
  auto missing = model_to_json(m);
  missing["tensors"].erase("dense0.b");
  EXPECT_THROW(model_from_json(missing), DataError);
  EXPECT_THROW(model_from_json(nlohmann::json::object()), DataError);
}

TEST(PredictNext, GapRejected) {
  const RnnModel m = make_model({{4}, 2, 0.0}, kArea, 1);
  const std::vector<PositionEstimate> est{{0.0, {500.0, 500.0}}, {10.0, {510.0, 500.0}}, {30.0, {530.0, 500.0}}};
  EXPECT_THROW(predict_next(m, est, 10.0), StreamError);
}

}  // namespace
}  // namespace uwauth
