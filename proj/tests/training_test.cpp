/*
 * Copyright (c) 2026 The linet Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "linet/grad_check.hpp"
#include "linet/model.hpp"
#include "linet/training.hpp"
#include "test_util.hpp"

namespace linet {
namespace {

TEST(MetricsTest, Examples) {
  const auto a = Tensor64::vector({0.5, -2, 3});
  EXPECT_EQ(mse(a, a).item(), 0.0);
  EXPECT_EQ(mae(a, a).item(), 0.0);
  EXPECT_EQ(mse(Tensor64::vector({0, 2}), Tensor64::vector({1, 1})).item(), 1.0);
  EXPECT_EQ(mae(Tensor64::vector({0, 2}), Tensor64::vector({1, 1})).item(), 1.0);
  EXPECT_EQ(mse(Tensor64::vector({0, 0, 3}), Tensor64::vector({1, 1, 1})).item(), 2.0);
  EXPECT_NEAR(mae(Tensor64::vector({0, 0, 3}), Tensor64::vector({1, 1, 1})).item(), 4.0 / 3.0, 1e-15);
  EXPECT_THROW(mse(Tensor64::vector({0, 0}), Tensor64::vector({1, 1, 1})), ShapeError);
  EXPECT_THROW(mae(Tensor64::zeros({2, 3}), Tensor64::zeros({3, 2})), ShapeError);
}

TEST(MetricsTest, GradientsMatchFiniteDifferences) {
  const auto truth = Tensor64({2, 3}, {0.3, -1.0, 2.0, 0.7, 0.1, -0.4});
  const auto p = Tensor64({2, 3}, {1.1, 0.2, -0.5, 0.9, 1.4, 0.6}, true);
  auto r = grad_check([&](const Tensor64& x) { return mse(x, truth); }, p);
  EXPECT_TRUE(r.passed) << r.message;
  r = grad_check([&](const Tensor64& x) { return mae(x, truth); }, p);
  EXPECT_TRUE(r.passed) << r.message;
}

TEST(PersistenceTest, Examples) {
  WindowBatch<double> b;
  b.x = Tensor64({1, 2, 3}, {1, 2, 5, 0, 3, 7});
  b.y = Tensor64::zeros({1, 2, 4});
  EXPECT_EQ(persistence_baseline(b).values(), (std::vector<double>{5, 5, 5, 5, 7, 7, 7, 7}));

  b.x = Tensor64::full({2, 1, 5}, 3.25);
  b.y = Tensor64::full({2, 1, 3}, 3.25);
  EXPECT_EQ(mse(persistence_baseline(b), b.y).item(), 0.0);

  // Slope-1 ramp, last observed 4, targets 5..8: errors 1, 2, 3, 4.
  b.x = Tensor64({1, 2, 5}, {0, 1, 2, 3, 4, 10, 11, 12, 13, 14});
  b.y = Tensor64({1, 2, 4}, {5, 6, 7, 8, 15, 16, 17, 18});
  EXPECT_EQ(mae(persistence_baseline(b), b.y).item(), 2.5);
}

TEST(AdamWTest, ZeroGradientWithoutDecayIsNoOp) {
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({0.5, -1.5}));
  ps.zero_grad();
  TrainConfig cfg;
  cfg.weight_decay = 0;
  AdamW<double> opt(ps, cfg);
  for (int i = 0; i < 3; ++i) opt.step();
  EXPECT_EQ(ps.get("w").values(), (std::vector<double>{0.5, -1.5}));
  EXPECT_EQ(opt.step_count(), 3u);
}

TEST(AdamWTest, ZeroGradientAppliesPureDecay) {
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({0.5, -1.5}));
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.1;
  AdamW<double> opt(ps, cfg);
  opt.step();
  EXPECT_DOUBLE_EQ(ps.get("w")[0], 0.5 * (1 - 1e-3));
  EXPECT_DOUBLE_EQ(ps.get("w")[1], -1.5 * (1 - 1e-3));
}

TEST(AdamWTest, FirstStepGolden) {
  // m_hat = v_hat = 1, so the step is -lr / (1 + eps).
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({2.0}));
  sum(ps.get("w")).backward();
  TrainConfig cfg;
  cfg.weight_decay = 0;
  AdamW<double> opt(ps, cfg);
  opt.step();
  EXPECT_NEAR(ps.get("w")[0] - 2.0, -9.9999999e-4, 1e-15);
  EXPECT_NEAR(opt.first_moment(0)[0], 0.1, 1e-16);
  EXPECT_NEAR(opt.second_moment(0)[0], 1e-3, 1e-18);
}

TEST(AdamWTest, RejectsNonFiniteGradient) {
  ParamSet<double> ps;
  ps.add("bias", Tensor64::vector({1.0}));
  sum(scale(ps.get("bias"), std::nan(""))).backward();
  AdamW<double> opt(ps, TrainConfig{});
  try {
    opt.step();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("'bias'"), std::string::npos);
  }
}

TEST(AdamWTest, OneStepDecreasesConvexQuadratic) {
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({1.0, -2.0, 0.5}));
  const auto target = Tensor64::vector({0.2, 0.3, -0.1});
  auto loss = [&] { return mse(ps.get("w"), target); };
  const double before = loss().item();
  AdamW<double> opt(ps, TrainConfig{});
  loss().backward();
  opt.step();
  EXPECT_LT(loss().item(), before);
}

TEST(AdamWTest, ClipNormScalesGradient) {
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({0, 0}));
  sum(scale(ps.get("w"), 100.0)).backward();
  TrainConfig cfg;
  cfg.clip_norm = 1.0;
  cfg.weight_decay = 0;
  AdamW<double> opt(ps, cfg);
  opt.step();
  EXPECT_NEAR(opt.first_moment(0)[0], 0.1 * 100.0 / std::sqrt(2.0 * 100 * 100), 1e-15);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weight_decay = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(TrainConfig{}.batch_size, 16u);
  EXPECT_EQ(TrainConfig{}.max_epochs, 10u);
  EXPECT_EQ(TrainConfig{}.patience, 3u);
}

TEST(EarlyStopTest, TracksBestAndPatience) {
  ParamSet<double> ps;
  ps.add("w", Tensor64::vector({1.0}));
  auto w = ps.get("w");  // shares storage with the set
  EarlyStopState<double> s;
  EXPECT_FALSE(s.update(1.0, 1, ps, 2));
  w.mutable_data()[0] = 2.0;
  EXPECT_FALSE(s.update(0.5, 2, ps, 2));
  w.mutable_data()[0] = 3.0;
  EXPECT_FALSE(s.update(0.5, 3, ps, 2));  // equal is not an improvement
  EXPECT_EQ(s.epochs_since_improvement, 1u);
  EXPECT_TRUE(s.update(0.7, 4, ps, 2));
  EXPECT_EQ(s.best_epoch, 2u);
  EXPECT_EQ(s.best_val_mse, 0.5);
  EXPECT_EQ(s.best.get("w")[0], 2.0);
}

struct Splits {
  WindowDataset train, val;
};

Splits synthetic_splits(std::size_t C, std::size_t T, std::size_t P) {
  std::istringstream in(testing::synthetic_csv(400, C, 7));
  const auto raw = parse_csv(in);
  const auto sp = chronological_split(raw, SplitSpec{}, T + P);
  const auto norm = Normalizer::fit(sp.train);
  return {WindowDataset(norm.apply(sp.train), {T, P, 4, 0}),
          WindowDataset(norm.apply(sp.val), {T, P, 4, 0})};
}

ModelConfig small_model(std::size_t C, std::size_t T, std::size_t P) {
  ModelConfig cfg;
  cfg.channels = C;
  cfg.lookback = T;
  cfg.horizon = P;
  cfg.embed_dim = 8;
  return cfg;
}

TEST(TrainTest, DeterministicHistoryAndBestParameters) {
  const auto data = synthetic_splits(2, 16, 4);
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.seed = 5;
  LiNet<double> a(small_model(2, 16, 4), 3), b(small_model(2, 16, 4), 3);
  std::vector<EpochRecord> seen;
  const auto ha = train(a, data.train, data.val, tc, [&](const EpochRecord& e) { seen.push_back(e); });
  const auto hb = train(b, data.train, data.val, tc);
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  ASSERT_EQ(seen.size(), ha.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    EXPECT_EQ(ha.epochs[i].train_mse, hb.epochs[i].train_mse);
    EXPECT_EQ(ha.epochs[i].val_mse, hb.epochs[i].val_mse);
  }
  for (std::size_t i = 0; i < a.params().size(); ++i)
    EXPECT_EQ(a.params()[i].tensor.values(), b.params()[i].tensor.values());

  double best = INFINITY;
  for (const auto& e : ha.epochs) best = std::min(best, e.val_mse);
  EXPECT_EQ(ha.best_val_mse, best);
  EXPECT_EQ(evaluate(a, data.val).mse, best);
  EXPECT_EQ(ha.epochs[ha.best_epoch - 1].val_mse, best);
  EXPECT_TRUE(ha.epochs[ha.best_epoch - 1].improved);
  EXPECT_EQ(ha.total_steps, ha.epochs.size() * ((data.train.size() + 15) / 16));

  LiNet<double> c(small_model(2, 16, 4), 3);
  tc.seed = 6;
  const auto hc = train(c, data.train, data.val, tc);
  EXPECT_NE(hc.epochs[0].train_mse, ha.epochs[0].train_mse);
}

// Predicts persistence; its one parameter gets a zero gradient, so the
// validation MSE never changes after the first epoch.
struct FrozenModel {
  using Scalar = double;
  ParamSet<double> ps;
  FrozenModel(std::size_t T, std::size_t P) { ps.add("w", Tensor64::zeros({T, P})); }
  ParamSet<double>& params() { return ps; }
  const ParamSet<double>& params() const { return ps; }
  Tensor64 forward(const WindowBatch<double>& b) const {
    return add(persistence_baseline(b), scale(linear(b.x, ps.get("w")), 0.0));
  }
};

TEST(TrainTest, StopsAfterPatienceWithoutImprovement) {
  const auto data = synthetic_splits(2, 16, 4);
  TrainConfig tc;
  tc.weight_decay = 0;
  tc.patience = 2;
  tc.max_steps_per_epoch = 1;
  FrozenModel m(16, 4);
  const auto h = train(m, data.train, data.val, tc);
  ASSERT_EQ(h.epochs.size(), 3u);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.best_epoch, 1u);
  EXPECT_TRUE(h.epochs[0].improved);
  EXPECT_FALSE(h.epochs[1].improved);
  EXPECT_EQ(h.epochs[2].val_mse, h.epochs[0].val_mse);
  for (const auto& e : h.epochs) EXPECT_EQ(e.steps, 1u);

  tc.patience = 10;
  FrozenModel full(16, 4);
  const auto g = train(full, data.train, data.val, tc);
  EXPECT_EQ(g.epochs.size(), tc.max_epochs);
  EXPECT_FALSE(g.stopped_early);
}

TEST(TrainTest, RejectsEmptySplitsAndBadConfig) {
  const auto data = synthetic_splits(2, 16, 4);
  std::istringstream in(testing::synthetic_csv(10, 2, 1));
  const WindowDataset empty(parse_csv(in), {16, 4, 1, 0});
  LiNet<double> net(small_model(2, 16, 4), 1);
  EXPECT_THROW(train(net, empty, data.val, TrainConfig{}), ConfigError);
  EXPECT_THROW(train(net, data.train, empty, TrainConfig{}), ConfigError);
  TrainConfig bad;
  bad.patience = 0;
  EXPECT_THROW(train(net, data.train, data.val, bad), ConfigError);
  EXPECT_THROW(evaluate(net, empty), ConfigError);
}

TEST(TrainTest, RepeatedStepsOnOneBatchReduceLoss) {
  std::istringstream in(testing::synthetic_csv(200, 3, 7, 0.0));
  const auto raw = parse_csv(in);
  const WindowDataset ds(Normalizer::fit(raw).apply(raw), {32, 8, 8, 0});
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto batch = ds.batch<double>(idx);
  ModelConfig cfg;
  cfg.channels = 3;
  cfg.lookback = 32;
  cfg.horizon = 8;
  LiNet<double> net(cfg, 2);
  AdamW<double> opt(net.params(), TrainConfig{});
  const double first = train_step(net, opt, batch);
  double last = first;
  for (int s = 1; s < 200; ++s) last = train_step(net, opt, batch);
  EXPECT_LT(last, 0.5 * first);
}

TEST(EvaluateTest, PerWindowMetricsAverageToTotals) {
  const auto data = synthetic_splits(2, 16, 4);
  LiNet<double> net(small_model(2, 16, 4), 1);
  const auto r = evaluate(net, data.val, 5);
  ASSERT_EQ(r.window_mse.size(), data.val.size());
  double s = 0;
  for (double v : r.window_mse) s += v;
  EXPECT_NEAR(s / static_cast<double>(r.window_mse.size()), r.mse, 1e-12);
  EXPECT_EQ(r.elements, data.val.size() * 2 * 4);
  EXPECT_NEAR(evaluate(net, data.val, 64).mse, r.mse, 1e-12);
}

TEST(FitCosentTest, LossDecreases) {
  std::vector<Tensor64> vs{Tensor64::vector({1, 0, 0}, true), Tensor64::vector({0, 1, 0}, true),
                           Tensor64::vector({0.9, 0.1, 0.2}, true)};
  TrainConfig tc;
  tc.lr = 0.05;
  const auto losses = fit_cosent(vs, {{0, 1}}, {{0, 2}}, 20.0, 100, tc);
  ASSERT_EQ(losses.size(), 100u);
  for (std::size_t i = 1; i < 20; ++i) EXPECT_LT(losses[i], losses[i - 1]);
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  EXPECT_GT(cosine(vs[0], vs[1])[0], cosine(vs[0], vs[2])[0]);
}

}  // namespace
}  // namespace linet
