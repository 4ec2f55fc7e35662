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

// Finite-difference checks over every differentiable op, each model stage
// and the whole forecaster. Shared by the CLI, the acceptance suite and the
// unit tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "linet/embedding.hpp"
#include "linet/grad_check.hpp"
#include "linet/model.hpp"
#include "linet/sparse_gate.hpp"
#include "linet/tensor.hpp"
#include "linet/training.hpp"

namespace linet {

struct GradCheckEntry {
  std::string scope;  // "op", "module" or "model"
  std::string name;
  GradCheckReport report;
};

namespace detail {

/// Normal samples pushed at least `gap` away from zero, so relu and |.|
/// kinks are never within a finite-difference step.
inline Tensor64 random_tensor(const Shape& s, std::mt19937_64& rng, double gap = 1e-2) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> d(shape_numel(s));
  for (auto& v : d) {
    v = dist(rng);
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
  return Tensor64(s, std::move(d), true);
}

inline Shape random_shape(std::mt19937_64& rng, std::size_t rank, std::size_t max_extent = 5) {
  std::uniform_int_distribution<std::size_t> e(1, max_extent);
  Shape s;
  for (std::size_t i = 0; i < rank; ++i) s.push_back(e(rng));
  return s;
}

/// sum(w * f(x)) with fixed random weights w, so every output coordinate
/// contributes a distinct amount.
inline Tensor64 weighted_sum(const Tensor64& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<double> w(y.numel());
  for (auto& v : w) v = u(rng);
  return sum(mul(y, Tensor64(y.shape(), std::move(w))));
}

/// Tiny model inputs with tie-free random covariates.
inline WindowBatch<double> random_batch(const ModelConfig& cfg, std::size_t B, std::mt19937_64& rng) {
  WindowBatch<double> wb;
  wb.x = random_tensor({B, cfg.channels, cfg.lookback}, rng);
  wb.y = random_tensor({B, cfg.channels, cfg.horizon}, rng);
  wb.x.set_requires_grad(false);
  wb.y.set_requires_grad(false);
  std::uniform_int_distribution<int> dow(0, 6), dom(1, 28), mon(1, 12), hr(0, 23);
  for (std::size_t i = 0; i < B * cfg.lookback; ++i) wb.hist_calendar.push_back({dow(rng), dom(rng), mon(rng), hr(rng)});
  for (std::size_t i = 0; i < B * cfg.horizon; ++i) wb.fut_calendar.push_back({dow(rng), dom(rng), mon(rng), hr(rng)});
  wb.store_ids.assign(B, 0);
  for (std::size_t c = 0; c < cfg.channels; ++c) wb.item_ids.push_back(c);
  return wb;
}

/// A model whose zero-initialised biases and shifts are replaced with random
/// values. With zero biases a relu input can sit exactly on the kink (an
/// all-zero row times any weight), which finite differences cannot resolve.
inline LiNet<double> checkable_net(const ModelConfig& cfg, std::uint64_t seed) {
  LiNet<double> net(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : net.params()) {
    auto d = p.tensor.mutable_data();
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
      const auto r = random_tensor(p.tensor.shape(), rng);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.1 * r.data()[i];
    }
  }
  return net;
}

}  // namespace detail

/// Every tensor op over `trials` random shapes each.
inline std::vector<GradCheckEntry> gradcheck_ops(std::uint64_t seed, std::size_t trials = 20,
                                                 const GradCheckOptions& opt = {}) {
  using detail::random_shape;
  using detail::random_tensor;
  using detail::weighted_sum;
  std::vector<GradCheckEntry> out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> rank_d(1, 3), rank23(2, 3);

  auto run = [&](const std::string& name, const std::function<GradCheckReport(std::uint64_t)>& one) {
    GradCheckEntry e{"op", name, {}};
    std::size_t coords = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      auto r = one(rng());
      coords += r.coordinates;
      if (!r.passed || r.max_rel_error >= e.report.max_rel_error) e.report = r;
      if (!r.passed) break;
    }
    e.report.coordinates = coords;
    out.push_back(std::move(e));
  };

  run("matmul_batched", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto d = random_shape(g, 4);
    auto a = random_tensor({d[0], d[1], d[2]}, g), b = random_tensor({d[0], d[2], d[3]}, g);
    return grad_check([&] { return weighted_sum(matmul_batched(a, b), s); }, {a, b}, opt);
  });
  run("transpose_last2", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, rank23(g)), g);
    return grad_check([&] { return weighted_sum(transpose_last2(x), s); }, {x}, opt);
  });
  run("concat_lastdim", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    auto sh2 = sh;
    sh2.back() = random_shape(g, 1)[0];
    auto a = random_tensor(sh, g), b = random_tensor(sh2, g);
    return grad_check([&] { return weighted_sum(concat_lastdim<double>({a, b}), s); }, {a, b}, opt);
  });
  run("slice_lastdim", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    sh.back() += 1;
    auto x = random_tensor(sh, g);
    return grad_check([&] { return weighted_sum(slice_lastdim(x, 1, sh.back() - 1), s); }, {x}, opt);
  });
  run("reshape", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, 3), g);
    return grad_check([&] { return weighted_sum(reshape(x, {x.numel()}), s); }, {x}, opt);
  });
  for (auto kind : {BinaryKind::kAdd, BinaryKind::kSub, BinaryKind::kMul}) {
    const char* nm = kind == BinaryKind::kAdd ? "add" : kind == BinaryKind::kSub ? "sub" : "mul";
    run(nm, [&, kind](std::uint64_t s) {
      std::mt19937_64 g(s);
      auto sh = random_shape(g, rank_d(g));
      auto a = random_tensor(sh, g);
      // Alternate full-shape operands with trailing-dim bias operands.
      auto b = random_tensor((s & 1) ? Shape{sh.back()} : sh, g);
      return grad_check([&] { return weighted_sum(detail::binary(a, b, kind), s); }, {a, b}, opt);
    });
  }
  run("scale", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, rank_d(g)), g);
    return grad_check([&] { return weighted_sum(scale(x, -1.7), s); }, {x}, opt);
  });
  run("relu", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, rank_d(g)), g);
    return grad_check([&] { return weighted_sum(relu(x), s); }, {x}, opt);
  });
  run("softmax_axis", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    const std::size_t axis = std::uniform_int_distribution<std::size_t>(0, sh.size() - 1)(g);
    auto x = random_tensor(sh, g);
    return grad_check([&] { return weighted_sum(softmax_axis(x, axis), s); }, {x}, opt);
  });
  run("linear", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    auto x = random_tensor(sh, g);
    auto w = random_tensor({sh.back(), random_shape(g, 1)[0]}, g);
    auto b = random_tensor({w.dim(1)}, g);
    return grad_check([&] { return weighted_sum(linear(x, w, &b), s); }, {x, w, b}, opt);
  });
  run("layer_norm", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    sh.back() += 1;
    auto x = random_tensor(sh, g), gain = random_tensor({sh.back()}, g),
         shift = random_tensor({sh.back()}, g);
    return grad_check([&] { return weighted_sum(layer_norm(x, gain, shift), s); }, {x, gain, shift}, opt);
  });
  run("gather_rows", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto tab = random_tensor(random_shape(g, 2), g);
    std::vector<std::size_t> idx;
    for (int i = 0; i < 6; ++i) idx.push_back(std::uniform_int_distribution<std::size_t>(0, tab.dim(0) - 1)(g));
    return grad_check([&] { return weighted_sum(gather_rows(tab, idx), s); }, {tab}, opt);
  });
  run("sum_mean", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, rank_d(g)), g);
    return grad_check([&] { return add(sum(mul(x, x)), scale(mean(x), 3.0)); }, {x}, opt);
  });
  run("log1p_sum_exp", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto x = random_tensor(random_shape(g, 1), g);
    return grad_check([&] { return log1p_sum_exp(x); }, {x}, opt);
  });
  run("mse", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    auto a = random_tensor(sh, g), b = random_tensor(sh, g);
    return grad_check([&] { return mse(a, b); }, {a, b}, opt);
  });
  run("mae", [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto sh = random_shape(g, rank_d(g));
    auto a = random_tensor(sh, g), b = random_tensor(sh, g);
    return grad_check([&] { return mae(a, b); }, {a, b}, opt);
  });
  return out;
}

/// Gate, embedding utilities and each model stage.
inline std::vector<GradCheckEntry> gradcheck_modules(std::uint64_t seed, std::size_t trials = 20,
                                                     const GradCheckOptions& opt = {}) {
  using detail::random_tensor;
  using detail::weighted_sum;
  std::vector<GradCheckEntry> out;
  std::mt19937_64 rng(seed);
  auto run = [&](const std::string& name, std::size_t n,
                 const std::function<GradCheckReport(std::uint64_t)>& one) {
    GradCheckEntry e{"module", name, {}};
    std::size_t coords = 0;
    for (std::size_t t = 0; t < n; ++t) {
      auto r = one(rng());
      coords += r.coordinates;
      if (!r.passed || r.max_rel_error >= e.report.max_rel_error) e.report = r;
      if (!r.passed) break;
    }
    e.report.coordinates = coords;
    out.push_back(std::move(e));
  };

  run("topk_softmax(frozen mask)", trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(2, 12)(g);
    const double ret = std::uniform_real_distribution<double>(0.1, 1.0)(g);
    auto z = random_tensor({3, len}, g);
    const GateConfig cfg{ret, 1};
    const auto mask = topk_softmax(z, cfg).mask;
    return grad_check([&] { return weighted_sum(topk_softmax(z, cfg, &mask).weights, s); }, {z}, opt);
  });
  run("cosine", trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto u = random_tensor({6}, g), v = random_tensor({6}, g);
    return grad_check([&] { return cosine(u, v); }, {u, v}, opt);
  });
  run("cosent_loss", trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    std::vector<Tensor64> vs;
    for (int i = 0; i < 5; ++i) vs.push_back(random_tensor({4}, g));
    PairBatch<double> pb{vs, {{0, 1}, {2, 3}}, {{0, 4}, {1, 3}}, 2.0};
    return grad_check([&] { return cosent_loss(pb); }, vs, opt);
  });
  run("mean_pool", trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto h = random_tensor({4, 3}, g);
    return grad_check([&] { return weighted_sum(mean_pool(h), s); }, {h}, opt);
  });

  ModelConfig cfg;
  cfg.channels = 4;
  cfg.lookback = 8;
  cfg.horizon = 4;
  cfg.embed_dim = 6;
  const std::size_t B = 2, Tc = cfg.compressed_time(), Cc = cfg.compressed_channels(),
                    D = cfg.embed_dim;
  const std::size_t model_trials = std::max<std::size_t>(1, trials / 4);

  run("nonlinear_block_mlp", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto net = detail::checkable_net(cfg, s);
    auto te = random_tensor({B, Cc, Tc}, g);
    std::vector<Tensor64> inputs{te, net.params().get("block.w_t"), net.params().get("block.b_t"),
                                 net.params().get("block.w_c"), net.params().get("block.b_c")};
    return grad_check([&] { return weighted_sum(nonlinear_block_mlp(te, net.params()), s); }, inputs, opt);
  });
  run("nonlinear_block_transformer", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    ModelConfig tc = cfg;
    tc.block = BlockKind::kTransformer;
    tc.tf_heads = 2;
    auto net = detail::checkable_net(tc, s);
    auto te = random_tensor({B, Cc, Tc}, g);
    std::vector<Tensor64> inputs{te};
    for (const auto& p : net.params())
      if (p.name.rfind("block.", 0) == 0) inputs.push_back(p.tensor);
    return grad_check([&] { return weighted_sum(nonlinear_block_transformer(te, net.params(), tc), s); },
                      inputs, opt);
  });
  run("time_encode", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto net = detail::checkable_net(cfg, s);
    auto x = random_tensor({B, cfg.channels, cfg.lookback}, g);
    auto de = random_tensor({B, cfg.lookback, D}, g), se = random_tensor({B, cfg.lookback, D}, g);
    const auto mask = time_encode(x, de, se, net.params(), cfg).gate.mask;
    return grad_check(
        [&] { return weighted_sum(time_encode(x, de, se, net.params(), cfg, &mask).t, s); },
        {x, de, se, net.params().get("time_enc.l0.w"), net.params().get("time_enc.l1.w"),
         net.params().get("time_enc.l1.b")},
        opt);
  });
  run("channel_encode", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto net = detail::checkable_net(cfg, s);
    auto tt = random_tensor({B, cfg.channels, Tc}, g), ie = random_tensor({B, cfg.channels, D}, g);
    const auto mask = channel_encode(tt, ie, net.params(), cfg).gate.mask;
    return grad_check(
        [&] { return weighted_sum(channel_encode(tt, ie, net.params(), cfg, &mask).e, s); },
        {tt, ie, net.params().get("chan_enc1.l0.w"), net.params().get("chan_enc2.l1.w")}, opt);
  });
  run("channel_decode", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto net = detail::checkable_net(cfg, s);
    auto rb = random_tensor({B, Cc, Tc}, g), tt = random_tensor({B, cfg.channels, Tc}, g),
         ce2 = random_tensor({B, cfg.channels, Cc}, g);
    const auto mask = channel_decode(rb, tt, ce2, net.params(), cfg).gate.mask;
    return grad_check(
        [&] { return weighted_sum(channel_decode(rb, tt, ce2, net.params(), cfg, &mask).pre, s); },
        {rb, tt, ce2, net.params().get("chan_dec.l0.w"), net.params().get("chan_dec.l1.b")}, opt);
  });
  run("time_decode", model_trials, [&](std::uint64_t s) {
    std::mt19937_64 g(s);
    auto net = detail::checkable_net(cfg, s);
    auto pre = random_tensor({B, cfg.channels, Tc}, g), de = random_tensor({B, cfg.horizon, D}, g),
         se = random_tensor({B, cfg.horizon, D}, g);
    const auto mask = time_decode(pre, de, se, net.params(), cfg).gate.mask;
    return grad_check(
        [&] { return weighted_sum(time_decode(pre, de, se, net.params(), cfg, &mask).out, s); },
        {pre, de, se, net.params().get("time_dec.l0.w"), net.params().get("time_dec.l1.w")}, opt);
  });
  return out;
}

/// MSE of the full forecaster against random targets, every parameter
/// checked, gate selections frozen at their values for the unperturbed input.
inline GradCheckReport gradcheck_full_model(const ModelConfig& cfg, std::size_t batch,
                                            std::uint64_t seed, const GradCheckOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  auto net = detail::checkable_net(cfg, seed);
  const auto wb = detail::random_batch(cfg, batch, rng);
  ForwardTrace<double> trace;
  {
    NoGradGuard ng;
    net.forward(wb, &trace);
  }
  const GateMasks masks = trace.masks();
  ForwardOptions<double> fo;
  fo.frozen = &masks;
  std::vector<Tensor64> inputs;
  for (const auto& p : net.params()) inputs.push_back(p.tensor);
  return grad_check([&] { return mse(net.forward(wb, nullptr, fo), wb.y); }, inputs, opt);
}

/// Default tiny configuration used for the whole-model checks.
inline ModelConfig gradcheck_model_config(BlockKind block = BlockKind::kMlp) {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.lookback = 8;
  cfg.horizon = 4;
  cfg.time_compression = 2;
  cfg.channel_compression = 2;
  cfg.block = block;
  if (block == BlockKind::kTransformer) cfg.tf_heads = 2;
  return cfg;
}

inline std::vector<GradCheckEntry> gradcheck_models(std::uint64_t seed, const GradCheckOptions& opt = {}) {
  std::vector<GradCheckEntry> out;
  out.push_back({"model", "linet(mlp block) + mse",
                 gradcheck_full_model(gradcheck_model_config(BlockKind::kMlp), 2, seed, opt)});
  out.push_back({"model", "linet(transformer block) + mse",
                 gradcheck_full_model(gradcheck_model_config(BlockKind::kTransformer), 2, seed + 1, opt)});
  return out;
}

}  // namespace linet
