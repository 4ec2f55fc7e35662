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

// Li-Net forecaster.
//
//   x [B,C,T] --time gate [B,T,T']--> T_t [B,C,T']
//             --channel gate [B,C,C']^T--> T_e [B,C',T']
//             --nonlinear block--> R_b [B,C',T']
//             --channel decode gate [B,C,C'] + skip T_t--> T_pre [B,C,T']
//             --time decode gate [B,P,T']^T--> out [B,C,P]
//
// Gate contraction axes:
//   time encode     [B,T,T']  normalized over T   (axis 1)
//   channel encode  [B,C,C']  normalized over C   (axis 1)
//   channel decode  [B,C,C']  normalized over C'  (axis 2)
//   time decode     [B,P,T']  normalized over T'  (axis 2)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "linet/data.hpp"
#include "linet/embedding.hpp"
#include "linet/error.hpp"
#include "linet/params.hpp"
#include "linet/sparse_gate.hpp"
#include "linet/tensor.hpp"

namespace linet {

enum class BlockKind { kMlp, kTransformer };

inline const char* to_string(BlockKind b) { return b == BlockKind::kMlp ? "mlp" : "transformer"; }

struct ModelConfig {
  std::size_t channels = 7;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t time_compression = 2;     // L_T
  std::size_t channel_compression = 2;  // L_C
  double time_retention = 0.5;
  double channel_retention = 0.7;
  std::size_t embed_dim = 32;
  BlockKind block = BlockKind::kMlp;
  std::size_t mlp_hidden = 0;  // 0 = embed_dim
  std::size_t gate_mlp_depth = 2;  // 1 = single affine map
  std::size_t tf_layers = 1;
  std::size_t tf_heads = 4;
  std::size_t store_vocab = 1;
  std::size_t item_vocab = 0;  // 0 = channels
  bool dense_gates = false;      // plain softmax on every gate
  bool zero_embeddings = false;  // feed zero vectors instead of embeddings

  std::size_t compressed_time() const { return std::max<std::size_t>(1, lookback / time_compression); }
  std::size_t compressed_channels() const {
    return std::max<std::size_t>(1, channels / channel_compression);
  }
  std::size_t hidden() const { return mlp_hidden ? mlp_hidden : embed_dim; }
  std::size_t items() const { return item_vocab ? item_vocab : channels; }
  std::size_t heads() const { return compressed_time() % tf_heads == 0 ? tf_heads : 1; }

  void validate() const {
    if (!channels || !lookback || !horizon || !embed_dim)
      throw ConfigError("channels, lookback, horizon and embed_dim must be positive");
    if (!time_compression || !channel_compression)
      throw ConfigError("compression levels must be positive");
    if (!(time_retention > 0 && time_retention <= 1) ||
        !(channel_retention > 0 && channel_retention <= 1))
      throw ConfigError("retention rates must be in (0, 1]");
    if (gate_mlp_depth != 1 && gate_mlp_depth != 2)
      throw ConfigError("gate_mlp_depth must be 1 or 2");
    if (block == BlockKind::kTransformer && (!tf_layers || !tf_heads))
      throw ConfigError("transformer block needs at least one layer and one head");
    if (!store_vocab) throw ConfigError("store_vocab must be positive");
    if (item_vocab && item_vocab < channels)
      throw ConfigError("item_vocab must cover every channel");
  }
};

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

namespace detail {

inline void gate_mlp_shapes(ShapeList& out, const std::string& prefix, std::size_t fin,
                            std::size_t fout, const ModelConfig& cfg) {
  if (cfg.gate_mlp_depth == 1) {
    out.push_back({prefix + ".l0.w", {fin, fout}});
    out.push_back({prefix + ".l0.b", {fout}});
    return;
  }
  const std::size_t h = cfg.hidden();
  out.push_back({prefix + ".l0.w", {fin, h}});
  out.push_back({prefix + ".l0.b", {h}});
  out.push_back({prefix + ".l1.w", {h, fout}});
  out.push_back({prefix + ".l1.b", {fout}});
}

}  // namespace detail

/// Every learnable tensor of the model, in a fixed order.
inline ShapeList linet_param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.embed_dim, Tc = cfg.compressed_time(), Cc = cfg.compressed_channels();
  ShapeList s;
  s.push_back({"emb.dow", {CalendarTables<double>::kDowVocab, D}});
  s.push_back({"emb.dom", {CalendarTables<double>::kDomVocab, D}});
  s.push_back({"emb.month", {CalendarTables<double>::kMonthVocab, D}});
  s.push_back({"emb.hour", {CalendarTables<double>::kHourVocab, D}});
  s.push_back({"emb.store", {cfg.store_vocab, D}});
  s.push_back({"emb.item", {cfg.items(), D}});
  detail::gate_mlp_shapes(s, "time_enc", 2 * D, Tc, cfg);
  detail::gate_mlp_shapes(s, "chan_enc1", Tc + D, Cc, cfg);
  detail::gate_mlp_shapes(s, "chan_enc2", Tc, Cc, cfg);
  if (cfg.block == BlockKind::kMlp) {
    s.push_back({"block.w_t", {Tc, Tc}});
    s.push_back({"block.b_t", {Tc}});
    s.push_back({"block.w_c", {Cc, Cc}});
    s.push_back({"block.b_c", {Cc}});
  } else {
    for (std::size_t l = 0; l < cfg.tf_layers; ++l) {
      const std::string p = "block.l" + std::to_string(l);
      s.push_back({p + ".ln1.gain", {Tc}});
      s.push_back({p + ".ln1.shift", {Tc}});
      for (const char* m : {"q", "k", "v", "o"}) {
        s.push_back({p + ".attn.w" + m, {Tc, Tc}});
        s.push_back({p + ".attn.b" + m, {Tc}});
      }
      s.push_back({p + ".ln2.gain", {Tc}});
      s.push_back({p + ".ln2.shift", {Tc}});
      s.push_back({p + ".ff.w1", {Tc, 4 * Tc}});
      s.push_back({p + ".ff.b1", {4 * Tc}});
      s.push_back({p + ".ff.w2", {4 * Tc, Tc}});
      s.push_back({p + ".ff.b2", {Tc}});
    }
  }
  detail::gate_mlp_shapes(s, "chan_dec", Tc, Cc, cfg);
  detail::gate_mlp_shapes(s, "time_dec", 2 * D, Tc, cfg);
  return s;
}

inline std::size_t param_count(const ModelConfig& cfg) { return count_scalars(linet_param_shapes(cfg)); }

inline std::size_t model_bytes(const ModelConfig& cfg, std::size_t element_width) {
  return param_count(cfg) * element_width;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Gate-logit producer: Linear -> ReLU -> Linear over the last axis (or a
/// single Linear when the config asks for depth 1).
template <class S>
Tensor<S> mlp_logits(const Tensor<S>& x, const ParamSet<S>& ps, const std::string& prefix) {
  const auto& w0 = ps.get(prefix + ".l0.w");
  const auto& b0 = ps.get(prefix + ".l0.b");
  if (!ps.contains(prefix + ".l1.w")) return linear(x, w0, &b0);
  const auto& w1 = ps.get(prefix + ".l1.w");
  const auto& b1 = ps.get(prefix + ".l1.b");
  return linear(relu(linear(x, w0, &b0)), w1, &b1);
}

template <class S>
GateOutput<S> apply_gate(const Tensor<S>& logits, double retention, std::size_t axis,
                         const ModelConfig& cfg, const GateMask* frozen) {
  if (cfg.dense_gates && !frozen) return dense_softmax_gate(logits, axis);
  return topk_softmax(logits, GateConfig{cfg.dense_gates ? 1.0 : retention, axis}, frozen);
}

namespace detail {

inline void expect_shape(const char* what, const Shape& got, const Shape& want) {
  if (got != want)
    throw ConfigError(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
                      shape_str(got));
}

}  // namespace detail

template <class S>
struct TimeEncoding {
  Tensor<S> t;  // T_t  [B,C,T']
  GateOutput<S> gate;  // T_te [B,T,T']
};

template <class S>
TimeEncoding<S> time_encode(const Tensor<S>& series, const Tensor<S>& hist_date_emb,
                            const Tensor<S>& store_emb, const ParamSet<S>& ps,
                            const ModelConfig& cfg, const GateMask* frozen = nullptr) {
  const std::size_t B = series.dim(0), C = cfg.channels, T = cfg.lookback, D = cfg.embed_dim;
  detail::expect_shape("time_encode series", series.shape(), {B, C, T});
  detail::expect_shape("time_encode date embedding", hist_date_emb.shape(), {B, T, D});
  detail::expect_shape("time_encode store embedding", store_emb.shape(), {B, T, D});
  auto logits = mlp_logits(concat_lastdim<S>({hist_date_emb, store_emb}), ps, "time_enc");
  auto gate = apply_gate(logits, cfg.time_retention, 1, cfg, frozen);
  return {matmul_batched(series, gate.weights), std::move(gate)};
}

template <class S>
struct ChannelEncoding {
  Tensor<S> e;     // T_e   [B,C',T']
  Tensor<S> ce1;   // [B,C,C']
  Tensor<S> ce2;   // [B,C,C'], reused by the decoder
  GateOutput<S> gate;  // T_ce [B,C,C']
};

template <class S>
ChannelEncoding<S> channel_encode(const Tensor<S>& t_t, const Tensor<S>& item_emb,
                                  const ParamSet<S>& ps, const ModelConfig& cfg,
                                  const GateMask* frozen = nullptr) {
  const std::size_t B = t_t.dim(0), C = cfg.channels, Tc = cfg.compressed_time();
  detail::expect_shape("channel_encode input", t_t.shape(), {B, C, Tc});
  detail::expect_shape("channel_encode item embedding", item_emb.shape(), {B, C, cfg.embed_dim});
  auto ce1 = mlp_logits(concat_lastdim<S>({t_t, item_emb}), ps, "chan_enc1");
  auto ce2 = mlp_logits(t_t, ps, "chan_enc2");
  auto gate = apply_gate(add(ce1, ce2), cfg.channel_retention, 1, cfg, frozen);
  auto e = matmul_batched(transpose_last2(gate.weights), t_t);
  return {std::move(e), std::move(ce1), std::move(ce2), std::move(gate)};
}

/// ReLU(x W_t + b_t) over time, then ReLU(. W_c + b_c) over channels.
template <class S>
Tensor<S> nonlinear_block_mlp(const Tensor<S>& t_e, const ParamSet<S>& ps) {
  const auto& wt = ps.get("block.w_t");
  const auto& wc = ps.get("block.w_c");
  if (wt.dim(0) != wt.dim(1) || wc.dim(0) != wc.dim(1))
    throw ConfigError("nonlinear block weights must be square");
  const auto& bt = ps.get("block.b_t");
  const auto& bc = ps.get("block.b_c");
  auto r_t = relu(linear(t_e, wt, &bt));
  auto r_c = relu(linear(transpose_last2(r_t), wc, &bc));
  return transpose_last2(r_c);
}

/// Pre-norm transformer encoder over the C' channel tokens of width T'.
/// Attention maps ([B,C',C'] per head and layer) are appended to `attention`
/// when it is non-null.
template <class S>
Tensor<S> nonlinear_block_transformer(const Tensor<S>& t_e, const ParamSet<S>& ps,
                                      const ModelConfig& cfg,
                                      std::vector<Tensor<S>>* attention = nullptr) {
  const std::size_t F = cfg.compressed_time(), H = cfg.heads(), dh = F / H;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  Tensor<S> x = t_e;
  for (std::size_t l = 0; l < cfg.tf_layers; ++l) {
    const std::string p = "block.l" + std::to_string(l);
    auto P = [&](const std::string& n) -> const Tensor<S>& { return ps.get(p + n); };
    auto h = layer_norm(x, P(".ln1.gain"), P(".ln1.shift"));
    auto q = linear(h, P(".attn.wq"), &P(".attn.bq"));
    auto k = linear(h, P(".attn.wk"), &P(".attn.bk"));
    auto v = linear(h, P(".attn.wv"), &P(".attn.bv"));
    std::vector<Tensor<S>> heads;
    for (std::size_t hi = 0; hi < H; ++hi) {
      auto qh = slice_lastdim(q, hi * dh, dh);
      auto kh = slice_lastdim(k, hi * dh, dh);
      auto vh = slice_lastdim(v, hi * dh, dh);
      auto a = softmax_axis(scale(matmul_batched(qh, transpose_last2(kh)), inv_sqrt), 2);
      if (attention) attention->push_back(a);
      heads.push_back(matmul_batched(a, vh));
    }
    auto mixed = H == 1 ? heads.front() : concat_lastdim(heads);
    x = add(x, linear(mixed, P(".attn.wo"), &P(".attn.bo")));
    auto h2 = layer_norm(x, P(".ln2.gain"), P(".ln2.shift"));
    x = add(x, linear(relu(linear(h2, P(".ff.w1"), &P(".ff.b1"))), P(".ff.w2"), &P(".ff.b2")));
  }
  return x;
}

template <class S>
struct ChannelDecoding {
  Tensor<S> pre;  // T_pre [B,C,T']
  GateOutput<S> gate;  // T_cd [B,C,C']
};

template <class S>
ChannelDecoding<S> channel_decode(const Tensor<S>& r_b, const Tensor<S>& t_t, const Tensor<S>& ce2,
                                  const ParamSet<S>& ps, const ModelConfig& cfg,
                                  const GateMask* frozen = nullptr) {
  const std::size_t B = t_t.dim(0), C = cfg.channels, Tc = cfg.compressed_time(),
                    Cc = cfg.compressed_channels();
  detail::expect_shape("channel_decode block output", r_b.shape(), {B, Cc, Tc});
  detail::expect_shape("channel_decode skip input", t_t.shape(), {B, C, Tc});
  detail::expect_shape("channel_decode grouping logits", ce2.shape(), {B, C, Cc});
  auto logits = add(mlp_logits(t_t, ps, "chan_dec"), ce2);
  auto gate = apply_gate(logits, cfg.channel_retention, 2, cfg, frozen);
  auto pre = add(matmul_batched(gate.weights, r_b), t_t);
  return {std::move(pre), std::move(gate)};
}

template <class S>
struct TimeDecoding {
  Tensor<S> out;  // [B,C,P]
  GateOutput<S> gate;  // T_td [B,P,T']
};

template <class S>
TimeDecoding<S> time_decode(const Tensor<S>& pre, const Tensor<S>& fut_date_emb,
                            const Tensor<S>& store_emb, const ParamSet<S>& ps,
                            const ModelConfig& cfg, const GateMask* frozen = nullptr) {
  const std::size_t B = pre.dim(0), P = cfg.horizon, D = cfg.embed_dim;
  detail::expect_shape("time_decode input", pre.shape(), {B, cfg.channels, cfg.compressed_time()});
  detail::expect_shape("time_decode date embedding", fut_date_emb.shape(), {B, P, D});
  detail::expect_shape("time_decode store embedding", store_emb.shape(), {B, P, D});
  auto logits = mlp_logits(concat_lastdim<S>({fut_date_emb, store_emb}), ps, "time_dec");
  auto gate = apply_gate(logits, cfg.time_retention, 2, cfg, frozen);
  return {matmul_batched(pre, transpose_last2(gate.weights)), std::move(gate)};
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

/// Gate selections of one forward pass, reusable to hold them fixed.
struct GateMasks {
  GateMask time_encode, channel_encode, channel_decode, time_decode;
};

template <class S>
struct ForwardTrace {
  Tensor<S> hist_date_emb, fut_date_emb, store_hist, store_fut, item_emb;
  GateOutput<S> time_gate;     // T_te [B,T,T']
  Tensor<S> t_t;               // [B,C,T']
  Tensor<S> ce1, ce2;          // [B,C,C']
  GateOutput<S> channel_gate;  // T_ce [B,C,C']
  Tensor<S> t_e;               // [B,C',T']
  Tensor<S> r_b;               // [B,C',T']
  GateOutput<S> decode_gate;   // T_cd [B,C,C']
  Tensor<S> t_pre;             // [B,C,T']
  GateOutput<S> time_decode_gate;  // T_td [B,P,T']
  Tensor<S> out;               // [B,C,P]
  std::vector<Tensor<S>> attention;

  GateMasks masks() const {
    return {time_gate.mask, channel_gate.mask, decode_gate.mask, time_decode_gate.mask};
  }
};

/// Optional hooks into a forward pass, for tests and gradient checks.
template <class S>
struct ForwardOptions {
  const GateMasks* frozen = nullptr;
  // Replaces the nonlinear block output when set.
  const Tensor<S>* block_override = nullptr;
};

template <class S>
class LiNet {
 public:
  using Scalar = S;

  explicit LiNet(ModelConfig cfg, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)), params_(init_params<S>(linet_param_shapes(cfg_), seed)) {}

  /// Adopts existing parameters; names and shapes must match the config.
  LiNet(ModelConfig cfg, ParamSet<S> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    const auto shapes = linet_param_shapes(cfg_);
    if (shapes.size() != params_.size())
      throw ConfigError("checkpoint has " + std::to_string(params_.size()) +
                        " tensors, config expects " + std::to_string(shapes.size()));
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (shapes[i].first != params_[i].name || shapes[i].second != params_[i].tensor.shape())
        throw ConfigError("parameter '" + params_[i].name + "' " +
                          shape_str(params_[i].tensor.shape()) + " does not match config (" +
                          shapes[i].first + " " + shape_str(shapes[i].second) + ")");
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  Tensor<S> forward(const WindowBatch<S>& batch) const { return forward(batch, nullptr, {}); }

  Tensor<S> forward(const WindowBatch<S>& batch, ForwardTrace<S>* trace,
                    const ForwardOptions<S>& opt = {}) const {
    ForwardTrace<S> local;
    ForwardTrace<S>& tr = trace ? *trace : local;
    const std::size_t B = batch.batch(), C = cfg_.channels, T = cfg_.lookback, P = cfg_.horizon;
    detail::expect_shape("batch history", batch.x.shape(), {B, C, T});
    if (batch.hist_calendar.size() != B * T || batch.fut_calendar.size() != B * P ||
        batch.store_ids.size() != B || batch.item_ids.size() != C)
      throw ConfigError("batch covariates do not match [B=" + std::to_string(B) + ", C=" +
                        std::to_string(C) + ", T=" + std::to_string(T) + ", P=" + std::to_string(P) +
                        "]");
    embed_inputs(batch, tr);
    const GateMasks* fz = opt.frozen;

    auto te = time_encode(batch.x, tr.hist_date_emb, tr.store_hist, params_, cfg_,
                          fz ? &fz->time_encode : nullptr);
    tr.t_t = te.t;
    tr.time_gate = std::move(te.gate);

    auto ce = channel_encode(tr.t_t, tr.item_emb, params_, cfg_, fz ? &fz->channel_encode : nullptr);
    tr.t_e = ce.e;
    tr.ce1 = ce.ce1;
    tr.ce2 = ce.ce2;
    tr.channel_gate = std::move(ce.gate);

    if (opt.block_override) {
      tr.r_b = *opt.block_override;
    } else if (cfg_.block == BlockKind::kMlp) {
      tr.r_b = nonlinear_block_mlp(tr.t_e, params_);
    } else {
      tr.r_b = nonlinear_block_transformer(tr.t_e, params_, cfg_, &tr.attention);
    }

    auto cd = channel_decode(tr.r_b, tr.t_t, tr.ce2, params_, cfg_, fz ? &fz->channel_decode : nullptr);
    tr.t_pre = cd.pre;
    tr.decode_gate = std::move(cd.gate);

    auto td = time_decode(tr.t_pre, tr.fut_date_emb, tr.store_fut, params_, cfg_,
                          fz ? &fz->time_decode : nullptr);
    tr.out = td.out;
    tr.time_decode_gate = std::move(td.gate);
    return tr.out;
  }

 private:
  CalendarTables<S> calendar_tables() const {
    return {{params_.get("emb.dow")}, {params_.get("emb.dom")}, {params_.get("emb.month")},
            {params_.get("emb.hour")}};
  }

  void embed_inputs(const WindowBatch<S>& batch, ForwardTrace<S>& tr) const {
    const std::size_t B = batch.batch(), C = cfg_.channels, T = cfg_.lookback, P = cfg_.horizon,
                      D = cfg_.embed_dim;
    if (cfg_.zero_embeddings) {
      tr.hist_date_emb = Tensor<S>::zeros({B, T, D});
      tr.fut_date_emb = Tensor<S>::zeros({B, P, D});
      tr.store_hist = Tensor<S>::zeros({B, T, D});
      tr.store_fut = Tensor<S>::zeros({B, P, D});
      tr.item_emb = Tensor<S>::zeros({B, C, D});
      return;
    }
    const auto tables = calendar_tables();
    tr.hist_date_emb = reshape(embed_calendar(batch.hist_calendar, tables), {B, T, D});
    tr.fut_date_emb = reshape(embed_calendar(batch.fut_calendar, tables), {B, P, D});
    if (batch.hist_date_vectors.defined()) {
      detail::expect_shape("precomputed history date vectors", batch.hist_date_vectors.shape(), {B, T, D});
      detail::expect_shape("precomputed future date vectors", batch.fut_date_vectors.shape(), {B, P, D});
      tr.hist_date_emb = add(tr.hist_date_emb, batch.hist_date_vectors);
      tr.fut_date_emb = add(tr.fut_date_emb, batch.fut_date_vectors);
    }
    // One store id per series, broadcast over every step.
    std::vector<std::size_t> sh, sf, items;
    for (std::size_t b = 0; b < B; ++b) {
      sh.insert(sh.end(), T, batch.store_ids[b]);
      sf.insert(sf.end(), P, batch.store_ids[b]);
      items.insert(items.end(), batch.item_ids.begin(), batch.item_ids.end());
    }
    const auto& store = params_.get("emb.store");
    tr.store_hist = reshape(gather_rows(store, sh), {B, T, D});
    tr.store_fut = reshape(gather_rows(store, sf), {B, P, D});
    tr.item_emb = reshape(gather_rows(params_.get("emb.item"), items), {B, C, D});
  }

  ModelConfig cfg_;
  ParamSet<S> params_;
};

// ---------------------------------------------------------------------------
// Three-layer MLP replacement of the encoder-decoder (ablation comparator)
// ---------------------------------------------------------------------------

struct MlpForecasterConfig {
  std::size_t channels = 7;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t hidden = 0;  // 0 = 4 * C * T' with T' = lookback / time_compression
  std::size_t time_compression = 2;

  std::size_t hidden_width() const {
    if (hidden) return hidden;
    return 4 * channels * std::max<std::size_t>(1, lookback / time_compression);
  }
};

inline ShapeList mlp_forecaster_shapes(const MlpForecasterConfig& cfg) {
  if (!cfg.channels || !cfg.lookback || !cfg.horizon || !cfg.time_compression)
    throw ConfigError("mlp3: channels, lookback, horizon and compression must be positive");
  const std::size_t in = cfg.channels * cfg.lookback, out = cfg.channels * cfg.horizon,
                    h = cfg.hidden_width();
  return {{"mlp3.l0.w", {in, h}}, {"mlp3.l0.b", {h}}, {"mlp3.l1.w", {h, h}},
          {"mlp3.l1.b", {h}},     {"mlp3.l2.w", {h, out}}, {"mlp3.l2.b", {out}}};
}

/// Flattened [C*T] -> hidden -> hidden -> [C*P] with ReLU between layers.
template <class S>
class MlpForecaster {
 public:
  using Scalar = S;

  explicit MlpForecaster(MlpForecasterConfig cfg, std::uint64_t seed = 0)
      : cfg_(cfg), params_(init_params<S>(mlp_forecaster_shapes(cfg_), seed)) {}

  const MlpForecasterConfig& config() const { return cfg_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  Tensor<S> forward(const WindowBatch<S>& batch) const {
    const std::size_t B = batch.batch();
    detail::expect_shape("mlp3 history", batch.x.shape(), {B, cfg_.channels, cfg_.lookback});
    auto P = [&](const char* n) -> const Tensor<S>& { return params_.get(n); };
    auto x = reshape(batch.x, {B, cfg_.channels * cfg_.lookback});
    auto h = relu(linear(x, P("mlp3.l0.w"), &P("mlp3.l0.b")));
    h = relu(linear(h, P("mlp3.l1.w"), &P("mlp3.l1.b")));
    return reshape(linear(h, P("mlp3.l2.w"), &P("mlp3.l2.b")), {B, cfg_.channels, cfg_.horizon});
  }

 private:
  MlpForecasterConfig cfg_;
  ParamSet<S> params_;
};

}  // namespace linet
