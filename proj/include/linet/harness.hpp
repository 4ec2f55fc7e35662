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

// Experiment runner: config files, model variants, run reports and the
// scaling benchmark. The command-line front end lives in tools/.

#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include "linet/checkpoint.hpp"
#include "linet/data.hpp"
#include "linet/error.hpp"
#include "linet/gradcheck_suite.hpp"
#include "linet/model.hpp"
#include "linet/training.hpp"

namespace linet {

using Record = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Variant { kFull, kSoftmax, kPrimitive, kMlp3 };
enum class ReportFormat { kJsonl, kCsv };
enum class DType { kF32, kF64 };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kSoftmax: return "softmax";
    case Variant::kPrimitive: return "primitive";
    case Variant::kMlp3: return "mlp3";
  }
  return "?";
}
inline const char* to_string(ReportFormat f) { return f == ReportFormat::kJsonl ? "jsonl" : "csv"; }
inline const char* to_string(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "softmax") return Variant::kSoftmax;
  if (s == "primitive") return Variant::kPrimitive;
  if (s == "mlp3" || s == "mlp") return Variant::kMlp3;
  throw ConfigError("unknown variant '" + s + "' (expected full, softmax, primitive or mlp3)");
}

inline ReportFormat parse_format(const std::string& s) {
  if (s == "jsonl") return ReportFormat::kJsonl;
  if (s == "csv") return ReportFormat::kCsv;
  throw ConfigError("unknown format '" + s + "' (expected jsonl or csv)");
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::kFull, Variant::kSoftmax, Variant::kPrimitive,
                                      Variant::kMlp3};
  return v;
}

namespace detail {

inline std::string trim_ws(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(out))
    throw ConfigError("'" + key + "' expects a real number, got '" + v + "'");
  return out;
}

/// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : std::to_string(v);
}

}  // namespace detail

struct ExperimentConfig {
  std::string dataset;
  std::string embedding_file;  // optional precomputed date vectors
  std::string out = "runs";
  Variant variant = Variant::kFull;
  ReportFormat format = ReportFormat::kJsonl;
  DType dtype = DType::kF32;
  std::uint64_t seed = 0;
  ModelConfig model;  // channels is taken from the dataset
  TrainConfig train;
  SplitSpec split;
  std::size_t stride = 1;             // training window stride
  std::size_t eval_stride = 1;        // validation and test window stride
  std::size_t max_train_windows = 0;  // raise the stride until train holds at most this many; 0 = off
  std::size_t eval_batch = 64;
  std::size_t store_id = 0;
  std::size_t mlp3_hidden = 0;  // 0 = 4 * C * T'

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{
        "dataset", "embedding_file", "out", "variant", "format", "dtype", "seed",
        "lookback", "horizon", "time_compression", "channel_compression", "time_retention",
        "channel_retention", "embed_dim", "block", "mlp_hidden", "gate_mlp_depth", "tf_layers",
        "tf_heads", "store_vocab", "item_vocab", "lr", "beta1", "beta2", "eps", "weight_decay",
        "batch_size", "max_epochs", "patience", "clip_norm", "max_steps_per_epoch", "split_train",
        "split_val", "split_test", "stride", "eval_stride", "max_train_windows", "eval_batch",
        "store_id", "mlp3_hidden"};
    return k;
  }

  void set(const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim_ws(raw);
    if (key == "dataset") dataset = v;
    else if (key == "embedding_file") embedding_file = v;
    else if (key == "out") out = v;
    else if (key == "variant") variant = parse_variant(v);
    else if (key == "format") format = parse_format(v);
    else if (key == "dtype") {
      if (v == "f32" || v == "float32") dtype = DType::kF32;
      else if (v == "f64" || v == "float64") dtype = DType::kF64;
      else throw ConfigError("'dtype' expects f32 or f64, got '" + v + "'");
    }
    else if (key == "seed") seed = parse_u64(key, v);
    else if (key == "lookback") model.lookback = parse_size(key, v);
    else if (key == "horizon") model.horizon = parse_size(key, v);
    else if (key == "time_compression") model.time_compression = parse_size(key, v);
    else if (key == "channel_compression") model.channel_compression = parse_size(key, v);
    else if (key == "time_retention") model.time_retention = parse_real(key, v);
    else if (key == "channel_retention") model.channel_retention = parse_real(key, v);
    else if (key == "embed_dim") model.embed_dim = parse_size(key, v);
    else if (key == "block") {
      if (v == "mlp") model.block = BlockKind::kMlp;
      else if (v == "transformer") model.block = BlockKind::kTransformer;
      else throw ConfigError("'block' expects mlp or transformer, got '" + v + "'");
    }
    else if (key == "mlp_hidden") model.mlp_hidden = parse_size(key, v);
    else if (key == "gate_mlp_depth") model.gate_mlp_depth = parse_size(key, v);
    else if (key == "tf_layers") model.tf_layers = parse_size(key, v);
    else if (key == "tf_heads") model.tf_heads = parse_size(key, v);
    else if (key == "store_vocab") model.store_vocab = parse_size(key, v);
    else if (key == "item_vocab") model.item_vocab = parse_size(key, v);
    else if (key == "lr") train.lr = parse_real(key, v);
    else if (key == "beta1") train.beta1 = parse_real(key, v);
    else if (key == "beta2") train.beta2 = parse_real(key, v);
    else if (key == "eps") train.eps = parse_real(key, v);
    else if (key == "weight_decay") train.weight_decay = parse_real(key, v);
    else if (key == "batch_size") train.batch_size = parse_size(key, v);
    else if (key == "max_epochs") train.max_epochs = parse_size(key, v);
    else if (key == "patience") train.patience = parse_size(key, v);
    else if (key == "clip_norm") train.clip_norm = parse_real(key, v);
    else if (key == "max_steps_per_epoch") train.max_steps_per_epoch = parse_size(key, v);
    else if (key == "split_train") split.train = parse_real(key, v);
    else if (key == "split_val") split.val = parse_real(key, v);
    else if (key == "split_test") split.test = parse_real(key, v);
    else if (key == "stride") stride = parse_size(key, v);
    else if (key == "eval_stride") eval_stride = parse_size(key, v);
    else if (key == "max_train_windows") max_train_windows = parse_size(key, v);
    else if (key == "eval_batch") eval_batch = parse_size(key, v);
    else if (key == "store_id") store_id = parse_size(key, v);
    else if (key == "mlp3_hidden") mlp3_hidden = parse_size(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  std::string get(const std::string& key) const {
    using detail::format_real;
    if (key == "dataset") return dataset;
    if (key == "embedding_file") return embedding_file;
    if (key == "out") return out;
    if (key == "variant") return to_string(variant);
    if (key == "format") return to_string(format);
    if (key == "dtype") return to_string(dtype);
    if (key == "seed") return std::to_string(seed);
    if (key == "lookback") return std::to_string(model.lookback);
    if (key == "horizon") return std::to_string(model.horizon);
    if (key == "time_compression") return std::to_string(model.time_compression);
    if (key == "channel_compression") return std::to_string(model.channel_compression);
    if (key == "time_retention") return format_real(model.time_retention);
    if (key == "channel_retention") return format_real(model.channel_retention);
    if (key == "embed_dim") return std::to_string(model.embed_dim);
    if (key == "block") return to_string(model.block);
    if (key == "mlp_hidden") return std::to_string(model.mlp_hidden);
    if (key == "gate_mlp_depth") return std::to_string(model.gate_mlp_depth);
    if (key == "tf_layers") return std::to_string(model.tf_layers);
    if (key == "tf_heads") return std::to_string(model.tf_heads);
    if (key == "store_vocab") return std::to_string(model.store_vocab);
    if (key == "item_vocab") return std::to_string(model.item_vocab);
    if (key == "lr") return format_real(train.lr);
    if (key == "beta1") return format_real(train.beta1);
    if (key == "beta2") return format_real(train.beta2);
    if (key == "eps") return format_real(train.eps);
    if (key == "weight_decay") return format_real(train.weight_decay);
    if (key == "batch_size") return std::to_string(train.batch_size);
    if (key == "max_epochs") return std::to_string(train.max_epochs);
    if (key == "patience") return std::to_string(train.patience);
    if (key == "clip_norm") return format_real(train.clip_norm);
    if (key == "max_steps_per_epoch") return std::to_string(train.max_steps_per_epoch);
    if (key == "split_train") return format_real(split.train);
    if (key == "split_val") return format_real(split.val);
    if (key == "split_test") return format_real(split.test);
    if (key == "stride") return std::to_string(stride);
    if (key == "eval_stride") return std::to_string(eval_stride);
    if (key == "max_train_windows") return std::to_string(max_train_windows);
    if (key == "eval_batch") return std::to_string(eval_batch);
    if (key == "store_id") return std::to_string(store_id);
    if (key == "mlp3_hidden") return std::to_string(mlp3_hidden);
    throw ConfigError("unknown config key '" + key + "'");
  }

  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> out_kv;
    for (const auto& k : keys()) out_kv.emplace_back(k, get(k));
    return out_kv;
  }

  /// `key = value` lines; `#` starts a comment; blank lines are ignored.
  static ExperimentConfig parse(std::istream& in) { return parse(in, ExperimentConfig{}); }

  static ExperimentConfig parse(std::istream& in, ExperimentConfig base) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim_ws(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
      const std::string key = detail::trim_ws(std::string_view(t).substr(0, eq));
      try {
        base.set(key, t.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
      }
    }
    return base;
  }

  static ExperimentConfig load(const std::string& path) { return load(path, ExperimentConfig{}); }

  static ExperimentConfig load(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, std::move(base));
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write config '" + path + "'");
    for (const auto& [k, v] : echo()) os << k << " = " << v << '\n';
  }

  void validate() const {
    static const std::size_t kHorizons[] = {96, 192, 336, 720};
    if (std::find(std::begin(kHorizons), std::end(kHorizons), model.horizon) == std::end(kHorizons))
      throw ConfigError("horizon must be one of 96, 192, 336, 720 (got " +
                        std::to_string(model.horizon) + ")");
    if (!stride || !eval_stride || !eval_batch) throw ConfigError("strides and eval_batch must be positive");
    if (store_id >= model.store_vocab)
      throw ConfigError("store_id " + std::to_string(store_id) + " is outside store_vocab " +
                        std::to_string(model.store_vocab));
    split.validate();
    train.validate();
    model.validate();
  }
};

/// The model configuration a variant actually runs with.
inline ModelConfig variant_model_config(const ExperimentConfig& cfg, std::size_t channels) {
  ModelConfig m = cfg.model;
  m.channels = channels;
  switch (cfg.variant) {
    case Variant::kSoftmax:
      m.dense_gates = true;
      m.time_retention = 1.0;
      m.channel_retention = 1.0;
      break;
    case Variant::kPrimitive: m.zero_embeddings = true; break;
    default: break;
  }
  m.validate();
  return m;
}

inline MlpForecasterConfig mlp3_config(const ExperimentConfig& cfg, std::size_t channels) {
  return {channels, cfg.model.lookback, cfg.model.horizon, cfg.mlp3_hidden, cfg.model.time_compression};
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

struct PreparedData {
  RawSeries raw;  // original scale, full length
  Normalizer normalizer;
  std::size_t train_stride;
  WindowDataset train, val, test;
};

/// Loads, splits and z-scores the dataset, then windows each split.
inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("no dataset given");
  RawSeries raw = load_csv(cfg.dataset);
  const std::size_t T = cfg.model.lookback, P = cfg.model.horizon;
  auto parts = chronological_split(raw, cfg.split, T + P);
  Normalizer norm = Normalizer::fit(parts.train);

  std::shared_ptr<const VectorStore> vectors;
  if (!cfg.embedding_file.empty()) {
    auto vs = std::make_shared<VectorStore>(VectorStore::load(cfg.embedding_file));
    if (vs->dim() != cfg.model.embed_dim)
      throw ConfigError("embedding file vectors have dimension " + std::to_string(vs->dim()) +
                        ", embed_dim is " + std::to_string(cfg.model.embed_dim));
    vectors = vs;
  }

  std::size_t stride = cfg.stride;
  if (cfg.max_train_windows) {
    const std::size_t dense = parts.train.steps() - T - P + 1;
    stride = std::max(stride, (dense + cfg.max_train_windows - 1) / cfg.max_train_windows);
  }
  WindowOptions tr{T, P, stride, cfg.store_id}, ev{T, P, cfg.eval_stride, cfg.store_id};
  PreparedData d{raw, norm, stride,
                 WindowDataset(norm.apply(parts.train), tr, vectors),
                 WindowDataset(norm.apply(parts.val), ev, vectors),
                 WindowDataset(norm.apply(parts.test), ev, vectors)};
  if (d.train.empty()) throw ConfigError("training split yields no windows");
  return d;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

template <class S>
using ForecastModel = std::variant<LiNet<S>, MlpForecaster<S>>;

template <class S>
ForecastModel<S> make_model(const ExperimentConfig& cfg, std::size_t channels) {
  if (cfg.variant == Variant::kMlp3) return MlpForecaster<S>(mlp3_config(cfg, channels), cfg.seed);
  return LiNet<S>(variant_model_config(cfg, channels), cfg.seed);
}

template <class S>
ForecastModel<S> make_model(const ExperimentConfig& cfg, std::size_t channels, ParamSet<S> params) {
  if (cfg.variant == Variant::kMlp3) {
    const auto shapes = mlp_forecaster_shapes(mlp3_config(cfg, channels));
    if (shapes.size() != params.size())
      throw ConfigError("checkpoint does not hold a mlp3 model for this config");
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (shapes[i].first != params[i].name || shapes[i].second != params[i].tensor.shape())
        throw ConfigError("checkpoint tensor '" + params[i].name + "' does not match the mlp3 config");
    MlpForecaster<S> m(mlp3_config(cfg, channels));
    m.params().assign(params);
    return m;
  }
  return LiNet<S>(variant_model_config(cfg, channels), std::move(params));
}

template <class S>
ParamSet<S>& model_params(ForecastModel<S>& m) {
  return std::visit([](auto& x) -> ParamSet<S>& { return x.params(); }, m);
}

template <class S>
const ParamSet<S>& model_params(const ForecastModel<S>& m) {
  return std::visit([](const auto& x) -> const ParamSet<S>& { return x.params(); }, m);
}

template <class S>
Tensor<S> model_forward(const ForecastModel<S>& m, const WindowBatch<S>& b) {
  return std::visit([&](const auto& x) { return x.forward(b); }, m);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct RunReport {
  std::string variant;
  std::string dataset;
  std::string dtype;
  std::uint64_t seed = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  double mae = 0;
  double mse = 0;
  double persistence_mae = 0;
  double persistence_mse = 0;
  double train_seconds = 0;
  double test_seconds = 0;
  std::size_t param_count = 0;
  std::size_t model_bytes = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_mse = 0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
  std::size_t train_stride = 0;
  std::string note;
  std::vector<std::pair<std::string, std::string>> config;

  bool operator==(const RunReport&) const = default;
};

namespace detail {

inline double as_real(const Record& j) {
  return j.is_string() ? parse_real("report field", j.get<std::string>()) : j.get<double>();
}

inline std::size_t as_size(const Record& j) {
  return j.is_string() ? parse_size("report field", j.get<std::string>()) : j.get<std::size_t>();
}

inline std::string as_text(const Record& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

}  // namespace detail

inline Record to_record(const RunReport& r) {
  Record j;
  j["variant"] = r.variant;
  j["dataset"] = r.dataset;
  j["dtype"] = r.dtype;
  j["seed"] = r.seed;
  j["lookback"] = r.lookback;
  j["horizon"] = r.horizon;
  j["mae"] = r.mae;
  j["mse"] = r.mse;
  j["persistence_mae"] = r.persistence_mae;
  j["persistence_mse"] = r.persistence_mse;
  j["train_seconds"] = r.train_seconds;
  j["test_seconds"] = r.test_seconds;
  j["param_count"] = r.param_count;
  j["model_bytes"] = r.model_bytes;
  j["epochs"] = r.epochs;
  j["best_epoch"] = r.best_epoch;
  j["best_val_mse"] = r.best_val_mse;
  j["train_windows"] = r.train_windows;
  j["test_windows"] = r.test_windows;
  j["train_stride"] = r.train_stride;
  j["note"] = r.note;
  Record c = Record::object();
  for (const auto& [k, v] : r.config) c[k] = v;
  j["config"] = c;
  return j;
}

/// Accepts both typed values (json-lines) and strings (csv).
inline RunReport report_from_record(const Record& j) {
  using namespace detail;
  try {
    RunReport r;
    r.variant = as_text(j.at("variant"));
    r.dataset = as_text(j.at("dataset"));
    r.dtype = as_text(j.at("dtype"));
    r.seed = j.at("seed").is_string() ? parse_u64("seed", j.at("seed").get<std::string>())
                                      : j.at("seed").get<std::uint64_t>();
    r.lookback = as_size(j.at("lookback"));
    r.horizon = as_size(j.at("horizon"));
    r.mae = as_real(j.at("mae"));
    r.mse = as_real(j.at("mse"));
    r.persistence_mae = as_real(j.at("persistence_mae"));
    r.persistence_mse = as_real(j.at("persistence_mse"));
    r.train_seconds = as_real(j.at("train_seconds"));
    r.test_seconds = as_real(j.at("test_seconds"));
    r.param_count = as_size(j.at("param_count"));
    r.model_bytes = as_size(j.at("model_bytes"));
    r.epochs = as_size(j.at("epochs"));
    r.best_epoch = as_size(j.at("best_epoch"));
    r.best_val_mse = as_real(j.at("best_val_mse"));
    r.train_windows = as_size(j.at("train_windows"));
    r.test_windows = as_size(j.at("test_windows"));
    r.train_stride = as_size(j.at("train_stride"));
    r.note = as_text(j.at("note"));
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, as_text(v));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report record: ") + e.what());
  }
}

namespace detail {

/// One level of nesting is flattened to `outer.inner` columns.
inline std::vector<std::pair<std::string, std::string>> flatten(const Record& j) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      for (const auto& [k2, v2] : v.items()) out.emplace_back(k + "." + k2, as_text(v2));
    } else if (v.is_number_float()) {
      out.emplace_back(k, format_real(v.get<double>()));
    } else {
      out.emplace_back(k, as_text(v));
    }
  }
  return out;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote in csv record");
  return out;
}

inline bool file_is_empty(const std::string& path) {
  std::error_code ec;
  return !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
}

}  // namespace detail

/// Appends records to `path`. For csv the header is written only when the
/// file is new or empty; later records must carry the same columns.
inline void append_records(const std::string& path, ReportFormat fmt, const std::vector<Record>& recs) {
  if (recs.empty()) return;
  const bool fresh = detail::file_is_empty(path);
  std::string header_line;
  if (fmt == ReportFormat::kCsv && !fresh) {
    std::ifstream in(path);
    std::getline(in, header_line);
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  }
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot write report '" + path + "'");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (fmt == ReportFormat::kJsonl) {
      os << recs[i].dump() << '\n';
      continue;
    }
    const auto flat = detail::flatten(recs[i]);
    std::string header, row;
    for (std::size_t c = 0; c < flat.size(); ++c) {
      header += (c ? "," : "") + detail::csv_quote(flat[c].first);
      row += (c ? "," : "") + detail::csv_quote(flat[c].second);
    }
    if (header_line.empty()) {
      os << header << '\n';
      header_line = header;
    } else if (header != header_line) {
      throw IoError("csv '" + path + "' already has different columns");
    }
    os << row << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

/// Reads back records written by append_records. csv values come back as
/// strings, with `outer.inner` columns nested again.
inline std::vector<Record> read_records(const std::string& path, ReportFormat fmt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Record> out;
  std::string line;
  if (fmt == ReportFormat::kJsonl) {
    while (std::getline(in, line)) {
      if (detail::trim_ws(line).empty()) continue;
      try {
        out.push_back(Record::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad json-lines record: ") + e.what(), out.size() + 1);
      }
    }
    return out;
  }
  if (!std::getline(in, line)) return out;
  const auto header = detail::csv_fields(line);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim_ws(line).empty()) continue;
    const auto cells = detail::csv_fields(line);
    if (cells.size() != header.size())
      throw ParseError("csv row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                           " fields, header has " + std::to_string(header.size()),
                       row);
    Record r;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto dot = header[c].find('.');
      if (dot == std::string::npos) r[header[c]] = cells[c];
      else r[header[c].substr(0, dot)][header[c].substr(dot + 1)] = cells[c];
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void emit_report(const RunReport& r, const std::string& path, ReportFormat fmt) {
  append_records(path, fmt, {to_record(r)});
}

inline std::vector<RunReport> read_reports(const std::string& path, ReportFormat fmt) {
  std::vector<RunReport> out;
  for (const auto& r : read_records(path, fmt)) out.push_back(report_from_record(r));
  return out;
}

inline Record to_record(const EpochRecord& e) {
  Record j;
  j["epoch"] = e.epoch;
  j["train_mse"] = e.train_mse;
  j["val_mse"] = e.val_mse;
  j["steps"] = e.steps;
  j["seconds"] = e.seconds;
  j["improved"] = e.improved;
  return j;
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

template <class S>
struct Experiment {
  ForecastModel<S> model;
  TrainHistory history;
  RunReport report;
};

namespace detail {

template <class S>
RunReport base_report(const ExperimentConfig& cfg, const PreparedData& data, const ForecastModel<S>& m) {
  RunReport r;
  r.variant = to_string(cfg.variant);
  r.dataset = cfg.dataset;
  r.dtype = to_string(cfg.dtype);
  r.seed = cfg.seed;
  r.lookback = cfg.model.lookback;
  r.horizon = cfg.model.horizon;
  r.param_count = model_params(m).scalar_count();
  r.model_bytes = r.param_count * sizeof(S);
  r.train_windows = data.train.size();
  r.test_windows = data.test.size();
  r.train_stride = data.train_stride;
  r.config = cfg.echo();
  switch (cfg.variant) {
    case Variant::kSoftmax: r.note = "dense softmax on every gate (retentions 1.0)"; break;
    case Variant::kPrimitive: r.note = "embedding inputs replaced by zero vectors"; break;
    case Variant::kMlp3: r.note = "three-layer MLP on the flattened history"; break;
    default: break;
  }
  return r;
}

}  // namespace detail

/// Test-split metrics for a model plus the persistence comparator.
template <class S>
void fill_test_metrics(RunReport& r, const ForecastModel<S>& model, const PreparedData& data,
                       std::size_t eval_batch) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ev = evaluate_with<S>([&](const WindowBatch<S>& b) { return model_forward(model, b); },
                                   data.test, eval_batch);
  r.test_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.mae = ev.mae;
  r.mse = ev.mse;
  const auto pb = evaluate_with<S>([](const WindowBatch<S>& b) { return persistence_baseline(b); },
                                   data.test, eval_batch);
  r.persistence_mae = pb.mae;
  r.persistence_mse = pb.mse;
}

/// Trains one variant on prepared data and scores it on the test split.
template <class S>
Experiment<S> run_experiment(const ExperimentConfig& cfg, const PreparedData& data,
                             const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Experiment<S> ex{make_model<S>(cfg, data.raw.channels()), {}, {}};
  ex.history = std::visit(
      [&](auto& m) { return train(m, data.train, data.val, tc, on_epoch); }, ex.model);
  ex.report = detail::base_report(cfg, data, ex.model);
  ex.report.train_seconds = ex.history.seconds;
  ex.report.epochs = ex.history.epochs.size();
  ex.report.best_epoch = ex.history.best_epoch;
  ex.report.best_val_mse = ex.history.best_val_mse;
  fill_test_metrics(ex.report, ex.model, data, cfg.eval_batch);
  return ex;
}

/// Scores an already trained model (no training time recorded).
template <class S>
RunReport evaluate_model(const ExperimentConfig& cfg, const PreparedData& data, const ForecastModel<S>& m) {
  RunReport r = detail::base_report(cfg, data, m);
  fill_test_metrics(r, m, data, cfg.eval_batch);
  return r;
}

inline RunReport run_variant(const ExperimentConfig& cfg, const PreparedData& data) {
  if (cfg.dtype == DType::kF64) return run_experiment<double>(cfg, data).report;
  return run_experiment<float>(cfg, data).report;
}

inline RunReport run_variant(const ExperimentConfig& cfg) { return run_variant(cfg, prepare_data(cfg)); }

// ---------------------------------------------------------------------------
// Forecasting past the end of the data
// ---------------------------------------------------------------------------

/// Timestamp `secs` seconds after the epoch, in the `YYYY-MM-DD HH:MM:SS`
/// layout (date only when `date_only`).
inline std::string format_timestamp(std::int64_t secs, bool date_only) {
  using namespace std::chrono;
  const auto days = floor<std::chrono::days>(sys_seconds{seconds{secs}});
  const year_month_day ymd{days};
  const auto tod = secs - days.time_since_epoch().count() * 86400LL;
  char buf[64];
  if (date_only)
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  else
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(tod / 3600), static_cast<long long>(tod / 60 % 60),
                  static_cast<long long>(tod % 60));
  return buf;
}

struct Forecast {
  std::vector<std::string> timestamps;  // P future steps
  std::vector<std::string> channel_names;
  std::vector<double> values;  // [P][C], original scale
};

/// Forecasts the P steps that follow the last observation of the dataset.
template <class S>
Forecast forecast_next(const ForecastModel<S>& model, const ExperimentConfig& cfg, const PreparedData& data) {
  const RawSeries& raw = data.raw;
  const std::size_t T = cfg.model.lookback, P = cfg.model.horizon, N = raw.steps();
  if (N < 2) throw ConfigError("need at least two observations to infer the sampling stride");
  const std::int64_t step = timestamp_seconds(raw.timestamps[N - 1]) - timestamp_seconds(raw.timestamps[N - 2]);
  const bool date_only = raw.timestamps.back().size() <= 10;

  Forecast f;
  f.channel_names = raw.channel_names;
  const std::int64_t last = timestamp_seconds(raw.timestamps.back());
  for (std::size_t p = 1; p <= P; ++p)
    f.timestamps.push_back(format_timestamp(last + step * static_cast<std::int64_t>(p), date_only));

  // One window whose target part is a zero placeholder.
  const RawSeries hist = data.normalizer.apply(raw.slice(N - T, N));
  RawSeries window;
  window.timestamps = hist.timestamps;
  window.timestamps.insert(window.timestamps.end(), f.timestamps.begin(), f.timestamps.end());
  window.channel_names = hist.channel_names;
  for (std::size_t c = 0; c < raw.channels(); ++c) {
    for (std::size_t t = 0; t < T; ++t) window.values.push_back(hist.at(c, t));
    window.values.insert(window.values.end(), P, 0.0);
  }
  std::shared_ptr<const VectorStore> none;
  WindowDataset ds(std::move(window), WindowOptions{T, P, 1, cfg.store_id}, none);
  NoGradGuard ng;
  const auto out = model_forward(model, ds.batch_range<S>(0, 1));
  const std::size_t C = raw.channels();
  f.values.resize(P * C);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c)
      f.values[p * C + c] = data.normalizer.invert_value(c, static_cast<double>(out[c * P + p]));
  return f;
}

inline void write_forecast_csv(const Forecast& f, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write forecast '" + path + "'");
  os << "date";
  for (const auto& n : f.channel_names) os << ',' << n;
  os << '\n';
  const std::size_t C = f.channel_names.size();
  for (std::size_t p = 0; p < f.timestamps.size(); ++p) {
    os << f.timestamps[p];
    for (std::size_t c = 0; c < C; ++c) os << ',' << detail::format_real(f.values[p * C + c]);
    os << '\n';
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
  std::size_t lookback = 0;
  std::size_t compressed = 0;  // T'
  std::size_t batch = 0;
  std::size_t gate_elements = 0;   // allocated extent of the time-encode gate, B*T*T'
  std::size_t dense_elements = 0;  // a dense T x T map, B*T*T
  double seconds = 0;              // median forward + backward
  std::size_t peak_bytes = 0;      // peak live tensor bytes during one pass
  std::size_t param_count = 0;
};

inline Record to_record(const BenchRow& b) {
  Record j;
  j["lookback"] = b.lookback;
  j["compressed"] = b.compressed;
  j["batch"] = b.batch;
  j["gate_elements"] = b.gate_elements;
  j["dense_elements"] = b.dense_elements;
  j["ratio"] = static_cast<double>(b.gate_elements) / static_cast<double>(b.dense_elements);
  j["seconds"] = b.seconds;
  j["peak_bytes"] = b.peak_bytes;
  j["param_count"] = b.param_count;
  return j;
}

template <class S = float>
std::vector<BenchRow> bench(const ModelConfig& base, const std::vector<std::size_t>& sizes,
                            std::size_t batch = 1, std::size_t repeats = 3, std::uint64_t seed = 0) {
  if (sizes.empty()) throw ConfigError("bench needs at least one lookback size");
  if (!batch || !repeats) throw ConfigError("bench batch and repeats must be positive");
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (std::size_t T : sizes) {
    ModelConfig cfg = base;
    cfg.lookback = T;
    cfg.validate();
    LiNet<S> net(cfg, seed);
    WindowBatch<S> wb;
    std::vector<S> x(batch * cfg.channels * T), y(batch * cfg.channels * cfg.horizon);
    for (auto& v : x) v = static_cast<S>(nd(rng));
    for (auto& v : y) v = static_cast<S>(nd(rng));
    wb.x = Tensor<S>({batch, cfg.channels, T}, std::move(x));
    wb.y = Tensor<S>({batch, cfg.channels, cfg.horizon}, std::move(y));
    wb.hist_calendar.assign(batch * T, CalendarFeatures{});
    wb.fut_calendar.assign(batch * cfg.horizon, CalendarFeatures{});
    wb.store_ids.assign(batch, 0);
    for (std::size_t c = 0; c < cfg.channels; ++c) wb.item_ids.push_back(c);

    BenchRow row;
    row.lookback = T;
    row.compressed = cfg.compressed_time();
    row.batch = batch;
    row.dense_elements = batch * T * T;
    row.param_count = net.params().scalar_count();
    std::vector<double> times;
    for (std::size_t r = 0; r < repeats; ++r) {
      net.params().zero_grad();
      MemoryStats::reset_peak();
      const std::size_t before = MemoryStats::live_bytes();
      const auto t0 = std::chrono::steady_clock::now();
      {
        ForwardTrace<S> trace;
        auto loss = mse(net.forward(wb, &trace), wb.y);
        loss.backward();
        row.gate_elements = trace.time_gate.weights.numel();
      }
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      row.peak_bytes = std::max(row.peak_bytes, MemoryStats::peak_bytes() - before);
    }
    std::sort(times.begin(), times.end());
    row.seconds = times[times.size() / 2];
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

inline Record to_record(const GradCheckEntry& e) {
  Record j;
  j["scope"] = e.scope;
  j["name"] = e.name;
  j["passed"] = e.report.passed;
  j["max_rel_error"] = e.report.max_rel_error;
  j["coordinates"] = e.report.coordinates;
  j["message"] = e.report.message;
  return j;
}

/// Per-op, per-module and full-model gradient checks.
inline std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed, std::size_t trials = 20,
                                                 const GradCheckOptions& opt = {}) {
  auto out = gradcheck_ops(seed, trials, opt);
  for (auto& e : gradcheck_modules(seed + 1, trials, opt)) out.push_back(std::move(e));
  for (auto& e : gradcheck_models(seed + 2, opt)) out.push_back(std::move(e));
  return out;
}

}  // namespace linet
