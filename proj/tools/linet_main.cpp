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

// linet: train, evaluate and benchmark Li-Net forecasters from the shell.
//
// Exit codes: 0 success, 1 failed check, 2 configuration error,
// 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "linet/harness.hpp"

namespace fs = std::filesystem;
using namespace linet;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::string> dataset, variant, out, format;
  std::optional<std::size_t> horizon;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "key = value config file");
  sub->add_option("--dataset", f.dataset, "CSV with a leading date column");
  sub->add_option("--horizon", f.horizon, "forecast horizon (96, 192, 336 or 720)");
  sub->add_option("--variant", f.variant, "full | softmax | primitive | mlp3");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--format", f.format, "report format: jsonl | csv");
}

/// Defaults, then the config file, then flags.
ExperimentConfig resolve(const CommonFlags& f, const std::string& fallback_config = {}) {
  ExperimentConfig cfg;
  if (!f.config.empty()) cfg = ExperimentConfig::load(f.config);
  else if (!fallback_config.empty() && fs::exists(fallback_config)) cfg = ExperimentConfig::load(fallback_config);
  if (f.dataset) cfg.set("dataset", *f.dataset);
  if (f.variant) cfg.set("variant", *f.variant);
  if (f.out) cfg.set("out", *f.out);
  if (f.format) cfg.set("format", *f.format);
  if (f.horizon) cfg.model.horizon = *f.horizon;
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

std::string out_file(const ExperimentConfig& cfg, const std::string& stem) {
  fs::create_directories(cfg.out);
  return (fs::path(cfg.out) / (stem + "." + to_string(cfg.format))).string();
}

void print_report(const RunReport& r) {
  std::cout << std::left << std::setw(10) << r.variant << std::right << std::fixed << std::setprecision(4)
            << " mae " << r.mae << "  mse " << r.mse << "  (persistence mae " << r.persistence_mae
            << ", mse " << r.persistence_mse << ")  params " << r.param_count << "  train "
            << std::setprecision(1) << r.train_seconds << " s  test " << r.test_seconds << " s\n"
            << std::defaultfloat;
}

template <class S>
int do_train(const ExperimentConfig& cfg) {
  const auto data = prepare_data(cfg);
  std::cout << "train " << data.train.size() << " windows (stride " << data.train_stride << "), val "
            << data.val.size() << ", test " << data.test.size() << ", " << data.raw.channels()
            << " channels\n";
  const std::string history_path = out_file(cfg, "history");
  if (fs::exists(history_path)) fs::remove(history_path);
  auto ex = run_experiment<S>(cfg, data, [&](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << "  train_mse " << e.train_mse << "  val_mse " << e.val_mse
              << (e.improved ? "  *" : "") << '\n';
    append_records(history_path, cfg.format, {to_record(e)});
  });
  save_checkpoint((fs::path(cfg.out) / "model.ckpt").string(), model_params(ex.model));
  cfg.save((fs::path(cfg.out) / "config.txt").string());
  emit_report(ex.report, out_file(cfg, "report"), cfg.format);
  print_report(ex.report);
  return 0;
}

template <class S>
ForecastModel<S> load_trained(const ExperimentConfig& cfg, std::size_t channels, const std::string& ckpt) {
  const std::string path = ckpt.empty() ? (fs::path(cfg.out) / "model.ckpt").string() : ckpt;
  return make_model<S>(cfg, channels, load_checkpoint<S>(path));
}

template <class S>
int do_evaluate(const ExperimentConfig& cfg, const std::string& ckpt) {
  const auto data = prepare_data(cfg);
  const auto model = load_trained<S>(cfg, data.raw.channels(), ckpt);
  const auto r = evaluate_model(cfg, data, model);
  emit_report(r, out_file(cfg, "evaluation"), cfg.format);
  print_report(r);
  return 0;
}

template <class S>
int do_predict(const ExperimentConfig& cfg, const std::string& ckpt, std::string output) {
  const auto data = prepare_data(cfg);
  const auto model = load_trained<S>(cfg, data.raw.channels(), ckpt);
  if (output.empty()) {
    fs::create_directories(cfg.out);
    output = (fs::path(cfg.out) / "forecast.csv").string();
  }
  write_forecast_csv(forecast_next(model, cfg, data), output);
  std::cout << "wrote " << cfg.model.horizon << " steps to " << output << '\n';
  return 0;
}

int do_ablate(ExperimentConfig cfg) {
  const auto data = prepare_data(cfg);
  const std::string path = out_file(cfg, "ablation");
  for (Variant v : all_variants()) {
    cfg.variant = v;
    const auto r = run_variant(cfg, data);
    emit_report(r, path, cfg.format);
    print_report(r);
  }
  std::cout << "reports appended to " << path << '\n';
  return 0;
}

int do_gradcheck(const ExperimentConfig& cfg, std::size_t trials) {
  const auto entries = run_gradcheck(cfg.seed, trials);
  std::vector<Record> recs;
  bool ok = true;
  for (const auto& e : entries) {
    std::cout << (e.report.passed ? "PASS " : "FAIL ") << e.scope << ' ' << e.report.message << '\n';
    recs.push_back(to_record(e));
    ok = ok && e.report.passed;
  }
  append_records(out_file(cfg, "gradcheck"), cfg.format, recs);
  for (const auto& e : entries)
    if (!std::isfinite(e.report.max_rel_error)) return kExitNumerical;
  return ok ? 0 : kExitFailedCheck;
}

int do_bench(const ExperimentConfig& cfg, const std::vector<std::size_t>& sizes, std::size_t batch,
             std::size_t repeats) {
  ModelConfig m = cfg.model;
  m.channels = 7;
  const auto rows = cfg.dtype == DType::kF64 ? bench<double>(m, sizes, batch, repeats, cfg.seed)
                                             : bench<float>(m, sizes, batch, repeats, cfg.seed);
  std::vector<Record> recs;
  std::cout << "      T     T'   gate elems  dense elems  ratio   seconds   peak bytes\n";
  for (const auto& r : rows) {
    std::printf("%7zu %6zu %12zu %12zu %6.3f %9.4f %12zu\n", r.lookback, r.compressed, r.gate_elements,
                r.dense_elements, static_cast<double>(r.gate_elements) / static_cast<double>(r.dense_elements),
                r.seconds, r.peak_bytes);
    recs.push_back(to_record(r));
  }
  append_records(out_file(cfg, "bench"), cfg.format, recs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Li-Net multichannel forecaster"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, pred_f, abl_f, gc_f, bench_f;
  std::string eval_ckpt, pred_ckpt, pred_output;
  std::size_t gc_trials = 20, bench_batch = 1, bench_repeats = 3;
  std::vector<std::size_t> bench_sizes{128, 256, 512};

  auto* train_cmd = app.add_subcommand("train", "train a model and score it on the test split");
  add_common(train_cmd, train_f);
  auto* eval_cmd = app.add_subcommand("evaluate", "score a saved checkpoint on the test split");
  add_common(eval_cmd, eval_f);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file (default <out>/model.ckpt)");
  auto* pred_cmd = app.add_subcommand("predict", "forecast the steps after the end of the dataset");
  add_common(pred_cmd, pred_f);
  pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint file (default <out>/model.ckpt)");
  pred_cmd->add_option("--output", pred_output, "forecast CSV (default <out>/forecast.csv)");
  auto* abl_cmd = app.add_subcommand("ablate", "train all four variants with one seed");
  add_common(abl_cmd, abl_f);
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc_cmd, gc_f);
  gc_cmd->add_option("--trials", gc_trials, "random shapes per op");
  auto* bench_cmd = app.add_subcommand("bench", "forward+backward time and gate size against lookback");
  add_common(bench_cmd, bench_f);
  bench_cmd->add_option("--sizes", bench_sizes, "lookback lengths")->delimiter(',');
  bench_cmd->add_option("--batch", bench_batch, "batch size");
  bench_cmd->add_option("--repeats", bench_repeats, "timed repetitions per size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    auto dispatch = [](const ExperimentConfig& cfg, auto&& f32, auto&& f64) {
      return cfg.dtype == DType::kF64 ? f64() : f32();
    };
    if (*train_cmd) {
      const auto cfg = resolve(train_f);
      cfg.validate();
      return dispatch(cfg, [&] { return do_train<float>(cfg); }, [&] { return do_train<double>(cfg); });
    }
    if (*eval_cmd) {
      const auto cfg = resolve(eval_f, eval_f.out ? (fs::path(*eval_f.out) / "config.txt").string() : "");
      cfg.validate();
      return dispatch(cfg, [&] { return do_evaluate<float>(cfg, eval_ckpt); },
                      [&] { return do_evaluate<double>(cfg, eval_ckpt); });
    }
    if (*pred_cmd) {
      const auto cfg = resolve(pred_f, pred_f.out ? (fs::path(*pred_f.out) / "config.txt").string() : "");
      cfg.validate();
      return dispatch(cfg, [&] { return do_predict<float>(cfg, pred_ckpt, pred_output); },
                      [&] { return do_predict<double>(cfg, pred_ckpt, pred_output); });
    }
    if (*abl_cmd) {
      const auto cfg = resolve(abl_f);
      cfg.validate();
      return do_ablate(cfg);
    }
    if (*gc_cmd) return do_gradcheck(resolve(gc_f), gc_trials);
    if (*bench_cmd) {
      const auto cfg = resolve(bench_f);
      cfg.model.validate();
      return do_bench(cfg, bench_sizes, bench_batch, bench_repeats);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
