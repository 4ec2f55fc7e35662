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

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "linet/data.hpp"
#include "linet/embedding.hpp"
#include "linet/error.hpp"
#include "linet/params.hpp"
#include "linet/tensor.hpp"

namespace linet {

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

/// Mean squared error over all elements.
template <class S>
Tensor<S> mse(const Tensor<S>& pred, const Tensor<S>& truth) {
  detail::require_same_shape(pred, truth, "mse");
  const std::size_t n = pred.numel();
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const S d = pred[i] - truth[i];
    acc += d * d;
  }
  const S inv_n = S(1) / static_cast<S>(n);
  return autograd::make_result<S>({1}, {acc * inv_n}, {pred, truth}, "mse",
                                  [n, inv_n](detail::Node<S>& self) {
                                    const S g = self.grad[0] * S(2) * inv_n;
                                    const auto& p = self.parents[0]->data;
                                    const auto& t = self.parents[1]->data;
                                    if (S* gp = autograd::grad_of(self, 0))
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g * (p[i] - t[i]);
                                    if (S* gt = autograd::grad_of(self, 1))
                                      for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (p[i] - t[i]);
                                  });
}

/// Mean absolute error over all elements; the subgradient at 0 is 0.
template <class S>
Tensor<S> mae(const Tensor<S>& pred, const Tensor<S>& truth) {
  detail::require_same_shape(pred, truth, "mae");
  const std::size_t n = pred.numel();
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(pred[i] - truth[i]);
  const S inv_n = S(1) / static_cast<S>(n);
  return autograd::make_result<S>({1}, {acc * inv_n}, {pred, truth}, "mae",
                                  [n, inv_n](detail::Node<S>& self) {
                                    const S g = self.grad[0] * inv_n;
                                    const auto& p = self.parents[0]->data;
                                    const auto& t = self.parents[1]->data;
                                    auto sgn = [](S d) { return S((d > 0) - (d < 0)); };
                                    if (S* gp = autograd::grad_of(self, 0))
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g * sgn(p[i] - t[i]);
                                    if (S* gt = autograd::grad_of(self, 1))
                                      for (std::size_t i = 0; i < n; ++i) gt[i] -= g * sgn(p[i] - t[i]);
                                  });
}

/// Repeats each channel's last observed value across the horizon.
template <class S>
Tensor<S> persistence_baseline(const WindowBatch<S>& batch) {
  const std::size_t B = batch.batch(), C = batch.channels(), T = batch.lookback(),
                    P = batch.horizon();
  std::vector<S> out(B * C * P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const S last = batch.x.data()[(b * C + c) * T + T - 1];
      std::fill_n(out.begin() + (b * C + c) * P, P, last);
    }
  return Tensor<S>({B, C, P}, std::move(out));
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 = off
  std::size_t max_steps_per_epoch = 0;  // 0 = one full pass

  void validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
      throw ConfigError("beta1 and beta2 must be in (0, 1)");
    if (!(eps > 0)) throw ConfigError("eps must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  }
};

/// AdamW with decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
template <class S>
class AdamW {
 public:
  AdamW(ParamSet<S>& params, const TrainConfig& cfg) : params_(&params), cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), S(0));
      v_.emplace_back(p.tensor.numel(), S(0));
    }
  }

  std::size_t step_count() const { return t_; }
  const std::vector<S>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<S>& second_moment(std::size_t i) const { return v_.at(i); }

  /// Global L2 norm of the current gradients.
  double grad_norm() const {
    double acc = 0;
    for (const auto& p : *params_)
      for (S g : p.tensor.grad_view()) acc += static_cast<double>(g) * g;
    return std::sqrt(acc);
  }

  void step() {
    for (const auto& p : *params_)
      for (S g : p.tensor.grad_view())
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
    S clip = S(1);
    if (cfg_.clip_norm > 0) {
      const double n = grad_norm();
      if (n > cfg_.clip_norm) clip = static_cast<S>(cfg_.clip_norm / n);
    }
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S bc1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S bc2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps),
            wd = static_cast<S>(cfg_.weight_decay);
    std::size_t i = 0;
    for (auto& p : *params_) {
      auto theta = p.tensor.mutable_data();
      auto grad = p.tensor.grad_view();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const S g = grad.empty() ? S(0) : grad[j] * clip;
        m[j] = b1 * m[j] + (S(1) - b1) * g;
        v[j] = b2 * v[j] + (S(1) - b2) * g * g;
        const S mhat = m[j] / bc1, vhat = v[j] / bc2;
        theta[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta[j]);
      }
      ++i;
    }
  }

 private:
  ParamSet<S>* params_;
  TrainConfig cfg_;
  std::vector<std::vector<S>> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double mae = 0;
  double mse = 0;
  std::vector<double> window_mse;  // one per window, in dataset order
  std::vector<double> window_mae;
  std::size_t elements = 0;
};

/// Metrics over every window and channel of a dataset (no gradients).
/// `predict` maps a WindowBatch<S> to a [B,C,P] tensor.
template <class S, class Predict>
EvalResult evaluate_with(Predict&& predict, const WindowDataset& data, std::size_t batch_size = 64,
                         std::vector<Tensor<S>>* forecasts = nullptr) {
  if (data.empty()) throw ConfigError("evaluation set has no windows");
  NoGradGuard no_grad;
  EvalResult r;
  double se = 0, ae = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    auto batch = data.batch_range<S>(begin, end);
    Tensor<S> pred = predict(batch);
    detail::require_same_shape(pred, batch.y, "evaluate");
    const std::size_t per = pred.numel() / (end - begin);
    for (std::size_t w = 0; w < end - begin; ++w) {
      double wse = 0, wae = 0;
      for (std::size_t i = w * per; i < (w + 1) * per; ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(batch.y[i]);
        wse += d * d;
        wae += std::abs(d);
      }
      if (!std::isfinite(wse)) throw NumericalError("non-finite forecast during evaluation");
      r.window_mse.push_back(wse / static_cast<double>(per));
      r.window_mae.push_back(wae / static_cast<double>(per));
      se += wse;
      ae += wae;
      r.elements += per;
    }
    if (forecasts) forecasts->push_back(pred);
  }
  r.mse = se / static_cast<double>(r.elements);
  r.mae = ae / static_cast<double>(r.elements);
  return r;
}

template <class Model>
EvalResult evaluate(const Model& model, const WindowDataset& data, std::size_t batch_size = 64) {
  using S = typename Model::Scalar;
  return evaluate_with<S>([&](const WindowBatch<S>& b) { return model.forward(b); }, data, batch_size);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0;   // mean minibatch loss over the epoch
  double val_mse = 0;
  std::size_t steps = 0;
  double seconds = 0;
  bool improved = false;
};

template <class S>
struct EarlyStopState {
  double best_val_mse = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_since_improvement = 0;
  ParamSet<S> best;

  /// Returns true when training should stop.
  bool update(double val_mse, std::size_t epoch, const ParamSet<S>& current, std::size_t patience) {
    if (val_mse < best_val_mse) {
      best_val_mse = val_mse;
      best_epoch = epoch;
      epochs_since_improvement = 0;
      best = current.clone();
      return false;
    }
    ++epochs_since_improvement;
    return epochs_since_improvement >= patience;
  }
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mse = 0;
  std::size_t total_steps = 0;
  double seconds = 0;
  bool stopped_early = false;
};

/// One optimizer step on `batch`; returns the pre-step loss.
template <class Model>
double train_step(Model& model, AdamW<typename Model::Scalar>& opt,
                  const WindowBatch<typename Model::Scalar>& batch) {
  model.params().zero_grad();
  auto loss = mse(model.forward(batch), batch.y);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) throw NumericalError("training loss is not finite");
  loss.backward();
  opt.step();
  return value;
}

/// Minibatch AdamW on MSE with per-epoch validation and early stopping.
/// On return the model holds the parameters of the best validation epoch.
template <class Model>
TrainHistory train(Model& model, const WindowDataset& train_set, const WindowDataset& val_set,
                   const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  using S = typename Model::Scalar;
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training split has no windows");
  if (val_set.empty()) throw ConfigError("validation split has no windows");
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);
  AdamW<S> opt(model.params(), cfg);
  EarlyStopState<S> stop;
  TrainHistory hist;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps_per_epoch && rec.steps == cfg.max_steps_per_epoch) break;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      loss_sum += train_step(model, opt, train_set.batch<S>(idx));
      ++rec.steps;
    }
    rec.train_mse = loss_sum / static_cast<double>(rec.steps);
    rec.val_mse = evaluate(model, val_set).mse;
    const bool halt = stop.update(rec.val_mse, epoch, model.params(), cfg.patience);
    rec.improved = stop.best_epoch == epoch;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    hist.total_steps += rec.steps;
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (halt) {
      hist.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  model.params().assign(stop.best);
  hist.best_epoch = stop.best_epoch;
  hist.best_val_mse = stop.best_val_mse;
  hist.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return hist;
}

// ---------------------------------------------------------------------------
// Optional CoSENT fitting of embedding vectors
// ---------------------------------------------------------------------------

/// Adjusts `vectors` in place with AdamW on the CoSENT loss over labeled
/// pairs. Returns the loss before each step.
template <class S>
std::vector<double> fit_cosent(std::vector<Tensor<S>>& vectors, const std::vector<IndexPair>& pos,
                               const std::vector<IndexPair>& neg, double lambda, std::size_t steps,
                               TrainConfig cfg = {}) {
  ParamSet<S> ps;
  for (std::size_t i = 0; i < vectors.size(); ++i) ps.add("vec." + std::to_string(i), vectors[i]);
  cfg.weight_decay = 0;
  AdamW<S> opt(ps, cfg);
  PairBatch<S> batch{vectors, pos, neg, lambda};
  std::vector<double> losses;
  for (std::size_t s = 0; s < steps; ++s) {
    ps.zero_grad();
    auto loss = cosent_loss(batch);
    losses.push_back(static_cast<double>(loss.item()));
    loss.backward();
    opt.step();
  }
  return losses;
}

}  // namespace linet
