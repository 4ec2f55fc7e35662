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

// Dataset ingestion: wide CSV loading, chronological splitting, per-channel
// z-scoring and sliding-window batches.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <istream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "linet/embedding.hpp"
#include "linet/error.hpp"
#include "linet/tensor.hpp"

namespace linet {

/// Multichannel series, values stored channel-major: values[c * steps + t].
struct RawSeries {
  std::vector<std::string> timestamps;
  std::vector<std::string> channel_names;
  std::vector<double> values;
  std::size_t origin = 0;  // index of timestamps[0] in the series this was cut from

  std::size_t channels() const { return channel_names.size(); }
  std::size_t steps() const { return timestamps.size(); }
  double at(std::size_t c, std::size_t t) const { return values[c * steps() + t]; }
  double& at(std::size_t c, std::size_t t) { return values[c * steps() + t]; }

  /// Steps [begin, end) as a new series.
  RawSeries slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > steps()) throw ConfigError("series slice out of range");
    RawSeries out;
    out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    out.channel_names = channel_names;
    out.origin = origin + begin;
    out.values.reserve(channels() * (end - begin));
    for (std::size_t c = 0; c < channels(); ++c)
      for (std::size_t t = begin; t < end; ++t) out.values.push_back(at(c, t));
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\"");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads a wide CSV: header `date,<channel>,...`, one row per time step.
/// Row numbers in errors are 1-based file lines (the header is line 1).
inline RawSeries parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("CSV is empty: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || detail::trim(header[0]) != "date")
    throw ParseError("CSV header must start with 'date' followed by channel columns", 1);

  RawSeries s;
  for (std::size_t i = 1; i < header.size(); ++i) s.channel_names.push_back(detail::trim(header[i]));
  const std::size_t C = s.channel_names.size();
  std::vector<std::vector<double>> cols(C);
  std::size_t row = 1;
  std::int64_t prev = 0, stride = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != C + 1)
      throw ParseError("CSV row " + std::to_string(row) + ": expected " + std::to_string(C + 1) +
                           " cells, got " + std::to_string(cells.size()),
                       row);
    std::string ts = detail::trim(cells[0]);
    std::int64_t secs = 0;
    try {
      secs = timestamp_seconds(ts);
    } catch (const ParseError& e) {
      throw ParseError("CSV row " + std::to_string(row) + ": " + e.what(), row);
    }
    if (!s.timestamps.empty()) {
      if (secs <= prev)
        throw ParseError("CSV row " + std::to_string(row) + ": timestamp '" + ts +
                             "' is not after the previous row",
                         row);
      if (stride == 0) {
        stride = secs - prev;
      } else if (secs - prev != stride) {
        throw ParseError("CSV row " + std::to_string(row) + ": irregular time stride", row);
      }
    }
    prev = secs;
    s.timestamps.push_back(std::move(ts));
    for (std::size_t c = 0; c < C; ++c) {
      const std::string cell = detail::trim(cells[c + 1]);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(v))
        throw ParseError("CSV row " + std::to_string(row) + ", column '" + s.channel_names[c] +
                             "': non-numeric or missing value '" + cell + "'",
                         row);
      cols[c].push_back(v);
    }
  }
  if (s.timestamps.empty()) throw ParseError("CSV has a header but no data rows", 2);
  for (auto& col : cols) s.values.insert(s.values.end(), col.begin(), col.end());
  return s;
}

inline RawSeries load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  return parse_csv(in);
}

// ---------------------------------------------------------------------------
// Splitting and normalization
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const {
    if (!(train > 0 && val > 0 && test > 0))
      throw ConfigError("split fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  }
};

struct SplitSeries {
  RawSeries train, val, test;
};

/// Contiguous train/val/test slices in time order. Train and validation
/// lengths are floor(fraction * N); the test slice takes the remainder.
/// Every slice must hold at least `min_slice` steps (one lookback + horizon).
inline SplitSeries chronological_split(const RawSeries& s, const SplitSpec& spec,
                                       std::size_t min_slice = 1) {
  spec.validate();
  const std::size_t n = s.steps();
  auto floor_frac = [](double f, std::size_t total) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(total) + 1e-9));
  };
  const std::size_t n_train = floor_frac(spec.train, n);
  const std::size_t n_val = floor_frac(spec.val, n);
  const std::size_t n_test = n - n_train - n_val;
  if (std::min({n_train, n_val, n_test}) < min_slice) {
    const double smallest = std::min({spec.train, spec.val, spec.test});
    const auto need = static_cast<std::size_t>(std::ceil(static_cast<double>(min_slice) / smallest));
    throw ConfigError("series of length " + std::to_string(n) + " is too short: each split needs " +
                      std::to_string(min_slice) + " steps, so at least " + std::to_string(need) +
                      " steps are required");
  }
  return {s.slice(0, n_train), s.slice(n_train, n_train + n_val), s.slice(n_train + n_val, n)};
}

/// Per-channel z-score. Population standard deviation; constant channels use
/// std = 1 so only the mean is removed.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer fit(const RawSeries& train) {
    if (train.steps() == 0) throw ConfigError("cannot fit normalizer on an empty slice");
    Normalizer n;
    const double T = static_cast<double>(train.steps());
    for (std::size_t c = 0; c < train.channels(); ++c) {
      double mu = 0;
      for (std::size_t t = 0; t < train.steps(); ++t) mu += train.at(c, t);
      mu /= T;
      double var = 0;
      for (std::size_t t = 0; t < train.steps(); ++t) var += (train.at(c, t) - mu) * (train.at(c, t) - mu);
      const double sd = std::sqrt(var / T);
      n.mean.push_back(mu);
      n.stddev.push_back(sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0);
    }
    return n;
  }

  RawSeries apply(RawSeries s) const {
    check(s);
    for (std::size_t c = 0; c < s.channels(); ++c)
      for (std::size_t t = 0; t < s.steps(); ++t) s.at(c, t) = (s.at(c, t) - mean[c]) / stddev[c];
    return s;
  }

  RawSeries invert(RawSeries s) const {
    check(s);
    for (std::size_t c = 0; c < s.channels(); ++c)
      for (std::size_t t = 0; t < s.steps(); ++t) s.at(c, t) = s.at(c, t) * stddev[c] + mean[c];
    return s;
  }

  double invert_value(std::size_t channel, double z) const { return z * stddev[channel] + mean[channel]; }

 private:
  void check(const RawSeries& s) const {
    if (s.channels() != mean.size())
      throw ConfigError("normalizer fitted on " + std::to_string(mean.size()) +
                        " channels, series has " + std::to_string(s.channels()));
  }
};

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// Start offsets of every window of `lookback + horizon` steps that fits in
/// a slice of `len` steps. Window i covers history [s, s+T) and target
/// [s+T, s+T+P).
inline std::vector<std::size_t> make_windows(std::size_t len, std::size_t lookback,
                                             std::size_t horizon, std::size_t stride = 1) {
  if (lookback == 0 || horizon == 0 || stride == 0)
    throw ConfigError("lookback, horizon and stride must be positive");
  std::vector<std::size_t> starts;
  if (len < lookback + horizon) return starts;
  for (std::size_t s = 0; s + lookback + horizon <= len; s += stride) starts.push_back(s);
  return starts;
}

template <class S>
struct WindowBatch {
  Tensor<S> x;  // [B, C, T]
  Tensor<S> y;  // [B, C, P]
  std::vector<CalendarFeatures> hist_calendar;  // B * T, batch-major
  std::vector<CalendarFeatures> fut_calendar;   // B * P
  std::vector<std::size_t> store_ids;           // one per batch entry
  std::vector<std::size_t> item_ids;            // one per channel
  // Optional precomputed date vectors added to the calendar embeddings.
  Tensor<S> hist_date_vectors;  // [B, T, D]
  Tensor<S> fut_date_vectors;   // [B, P, D]

  std::size_t batch() const { return x.dim(0); }
  std::size_t channels() const { return x.dim(1); }
  std::size_t lookback() const { return x.dim(2); }
  std::size_t horizon() const { return y.dim(2); }
};

struct WindowOptions {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t stride = 1;
  std::size_t store_id = 0;
};

/// Sliding windows over one (already normalized) split.
class WindowDataset {
 public:
  WindowDataset(RawSeries series, WindowOptions opt,
                std::shared_ptr<const VectorStore> date_vectors = nullptr)
      : series_(std::move(series)), opt_(opt), date_vectors_(std::move(date_vectors)) {
    starts_ = make_windows(series_.steps(), opt_.lookback, opt_.horizon, opt_.stride);
    if (starts_.empty())
      std::cerr << "warning: slice of " << series_.steps() << " steps yields no windows for lookback "
                << opt_.lookback << " + horizon " << opt_.horizon << '\n';
    calendar_.reserve(series_.steps());
    for (const auto& ts : series_.timestamps) calendar_.push_back(calendar_features(ts));
  }

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  const RawSeries& series() const { return series_; }
  const WindowOptions& options() const { return opt_; }
  std::size_t start(std::size_t window) const { return starts_.at(window); }

  template <class S>
  WindowBatch<S> batch(const std::vector<std::size_t>& windows) const {
    if (windows.empty()) throw ConfigError("empty batch");
    const std::size_t B = windows.size(), C = series_.channels(), T = opt_.lookback,
                      P = opt_.horizon;
    std::vector<S> x(B * C * T), y(B * C * P);
    WindowBatch<S> wb;
    wb.hist_calendar.reserve(B * T);
    wb.fut_calendar.reserve(B * P);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t s0 = starts_.at(windows[b]);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t) x[(b * C + c) * T + t] = static_cast<S>(series_.at(c, s0 + t));
        for (std::size_t p = 0; p < P; ++p)
          y[(b * C + c) * P + p] = static_cast<S>(series_.at(c, s0 + T + p));
      }
      for (std::size_t t = 0; t < T; ++t) wb.hist_calendar.push_back(calendar_[s0 + t]);
      for (std::size_t p = 0; p < P; ++p) wb.fut_calendar.push_back(calendar_[s0 + T + p]);
      wb.store_ids.push_back(opt_.store_id);
    }
    wb.x = Tensor<S>({B, C, T}, std::move(x));
    wb.y = Tensor<S>({B, C, P}, std::move(y));
    for (std::size_t c = 0; c < C; ++c) wb.item_ids.push_back(c);
    if (date_vectors_) {
      wb.hist_date_vectors = date_tensor<S>(windows, 0, T);
      wb.fut_date_vectors = date_tensor<S>(windows, T, P);
    }
    return wb;
  }

  template <class S>
  WindowBatch<S> batch_range(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return batch<S>(idx);
  }

 private:
  template <class S>
  Tensor<S> date_tensor(const std::vector<std::size_t>& windows, std::size_t offset,
                        std::size_t len) const {
    const std::size_t D = date_vectors_->dim();
    std::vector<S> d;
    d.reserve(windows.size() * len * D);
    for (auto w : windows)
      for (std::size_t i = 0; i < len; ++i) {
        const std::string key = series_.timestamps[starts_[w] + offset + i].substr(0, 10);
        for (double v : date_vectors_->at(key)) d.push_back(static_cast<S>(v));
      }
    return Tensor<S>({windows.size(), len, D}, std::move(d));
  }

  RawSeries series_;
  WindowOptions opt_;
  std::shared_ptr<const VectorStore> date_vectors_;
  std::vector<std::size_t> starts_;
  std::vector<CalendarFeatures> calendar_;
};

}  // namespace linet
