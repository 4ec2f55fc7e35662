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

// Date, store and item embeddings, plus the sentence-embedding utilities
// used to fit them: mean pooling, cosine similarity and the CoSENT ranking
// loss.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linet/error.hpp"
#include "linet/tensor.hpp"

namespace linet {

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

struct CalendarFeatures {
  int day_of_week = 0;   // 0 = Monday .. 6 = Sunday
  int day_of_month = 1;  // 1..31
  int month = 1;         // 1..12
  int hour = 0;          // 0..23

  bool operator==(const CalendarFeatures&) const = default;
};

namespace detail {

inline int parse_fixed_int(std::string_view s, std::size_t pos, std::size_t width,
                           std::string_view whole) {
  if (pos + width > s.size())
    throw ParseError("timestamp '" + std::string(whole) + "' truncated at position " +
                         std::to_string(pos),
                     pos);
  int v = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (s[i] < '0' || s[i] > '9')
      throw ParseError("timestamp '" + std::string(whole) + "': expected digit at position " +
                           std::to_string(i),
                       i);
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

inline void expect_char(std::string_view s, std::size_t pos, char c, std::string_view whole) {
  if (pos >= s.size() || s[pos] != c)
    throw ParseError("timestamp '" + std::string(whole) + "': expected '" + std::string(1, c) +
                         "' at position " + std::to_string(pos),
                     pos);
}

}  // namespace detail

/// Parses `YYYY-MM-DD` optionally followed by ` HH:MM[:SS]` or `THH:MM[:SS]`.
inline CalendarFeatures calendar_features(std::string_view ts) {
  using namespace std::chrono;
  const std::string_view whole = ts;
  while (!ts.empty() && (ts.back() == ' ' || ts.back() == '\r')) ts.remove_suffix(1);
  const int y = detail::parse_fixed_int(ts, 0, 4, whole);
  detail::expect_char(ts, 4, '-', whole);
  const int mo = detail::parse_fixed_int(ts, 5, 2, whole);
  detail::expect_char(ts, 7, '-', whole);
  const int d = detail::parse_fixed_int(ts, 8, 2, whole);
  if (mo < 1 || mo > 12)
    throw ParseError("timestamp '" + std::string(whole) + "': month out of range at position 5", 5);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok())
    throw ParseError("timestamp '" + std::string(whole) + "': day out of range at position 8", 8);

  CalendarFeatures f;
  f.day_of_week = static_cast<int>(weekday{sys_days{ymd}}.iso_encoding()) - 1;
  f.day_of_month = d;
  f.month = mo;
  if (ts.size() > 10) {
    if (ts[10] != ' ' && ts[10] != 'T')
      throw ParseError("timestamp '" + std::string(whole) + "': unexpected character at position 10",
                       10);
    f.hour = detail::parse_fixed_int(ts, 11, 2, whole);
    detail::expect_char(ts, 13, ':', whole);
    const int minute = detail::parse_fixed_int(ts, 14, 2, whole);
    std::size_t end = 16;
    int second = 0;
    if (ts.size() > 16) {
      detail::expect_char(ts, 16, ':', whole);
      second = detail::parse_fixed_int(ts, 17, 2, whole);
      end = 19;
    }
    if (f.hour > 23 || minute > 59 || second > 59)
      throw ParseError("timestamp '" + std::string(whole) + "': time out of range at position 11",
                       11);
    if (ts.size() != end)
      throw ParseError("timestamp '" + std::string(whole) + "': trailing characters at position " +
                           std::to_string(end),
                       end);
  }
  return f;
}

/// Seconds since the Unix epoch, for stride and monotonicity checks.
inline std::int64_t timestamp_seconds(std::string_view ts) {
  using namespace std::chrono;
  const auto f = calendar_features(ts);
  const int y = detail::parse_fixed_int(ts, 0, 4, ts);
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(f.month)},
                           day{static_cast<unsigned>(f.day_of_month)}};
  std::int64_t secs = sys_days{ymd}.time_since_epoch().count() * 86400LL + f.hour * 3600LL;
  if (ts.size() >= 16) secs += detail::parse_fixed_int(ts, 14, 2, ts) * 60LL;
  if (ts.size() >= 19) secs += detail::parse_fixed_int(ts, 17, 2, ts);
  return secs;
}

// ---------------------------------------------------------------------------
// Lookup tables
// ---------------------------------------------------------------------------

template <class S>
struct EmbeddingTable {
  Tensor<S> rows;  // [vocab, dim]

  std::size_t vocab_size() const { return rows.dim(0); }
  std::size_t dim() const { return rows.dim(1); }

  /// [n, dim] rows for the given ids.
  Tensor<S> lookup(const std::vector<std::size_t>& ids) const { return gather_rows(rows, ids); }

  static EmbeddingTable normal(std::size_t vocab, std::size_t dim, double stddev,
                               std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<S> d(vocab * dim);
    for (auto& v : d) v = static_cast<S>(dist(rng));
    return {Tensor<S>({vocab, dim}, std::move(d), true)};
  }
};

/// One table per calendar field; all share `dim`.
template <class S>
struct CalendarTables {
  static constexpr std::size_t kDowVocab = 7;
  static constexpr std::size_t kDomVocab = 32;
  static constexpr std::size_t kMonthVocab = 13;
  static constexpr std::size_t kHourVocab = 24;

  EmbeddingTable<S> day_of_week, day_of_month, month, hour;
};

/// Sum of the four field embeddings for each entry, giving [n, dim].
template <class S>
Tensor<S> embed_calendar(const std::vector<CalendarFeatures>& feats,
                         const CalendarTables<S>& tables) {
  const std::size_t d = tables.day_of_week.dim();
  if (tables.day_of_month.dim() != d || tables.month.dim() != d || tables.hour.dim() != d)
    throw ShapeError("embed_calendar: tables must share one embedding dimension");
  std::vector<std::size_t> dow, dom, mon, hr;
  dow.reserve(feats.size());
  for (const auto& f : feats) {
    dow.push_back(static_cast<std::size_t>(f.day_of_week));
    dom.push_back(static_cast<std::size_t>(f.day_of_month));
    mon.push_back(static_cast<std::size_t>(f.month));
    hr.push_back(static_cast<std::size_t>(f.hour));
  }
  return add(add(tables.day_of_week.lookup(dow), tables.day_of_month.lookup(dom)),
             add(tables.month.lookup(mon), tables.hour.lookup(hr)));
}

template <class S>
Tensor<S> embed_calendar(const CalendarFeatures& f, const CalendarTables<S>& tables) {
  return reshape(embed_calendar(std::vector<CalendarFeatures>{f}, tables),
                 {tables.day_of_week.dim()});
}

// ---------------------------------------------------------------------------
// Precomputed vectors
// ---------------------------------------------------------------------------

/// Vectors keyed by date or entity id, read from `key<TAB>v1,v2,...,vd` lines.
class VectorStore {
 public:
  static VectorStore load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file '" + path + "'");
    return parse(in);
  }

  static VectorStore parse(std::istream& in) {
    VectorStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0)
        throw ParseError("embedding file line " + std::to_string(lineno) + ": expected key<TAB>values",
                         lineno);
      std::vector<double> v;
      std::stringstream ss(line.substr(tab + 1));
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double x = 0;
        try {
          x = std::stod(cell, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != cell.size() || !std::isfinite(x))
          throw ParseError("embedding file line " + std::to_string(lineno) + ": bad value '" +
                               cell + "'",
                           lineno);
        v.push_back(x);
      }
      if (v.empty())
        throw ParseError("embedding file line " + std::to_string(lineno) + ": no values", lineno);
      if (store.dim_ == 0) store.dim_ = v.size();
      if (v.size() != store.dim_)
        throw ParseError("embedding file line " + std::to_string(lineno) + ": expected " +
                             std::to_string(store.dim_) + " values, got " +
                             std::to_string(v.size()),
                         lineno);
      store.vectors_[line.substr(0, tab)] = std::move(v);
    }
    return store;
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& key) const { return vectors_.count(key) != 0; }
  const std::vector<double>& at(const std::string& key) const {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) throw ConfigError("no precomputed vector for key '" + key + "'");
    return it->second;
  }
  const std::map<std::string, std::vector<double>>& entries() const { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> vectors_;
};

// ---------------------------------------------------------------------------
// Sentence-vector utilities
// ---------------------------------------------------------------------------

/// Arithmetic mean of the L rows of an [L, D] token matrix.
template <class S>
Tensor<S> mean_pool(const Tensor<S>& tokens) {
  if (tokens.rank() != 2) throw ShapeError("mean_pool: expected [L, D], got " + shape_str(tokens.shape()));
  const std::size_t L = tokens.dim(0);
  auto avg = Tensor<S>::full({1, L}, S(1) / static_cast<S>(L));
  return reshape(matmul_batched(avg, tokens), {tokens.dim(1)});
}

/// u.v / (|u| |v|) as a one-element tensor.
template <class S>
Tensor<S> cosine(const Tensor<S>& u, const Tensor<S>& v) {
  if (u.numel() != v.numel())
    throw ShapeError("cosine: lengths differ: " + shape_str(u.shape()) + " vs " + shape_str(v.shape()));
  S dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0) || !(vv > 0)) throw NumericalError("cosine: zero-norm vector has no direction");
  const S nu = std::sqrt(uu), nv = std::sqrt(vv);
  const S c = std::clamp(dot / (nu * nv), S(-1), S(1));
  return autograd::make_result<S>({1}, {c}, {u, v}, "cosine",
                                  [nu, nv, c](detail::Node<S>& self) {
                                    const S g = self.grad[0];
                                    const auto& uv = self.parents[0]->data;
                                    const auto& vv = self.parents[1]->data;
                                    if (S* gu = autograd::grad_of(self, 0))
                                      for (std::size_t i = 0; i < uv.size(); ++i)
                                        gu[i] += g * (vv[i] / (nu * nv) - c * uv[i] / (nu * nu));
                                    if (S* gv = autograd::grad_of(self, 1))
                                      for (std::size_t i = 0; i < vv.size(); ++i)
                                        gv[i] += g * (uv[i] / (nu * nv) - c * vv[i] / (nv * nv));
                                  });
}

using IndexPair = std::pair<std::size_t, std::size_t>;

template <class S>
struct PairBatch {
  std::vector<Tensor<S>> vectors;
  std::vector<IndexPair> pos_pairs;
  std::vector<IndexPair> neg_pairs;
  double lambda = 20.0;

  void validate() const {
    if (!(lambda > 0)) throw ConfigError("CoSENT lambda must be positive");
    auto key = [](IndexPair p) {
      return IndexPair{std::min(p.first, p.second), std::max(p.first, p.second)};
    };
    std::set<IndexPair> pos;
    for (auto p : pos_pairs) {
      if (p.first >= vectors.size() || p.second >= vectors.size())
        throw ConfigError("CoSENT: positive pair index out of range");
      pos.insert(key(p));
    }
    for (auto p : neg_pairs) {
      if (p.first >= vectors.size() || p.second >= vectors.size())
        throw ConfigError("CoSENT: negative pair index out of range");
      if (pos.count(key(p)))
        throw ConfigError("CoSENT: pair (" + std::to_string(p.first) + "," +
                          std::to_string(p.second) + ") is both positive and negative");
    }
  }
};

/// log(1 + sum over (pos, neg) of exp(lambda * (cos_neg - cos_pos))).
template <class S>
Tensor<S> cosent_loss(const PairBatch<S>& batch) {
  batch.validate();
  if (batch.pos_pairs.empty() || batch.neg_pairs.empty()) return Tensor<S>::scalar(S(0));
  auto cos_of = [&](IndexPair p) { return cosine(batch.vectors[p.first], batch.vectors[p.second]); };
  std::vector<Tensor<S>> pos, neg, terms;
  for (auto p : batch.pos_pairs) pos.push_back(cos_of(p));
  for (auto p : batch.neg_pairs) neg.push_back(cos_of(p));
  terms.reserve(pos.size() * neg.size());
  for (const auto& cp : pos)
    for (const auto& cn : neg) terms.push_back(sub(cn, cp));
  return log1p_sum_exp(scale(concat_lastdim(terms), static_cast<S>(batch.lambda)));
}

}  // namespace linet
