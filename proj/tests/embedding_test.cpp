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
#include <random>
#include <sstream>

#include "linet/embedding.hpp"
#include "linet/grad_check.hpp"
#include "test_util.hpp"

namespace linet {
namespace {

std::size_t parse_error_position(std::string_view ts) {
  try {
    calendar_features(ts);
  } catch (const ParseError& e) {
    return e.position();
  }
  ADD_FAILURE() << "no ParseError for '" << ts << "'";
  return 0;
}

TEST(CalendarTest, Examples) {
  EXPECT_EQ(calendar_features("2016-07-01 00:00"), (CalendarFeatures{4, 1, 7, 0}));
  const auto leap = calendar_features("2020-02-29");
  EXPECT_EQ(leap.day_of_month, 29);
  EXPECT_EQ(leap.month, 2);
  EXPECT_EQ(leap.day_of_week, 5);
  EXPECT_EQ(leap.hour, 0);
  EXPECT_EQ(calendar_features("2018-06-26 19:45:00"), (CalendarFeatures{1, 26, 6, 19}));
  EXPECT_EQ(calendar_features("2000-01-02T23:59"), (CalendarFeatures{6, 2, 1, 23}));
  EXPECT_EQ(calendar_features("2016-07-01 00:00\r"), calendar_features("2016-07-01"));
}

TEST(CalendarTest, ErrorsCarryPosition) {
  EXPECT_THROW(calendar_features("2016-13-01"), ParseError);
  EXPECT_EQ(parse_error_position("2016-13-01"), 5u);
  EXPECT_EQ(parse_error_position("2019-02-29"), 8u);
  EXPECT_EQ(parse_error_position("2016/07/01"), 4u);
  EXPECT_EQ(parse_error_position("2016-07-0x"), 9u);
  EXPECT_EQ(parse_error_position("2016-07-01 24:00"), 11u);
  EXPECT_EQ(parse_error_position("2016-07-01 10:00:00Z"), 19u);
  EXPECT_EQ(parse_error_position("2016-07-01X10:00"), 10u);
  EXPECT_THROW(calendar_features(""), ParseError);
  EXPECT_THROW(calendar_features("2016-07"), ParseError);
}

TEST(CalendarTest, TimestampSeconds) {
  EXPECT_EQ(timestamp_seconds("1970-01-01"), 0);
  EXPECT_EQ(timestamp_seconds("1970-01-02 01:02:03"), 86400 + 3723);
  EXPECT_EQ(timestamp_seconds("2016-07-01 00:15") - timestamp_seconds("2016-07-01 00:00"), 900);
  EXPECT_EQ(timestamp_seconds("2020-03-01") - timestamp_seconds("2020-02-28"), 2 * 86400);
}

CalendarTables<double> random_tables(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  using T = CalendarTables<double>;
  return {EmbeddingTable<double>::normal(T::kDowVocab, dim, 1.0, rng),
          EmbeddingTable<double>::normal(T::kDomVocab, dim, 1.0, rng),
          EmbeddingTable<double>::normal(T::kMonthVocab, dim, 1.0, rng),
          EmbeddingTable<double>::normal(T::kHourVocab, dim, 1.0, rng)};
}

TEST(EmbedCalendarTest, ZeroTablesGiveZeroVector) {
  using T = CalendarTables<double>;
  const T tables{{Tensor64::zeros({T::kDowVocab, 3})}, {Tensor64::zeros({T::kDomVocab, 3})},
                 {Tensor64::zeros({T::kMonthVocab, 3})}, {Tensor64::zeros({T::kHourVocab, 3})}};
  EXPECT_EQ(embed_calendar(calendar_features("2016-07-01"), tables).values(),
            (std::vector<double>{0, 0, 0}));
}

TEST(EmbedCalendarTest, SumOfLookupsAndRowGradient) {
  const auto tables = random_tables(4, 5);
  const auto f = calendar_features("2016-07-01 13:00");
  const auto e = embed_calendar(f, tables);
  ASSERT_EQ(e.shape(), (Shape{4}));
  for (std::size_t j = 0; j < 4; ++j) {
    const double want = tables.day_of_week.rows[4 * 4 + j] + tables.day_of_month.rows[1 * 4 + j] +
                        tables.month.rows[7 * 4 + j] + tables.hour.rows[13 * 4 + j];
    EXPECT_NEAR(e[j], want, 1e-15);
  }
  sum(e).backward();
  const auto g = tables.hour.rows.grad();
  for (std::size_t r = 0; r < CalendarTables<double>::kHourVocab; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g[r * 4 + j], r == 13 ? 1.0 : 0.0);
}

TEST(EmbedCalendarTest, EqualFieldsGiveIdenticalVectors) {
  const auto tables = random_tables(3, 9);
  const auto a = embed_calendar(calendar_features("2016-07-01 05:00"), tables);
  const auto b = embed_calendar(calendar_features("2016-07-01 05:45"), tables);
  EXPECT_EQ(a.values(), b.values());
}

TEST(EmbedCalendarTest, MismatchedDims) {
  auto tables = random_tables(3, 1);
  std::mt19937_64 rng(0);
  tables.hour = EmbeddingTable<double>::normal(24, 2, 1.0, rng);
  EXPECT_THROW(embed_calendar(calendar_features("2016-07-01"), tables), ShapeError);
}

TEST(VectorStoreTest, ParsesFile) {
  testing::TempDir dir("vstore");
  const auto path = dir.file("vec.tsv");
  testing::write_text(path, "2016-07-01\t1,2.5,-3\r\n\nstore_0\t0,0,1e-3\n");
  const auto store = VectorStore::load(path);
  EXPECT_EQ(store.dim(), 3u);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_TRUE(store.contains("store_0"));
  EXPECT_EQ(store.at("2016-07-01"), (std::vector<double>{1, 2.5, -3}));
  EXPECT_THROW(store.at("missing"), ConfigError);
}

std::size_t store_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    VectorStore::parse(in);
  } catch (const ParseError& e) {
    return e.position();
  }
  ADD_FAILURE() << "no ParseError";
  return 0;
}

TEST(VectorStoreTest, Errors) {
  EXPECT_EQ(store_error_line("a\t1,2\nb 1,2\n"), 2u);
  EXPECT_EQ(store_error_line("a\t1,x\n"), 1u);
  EXPECT_EQ(store_error_line("a\t1,2\nb\t1,2,3\n"), 2u);
  EXPECT_EQ(store_error_line("a\t\n"), 1u);
  EXPECT_EQ(store_error_line("\t1\n"), 1u);
  EXPECT_EQ(store_error_line("a\t1,nan\n"), 1u);
  EXPECT_EQ(store_error_line("a\t1,2 \n"), 1u);
  EXPECT_THROW(VectorStore::load("/nonexistent/vec.tsv"), IoError);
}

TEST(MeanPoolTest, Examples) {
  EXPECT_EQ(mean_pool(Tensor64({1, 3}, {1, -2, 5})).values(), (std::vector<double>{1, -2, 5}));
  EXPECT_EQ(mean_pool(Tensor64({2, 2}, {1, 3, 3, 5})).values(), (std::vector<double>{2, 4}));
  EXPECT_EQ(mean_pool(Tensor64::zeros({4, 2})).values(), (std::vector<double>{0, 0}));
  EXPECT_THROW(mean_pool(Tensor64::vector({1, 2})), ShapeError);
  EXPECT_THROW(mean_pool(Tensor64::zeros({0, 2})), ShapeError);
}

TEST(MeanPoolTest, CommutesWithRowPermutation) {
  const Tensor64 h({3, 2}, {0.1, 0.7, -1.3, 2.2, 0.4, 0.05});
  const Tensor64 p({3, 2}, {0.4, 0.05, 0.1, 0.7, -1.3, 2.2});
  const auto a = mean_pool(h), b = mean_pool(p);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a[j], b[j], 1e-15);
}

TEST(CosineTest, Examples) {
  EXPECT_EQ(cosine(Tensor64::vector({1, 0}), Tensor64::vector({0, 1}))[0], 0.0);
  EXPECT_EQ(cosine(Tensor64::vector({2, 0}), Tensor64::vector({5, 0}))[0], 1.0);
  EXPECT_NEAR(cosine(Tensor64::vector({1, 1}), Tensor64::vector({1, 0}))[0], 0.70711, 1e-5);
  EXPECT_THROW(cosine(Tensor64::vector({0, 0}), Tensor64::vector({1, 0})), NumericalError);
  EXPECT_THROW(cosine(Tensor64::vector({1, 0}), Tensor64::vector({1, 0, 0})), ShapeError);
}

TEST(CosineTest, ScaleInvariance) {
  const auto u = Tensor64::vector({0.3, -1.1, 2.0}), v = Tensor64::vector({1.7, 0.2, -0.4});
  const double c = cosine(u, v)[0];
  for (double a : {1e-3, 0.5, 7.0, 1e4})
    for (double b : {2e-2, 3.0, 1e5}) EXPECT_NEAR(cosine(scale(u, a), scale(v, b))[0], c, 1e-12);
}

// Two-dimensional unit vectors with a prescribed cosine against e1.
Tensor64 at_cos(double c) { return Tensor64::vector({c, std::sqrt(1 - c * c)}, true); }

PairBatch<double> single_pair(double cos_pos, double cos_neg) {
  PairBatch<double> b;
  b.vectors = {Tensor64::vector({1, 0}, true), at_cos(cos_pos), at_cos(cos_neg)};
  b.pos_pairs = {{0, 1}};
  b.neg_pairs = {{0, 2}};
  return b;
}

TEST(CosentTest, SinglePairGoldens) {
  const double low = cosent_loss(single_pair(0.9, 0.1))[0];
  const double high = cosent_loss(single_pair(0.1, 0.9))[0];
  EXPECT_NEAR(low, 1.1254e-7, 1e-6 * 1.1254e-7 + 1e-11);
  EXPECT_NEAR(low, 1.1253516838717682e-07, 1e-6 * 1.1254e-7);
  EXPECT_NEAR(high, 16.00000011253517, 1e-6 * 16.0);
}

TEST(CosentTest, EmptyPairSetsGiveZero) {
  auto b = single_pair(0.2, 0.3);
  b.neg_pairs.clear();
  EXPECT_EQ(cosent_loss(b)[0], 0.0);
  b = single_pair(0.2, 0.3);
  b.pos_pairs.clear();
  EXPECT_EQ(cosent_loss(b)[0], 0.0);
}

TEST(CosentTest, InvalidBatches) {
  auto b = single_pair(0.2, 0.3);
  b.neg_pairs = {{1, 0}};
  EXPECT_THROW(cosent_loss(b), ConfigError);
  b = single_pair(0.2, 0.3);
  b.pos_pairs = {{0, 3}};
  EXPECT_THROW(cosent_loss(b), ConfigError);
  b = single_pair(0.2, 0.3);
  b.lambda = 0;
  EXPECT_THROW(cosent_loss(b), ConfigError);
}

TEST(CosentTest, NonNegativeAndMonotone) {
  double prev = -1;
  for (double cp = -0.9; cp <= 0.91; cp += 0.2) {
    const double l = cosent_loss(single_pair(cp, 0.0))[0];
    EXPECT_GE(l, 0.0);
    if (prev >= 0) {
      EXPECT_LT(l, prev);
    }
    prev = l;
  }
  prev = -1;
  for (double cn = -0.9; cn <= 0.91; cn += 0.2) {
    const double l = cosent_loss(single_pair(0.0, cn))[0];
    EXPECT_GE(l, 0.0);
    if (prev >= 0) {
      EXPECT_GT(l, prev);
    }
    prev = l;
  }
  // Central differences with respect to each cosine directly.
  const double h = 1e-5;
  auto loss_at = [](double cp, double cn) { return std::log1p(std::exp(20 * (cn - cp))); };
  for (double c : {-0.5, 0.0, 0.4}) {
    EXPECT_LT((loss_at(c + h, 0.3) - loss_at(c - h, 0.3)) / (2 * h), 0.0);
    EXPECT_GT((loss_at(0.3, c + h) - loss_at(0.3, c - h)) / (2 * h), 0.0);
    EXPECT_NEAR(cosent_loss(single_pair(c, 0.3))[0], loss_at(c, 0.3), 1e-12);
  }
}

TEST(CosentTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  std::vector<Tensor64> vs;
  for (int i = 0; i < 5; ++i) vs.push_back(Tensor64({4}, {nd(rng), nd(rng), nd(rng), nd(rng)}, true));
  PairBatch<double> b;
  b.vectors = vs;
  b.pos_pairs = {{0, 1}, {2, 3}};
  b.neg_pairs = {{0, 4}, {1, 2}, {3, 4}};
  b.lambda = 2.0;
  const auto r = grad_check([&] { return cosent_loss(b); }, vs);
  EXPECT_TRUE(r.passed) << r.message;
}

}  // namespace
}  // namespace linet
