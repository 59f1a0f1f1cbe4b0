#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "vulnmap/error.hpp"
#include "vulnmap/ingest.hpp"
#include "vulnmap/k3.hpp"

namespace vulnmap::k3 {
namespace {

using testing::exhaustive_k3;
using testing::naive_gower;
using testing::random_table;
using testing::to_matrix;

CensusSchema schema3() {
  return CensusSchema{{{"crowded", VariableKind::binary, Polarity::higher_is_worse},
                       {"water", VariableKind::binary, Polarity::higher_is_better},
                       {"pct_ok", VariableKind::percentage, Polarity::higher_is_better}}};
}

HouseholdRecord hh(std::string id, std::string block, std::vector<std::optional<double>> v) {
  return {std::move(id), std::move(block), std::move(v)};
}

TEST(Standardize, Mappings) {
  std::vector<HouseholdRecord> recs = {hh("a", "b", {1.0, 1.0, 0.0}), hh("b", "b", {0.0, 0.0, 50.0}),
                                       hh("c", "b", {std::nullopt, 1.0, 100.0})};
  auto m = standardize(recs, schema3());
  ASSERT_EQ(m.cols, 3u);
  EXPECT_EQ(m.at(0, 1), 1.0);  // yes, higher_is_better
  EXPECT_EQ(m.at(1, 2), 0.5);  // 50 in a [0, 100] column
  EXPECT_EQ(m.at(0, 0), 0.0);  // crowded = yes, flipped
  EXPECT_EQ(m.at(1, 0), 1.0);
  EXPECT_TRUE(m.missing(2, 0));
}

TEST(Standardize, RescalesObservedRange) {
  std::vector<HouseholdRecord> recs = {hh("a", "b", {1.0, 1.0, 20.0}), hh("b", "b", {0.0, 0.0, 40.0}),
                                       hh("c", "b", {0.0, 1.0, 30.0})};
  auto m = standardize(recs, schema3());
  EXPECT_EQ(m.at(0, 2), 0.0);
  EXPECT_EQ(m.at(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(m.at(2, 2), 0.5);
}

TEST(Standardize, DropsConstantAndRejectsEmptyColumns) {
  std::vector<HouseholdRecord> recs = {hh("a", "b", {1.0, 1.0, 20.0}), hh("b", "b", {0.0, 1.0, 40.0})};
  auto m = standardize(recs, schema3());
  EXPECT_EQ(m.cols, 2u);
  EXPECT_EQ(m.dropped_columns, std::vector<std::string>{"water"});
  EXPECT_EQ(m.schema_columns, (std::vector<std::size_t>{0, 2}));

  std::vector<HouseholdRecord> hole = {hh("a", "b", {1.0, std::nullopt, 20.0}),
                                       hh("b", "b", {0.0, std::nullopt, 40.0})};
  EXPECT_THROW(standardize(hole, schema3()), InputError);
  EXPECT_THROW(standardize(std::vector<HouseholdRecord>{}, schema3()), InputError);
}

TEST(Standardize, IdempotentOnUnitRangeOutput) {
  std::mt19937_64 rng(2);
  CensusSchema pct;
  for (int c = 0; c < 6; ++c) {
    pct.variables.push_back({"v" + std::to_string(c), VariableKind::percentage, Polarity::higher_is_better});
  }
  std::vector<HouseholdRecord> recs;
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 40; ++i) {
    HouseholdRecord h{"h" + std::to_string(i), "b", {}};
    for (int c = 0; c < 6; ++c) h.values.emplace_back(i % 7 == c ? std::nullopt : std::optional(u(rng)));
    recs.push_back(h);
  }
  auto once = standardize(recs, pct);
  // Feed the output back as percentages of a [0, 100] scale.
  std::vector<HouseholdRecord> again = recs;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      again[r].values[c] = once.missing(r, c) ? std::nullopt : std::optional(100.0 * once.at(r, c));
    }
  }
  auto twice = standardize(again, pct);
  for (std::size_t i = 0; i < once.cells.size(); ++i) {
    if (std::isnan(once.cells[i])) {
      EXPECT_TRUE(std::isnan(twice.cells[i]));
    } else {
      EXPECT_NEAR(twice.cells[i], once.cells[i], 1e-12);
    }
  }
}

StandardizedMatrix dense(std::vector<std::vector<double>> rows) {
  testing::Table t;
  for (auto& r : rows) t.emplace_back(r.begin(), r.end());
  return to_matrix(t);
}

TEST(Gower, Examples) {
  auto m = dense({{0, 0, 0, 0}, {1, 1, 1, 1}, {1, 0, 1, 0}, {0, 0, 0, 0}});
  auto d = gower(m);
  EXPECT_EQ(d(0, 3), 0.0);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(2, 1), 0.5);
  EXPECT_EQ(d(1, 2), 0.5);
  EXPECT_EQ(d(2, 2), 0.0);
}

TEST(Gower, SkipsMissingPairs) {
  testing::Table t = {{0.0, std::nullopt, 1.0}, {1.0, 0.5, std::nullopt}, {std::nullopt, 0.5, 0.0}};
  auto d = gower(to_matrix(t));
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(1, 2), 0.0);
  EXPECT_EQ(d(0, 2), 1.0);
  testing::Table disjoint = {{0.0, std::nullopt}, {std::nullopt, 1.0}};
  EXPECT_THROW(gower(to_matrix(disjoint)), InputError);
}

TEST(Gower, MatchesNaiveOracle) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 120;
    const std::size_t cols = 1 + rng() % 26;
    auto t = random_table(rng, n, cols, 0.1);
    auto d = gower(to_matrix(t), 1 + trial % 3);
    auto want = naive_gower(t);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(d(i, j), want[i][j], 1e-12);
    }
  }
}

TEST(Gower, MetricProperties) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    auto t = random_table(rng, 40, 10, trial % 2 ? 0.0 : 0.2);
    auto d = gower(to_matrix(t));
    for (std::size_t i = 0; i < 40; ++i) {
      EXPECT_EQ(d(i, i), 0.0);
      for (std::size_t j = 0; j < 40; ++j) {
        EXPECT_EQ(d(i, j), d(j, i));
        EXPECT_GE(d(i, j), 0.0);
        EXPECT_LE(d(i, j), 1.0);
        if (trial % 2 == 0) continue;
        for (std::size_t k = 0; k < 40; ++k) EXPECT_LE(d(i, k), d(i, j) + d(j, k) + 1e-12);
      }
    }
  }
}

GowerMatrix random_dissimilarity(std::mt19937_64& rng, std::size_t n, bool coarse) {
  GowerMatrix d(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d.set(i, j, coarse ? (rng() % 4) / 4.0 : u(rng));
  }
  return d;
}

TEST(Pam, ThreeDistinctPoints) {
  auto m = dense({{0.0}, {0.5}, {1.0}});
  auto a = cluster_k3(gower(m));
  EXPECT_EQ(a.objective, 0.0);
  std::set<int> ids(a.cluster.begin(), a.cluster.end());
  EXPECT_EQ(ids.size(), 3u);
}

TEST(Pam, TooFewHouseholds) {
  EXPECT_THROW(cluster_k3(GowerMatrix(2)), InputError);
}

TEST(Pam, DuplicatesShareACluster) {
  auto m = dense({{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {0.5, 0.0}, {0.5, 0.0}});
  auto a = cluster_k3(gower(m));
  EXPECT_EQ(a.cluster[0], a.cluster[1]);
  EXPECT_EQ(a.cluster[1], a.cluster[2]);
  EXPECT_EQ(a.cluster[3], a.cluster[4]);
  EXPECT_EQ(a.cluster[5], a.cluster[6]);
}

TEST(Pam, ThreeTightGroupsOnALine) {
  std::vector<std::vector<double>> rows;
  for (double center : {0.0, 0.45, 0.9}) {
    for (int k = 0; k < 4; ++k) rows.push_back({center + 0.01 * k});
  }
  auto d = gower(dense(rows));
  auto a = cluster_k3(d);
  auto best = exhaustive_k3(d);
  EXPECT_NEAR(a.objective, best.objective, 1e-12);
  for (int g = 0; g < 3; ++g) {
    for (int k = 1; k < 4; ++k) EXPECT_EQ(a.cluster[4 * g + k], a.cluster[4 * g]);
  }
  EXPECT_NE(a.cluster[0], a.cluster[4]);
  EXPECT_NE(a.cluster[4], a.cluster[8]);
  EXPECT_NE(a.cluster[0], a.cluster[8]);
}

TEST(Pam, ObjectiveMonotoneAndConsistent) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng() % 60;
    auto d = random_dissimilarity(rng, n, trial % 3 == 0);
    auto a = cluster_k3(d, trial);
    ASSERT_EQ(a.objective_trace.size(), a.swaps + 1);
    for (std::size_t k = 1; k < a.objective_trace.size(); ++k) {
      EXPECT_LT(a.objective_trace[k], a.objective_trace[k - 1]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = a.cluster[i];
      sum += d(i, a.medoids[c]);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(d(i, a.medoids[c]), d(i, a.medoids[k]));
    }
    EXPECT_NEAR(sum, a.objective, 1e-9);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.cluster[a.medoids[k]], k);
  }
}

TEST(Pam, MatchesTextbookPam) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng() % 30;
    auto d = random_dissimilarity(rng, n, false);
    auto a = cluster_k3(d);
    auto want = testing::textbook_pam(d);
    EXPECT_NEAR(a.objective, want.objective, 1e-12) << "trial " << trial;
    auto got = a.medoids;
    std::sort(got.begin(), got.end());
    std::sort(want.medoids.begin(), want.medoids.end());
    EXPECT_EQ(got, want.medoids) << "trial " << trial;
  }
}

TEST(Pam, NoSingleSwapImproves) {
  std::mt19937_64 rng(57);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + rng() % 25;
    auto d = random_dissimilarity(rng, n, trial % 2 == 0);
    auto a = cluster_k3(d, trial);
    for (std::size_t slot = 0; slot < 3; ++slot) {
      for (std::size_t h = 0; h < n; ++h) {
        auto m = a.medoids;
        m[slot] = h;
        if (std::set<std::size_t>(m.begin(), m.end()).size() < 3) continue;
        EXPECT_GE(testing::medoid_cost(d, m), a.objective - 1e-12);
      }
    }
  }
}

// PAM is a local search: on well-separated data it reaches the optimum, on
// arbitrary matrices it may stop in a local minimum.
TEST(Pam, ExhaustiveOptimumOnSeparatedData) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> jitter(0.0, 0.04);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6 + rng() % 7;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({0.45 * static_cast<double>(i % 3) + jitter(rng)});
    auto d = gower(dense(rows));
    EXPECT_NEAR(cluster_k3(d).objective, exhaustive_k3(d).objective, 1e-12) << "trial " << trial;
  }
}

TEST(Pam, SeedOnlyBreaksTies) {
  std::mt19937_64 rng(59);
  auto d = random_dissimilarity(rng, 40, false);
  auto a = cluster_k3(d, 0);
  auto b = cluster_k3(d, 12345);
  EXPECT_EQ(a.cluster, b.cluster);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(cluster_k3(d, 7).cluster, cluster_k3(d, 7, 3).cluster);
}

ClusterAssignment assignment(std::vector<std::uint8_t> cluster, std::array<std::size_t, 3> medoids) {
  ClusterAssignment a;
  a.cluster = std::move(cluster);
  a.medoids = medoids;
  return a;
}

TEST(Order, AscendingWelfare) {
  auto m = dense({{0.8}, {0.2}, {0.5}, {0.8}});
  auto o = order_clusters(assignment({0, 1, 2, 0}, {0, 1, 2}), m);
  EXPECT_EQ(o.label, (std::vector<std::uint8_t>{3, 1, 2, 3}));
  EXPECT_DOUBLE_EQ(o.welfare_by_label[0], 0.2);
  EXPECT_EQ(o.size_by_label[2], 2u);
}

TEST(Order, RawIdPermutationInvariant) {
  auto m = dense({{0.8}, {0.2}, {0.5}, {0.8}, {0.1}});
  const std::vector<std::uint8_t> raw = {0, 1, 2, 0, 1};
  auto ref = order_clusters(assignment(raw, {0, 1, 2}), m).label;
  std::array<std::uint8_t, 3> perm = {0, 1, 2};
  do {
    std::vector<std::uint8_t> relabeled;
    for (auto c : raw) relabeled.push_back(perm[c]);
    std::array<std::size_t, 3> medoids{};
    medoids[perm[0]] = 0;
    medoids[perm[1]] = 1;
    medoids[perm[2]] = 2;
    EXPECT_EQ(order_clusters(assignment(relabeled, medoids), m).label, ref);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Order, EqualWelfareLargerClusterFirst) {
  // Clusters 0 (size 3) and 1 (size 5) both average 0.5; cluster 2 is richer.
  auto m = dense({{0.4}, {0.5}, {0.6}, {0.5}, {0.5}, {0.5}, {0.3}, {0.7}, {0.9}});
  auto o = order_clusters(assignment({0, 0, 0, 1, 1, 1, 1, 1, 2}, {1, 3, 8}), m);
  EXPECT_EQ(o.label[3], 1);
  EXPECT_EQ(o.label[0], 2);
  EXPECT_EQ(o.label[8], 3);
}

TEST(Anova, HandComputedF) {
  std::vector<double> v = {0, 1, 2, 3, 4, 5};
  std::vector<int> g = {0, 0, 1, 1, 2, 2};
  auto r = anova_f(v, g);
  EXPECT_NEAR(r.f, 16.0, 1e-9);
  EXPECT_EQ(r.df_between, 2u);
  EXPECT_EQ(r.df_within, 3u);
  EXPECT_FALSE(r.infinite);
}

TEST(Anova, Degenerate) {
  std::vector<int> g = {0, 0, 1, 1};
  auto same = anova_f(std::vector<double>{2, 2, 2, 2}, g);
  EXPECT_EQ(same.f, 0.0);
  EXPECT_FALSE(same.infinite);
  auto flat = anova_f(std::vector<double>{0, 0, 1, 1}, g);
  EXPECT_TRUE(flat.infinite);
  EXPECT_TRUE(std::isinf(flat.f));
  EXPECT_THROW(anova_f(std::vector<double>{1, 2}, std::vector<int>{0, 0}), std::invalid_argument);
  EXPECT_THROW(anova_f(std::vector<double>{1, 2}, std::vector<int>{0, 1}), std::invalid_argument);
  EXPECT_THROW(anova_f(std::vector<double>{1, 2, 3}, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST(Anova, AffineInvariance) {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    std::vector<int> g;
    for (int i = 0; i < 30; ++i) {
      g.push_back(i % 3);
      v.push_back(0.5 * (i % 3) + z(rng));
    }
    const double f = anova_f(v, g).f;
    for (auto [a, b] : {std::pair{1.0, 7.5}, {-3.0, 0.0}, {0.01, -100.0}}) {
      std::vector<double> w;
      for (double x : v) w.push_back(a * x + b);
      EXPECT_NEAR(anova_f(w, g).f, f, 1e-8 * std::max(1.0, f));
    }
  }
}

TEST(BlockK3, Means) {
  std::vector<HouseholdRecord> hs = {hh("1", "A", {}), hh("2", "A", {}), hh("3", "A", {}),
                                     hh("4", "B", {}), hh("5", "B", {}), hh("6", "C", {}),
                                     hh("7", "C", {}), hh("8", "C", {})};
  std::vector<std::uint8_t> labels = {1, 2, 3, 1, 1, 1, 1, 2};
  auto blocks = block_k3(hs, labels);
  ASSERT_EQ(blocks.size(), 3u);
  EXPECT_EQ(blocks[0], (BlockK3{"A", 2.0, 3}));
  EXPECT_EQ(blocks[1], (BlockK3{"B", 1.0, 2}));
  EXPECT_NEAR(blocks[2].k3, 4.0 / 3.0, 1e-15);
}

std::vector<HouseholdRecord> planted_households(std::size_t n, std::uint64_t seed) {
  return testing::make_planted({.households = n, .buildings = 200, .seed = seed}).households;
}

TEST(ComputeK3, InvariantsOnPlantedData) {
  const auto schema = ingest::default_census_schema();
  auto hs = planted_households(600, 5);
  auto r = compute_k3(hs, schema, {.seed = 3});
  std::size_t total = 0;
  for (const auto& b : r.blocks) {
    EXPECT_GE(b.k3, 1.0);
    EXPECT_LE(b.k3, 3.0);
    total += b.n_households;
  }
  EXPECT_EQ(total, hs.size());
  std::array<std::size_t, 3> sizes{};
  for (auto l : r.labels) sizes[l - 1] += 1;
  EXPECT_EQ(sizes, r.diagnostics.size_by_label);
  EXPECT_LT(r.diagnostics.welfare_by_label[0], r.diagnostics.welfare_by_label[1]);
  EXPECT_LT(r.diagnostics.welfare_by_label[1], r.diagnostics.welfare_by_label[2]);
  ASSERT_TRUE(r.diagnostics.min_f);
  EXPECT_GT(r.diagnostics.fraction_above_threshold, 0.5);
}

TEST(ComputeK3, RowPermutationInvariant) {
  const auto schema = ingest::default_census_schema();
  auto hs = planted_households(300, 9);
  auto ref = compute_k3(hs, schema);
  std::map<std::string, std::uint8_t> by_id;
  for (std::size_t i = 0; i < hs.size(); ++i) by_id[hs[i].household_id] = ref.labels[i];
  std::mt19937_64 rng(67);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(hs.begin(), hs.end(), rng);
    auto r = compute_k3(hs, schema, {.threads = 1 + static_cast<std::size_t>(k % 3)});
    for (std::size_t i = 0; i < hs.size(); ++i) ASSERT_EQ(r.labels[i], by_id[hs[i].household_id]);
    EXPECT_EQ(r.blocks, ref.blocks);
  }
}

TEST(ComputeK3, RefusesHugeInputUnlessAllowed) {
  std::vector<HouseholdRecord> hs(kDefaultMaxHouseholds + 1, hh("x", "b", {1.0}));
  CensusSchema one{{{"v", VariableKind::binary, Polarity::higher_is_better}}};
  EXPECT_THROW(compute_k3(hs, one), InputError);
}

}  // namespace
}  // namespace vulnmap::k3
