#include "vulnmap/k3.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <tuple>

#include "detail/parallel.hpp"
#include "vulnmap/error.hpp"

namespace vulnmap::k3 {

// ---------------------------------------------------------------------------
// standardize

StandardizedMatrix standardize(std::span<const HouseholdRecord> records,
                               const CensusSchema& schema) {
  if (records.empty()) throw InputError("standardize: no households");
  const std::size_t n = records.size();
  const std::size_t p = schema.size();
  for (const auto& r : records) {
    if (r.values.size() != p) {
      throw InputError("household '" + r.household_id + "' has " +
                       std::to_string(r.values.size()) + " values, schema has " +
                       std::to_string(p));
    }
  }

  StandardizedMatrix m;
  m.rows = n;
  std::vector<std::vector<double>> kept;
  for (std::size_t k = 0; k < p; ++k) {
    const auto& var = schema.variables[k];
    const double scale = var.kind == VariableKind::percentage ? 100.0 : 1.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::vector<double> col(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
      if (const auto& v = records[i].values[k]) {
        col[i] = *v / scale;
        lo = std::min(lo, col[i]);
        hi = std::max(hi, col[i]);
      }
    }
    if (lo > hi) throw InputError("variable '" + var.name + "' has no observed values");
    if (lo == hi) {
      m.dropped_columns.push_back(var.name);
      continue;
    }
    const double range = hi - lo;
    for (double& x : col) {
      if (std::isnan(x)) continue;
      x = (x - lo) / range;
      if (var.polarity == Polarity::higher_is_worse) x = 1.0 - x;
    }
    kept.push_back(std::move(col));
    m.column_names.push_back(var.name);
    m.schema_columns.push_back(k);
  }

  m.cols = kept.size();
  m.cells.resize(n * m.cols);
  for (std::size_t c = 0; c < m.cols; ++c) {
    for (std::size_t i = 0; i < n; ++i) m.cells[i * m.cols + c] = kept[c][i];
  }
  return m;
}

// ---------------------------------------------------------------------------
// gower

GowerMatrix::GowerMatrix(std::size_t n) : n_(n), upper_(n * (n > 0 ? n - 1 : 0) / 2, 0.0) {}

std::size_t GowerMatrix::offset(std::size_t i, std::size_t j) const {
  // Row i of the strict upper triangle starts after i rows of decreasing length.
  return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

double GowerMatrix::operator()(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  return i < j ? upper_[offset(i, j)] : upper_[offset(j, i)];
}

void GowerMatrix::set(std::size_t i, std::size_t j, double d) {
  if (i == j) throw std::invalid_argument("GowerMatrix diagonal is fixed at zero");
  upper_[i < j ? offset(i, j) : offset(j, i)] = d;
}

GowerMatrix GowerMatrix::from_dense(std::span<const double> dense, std::size_t n) {
  if (dense.size() != n * n) throw std::invalid_argument("dense matrix size mismatch");
  GowerMatrix g(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) g.set(i, j, dense[i * n + j]);
  }
  return g;
}

GowerMatrix gower(const StandardizedMatrix& m, std::size_t threads) {
  if (m.cols == 0) throw InputError("gower: no variables left after standardization");
  const std::size_t n = m.rows;
  GowerMatrix g(n);
  constexpr std::size_t kNoFailure = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> first_failure(n, kNoFailure);

  detail::parallel_for(n, threads, [&](std::size_t i) {
    const auto xi = m.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto xj = m.row(j);
      double sum = 0.0;
      std::size_t shared = 0;
      for (std::size_t k = 0; k < m.cols; ++k) {
        if (std::isnan(xi[k]) || std::isnan(xj[k])) continue;
        sum += std::abs(xi[k] - xj[k]);
        ++shared;
      }
      if (shared == 0) {
        if (first_failure[i] == kNoFailure) first_failure[i] = j;
        continue;
      }
      g.set(i, j, sum / static_cast<double>(shared));
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    if (first_failure[i] != kNoFailure) {
      throw InputError("gower: households " + std::to_string(i) + " and " +
                       std::to_string(first_failure[i]) + " share no observed variable");
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// PAM

namespace {

std::vector<std::size_t> tie_break_ranks(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (seed != 0 && n > 1) {
    // Fisher-Yates over mt19937_64, whose output sequence is fixed by the
    // standard (unlike std::shuffle / distributions).
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::size_t> rank(n);
  for (std::size_t pos = 0; pos < n; ++pos) rank[order[pos]] = pos;
  return rank;
}

struct Nearest {
  std::vector<std::uint8_t> slot;
  std::vector<double> first;
  std::vector<double> second;
};

Nearest nearest_medoids(const GowerMatrix& d, const std::array<std::size_t, kClusters>& medoids) {
  const std::size_t n = d.size();
  Nearest out{std::vector<std::uint8_t>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    std::array<double, kClusters> dist{};
    for (std::size_t s = 0; s < kClusters; ++s) dist[s] = d(j, medoids[s]);
    std::size_t best = 0;
    for (std::size_t s = 1; s < kClusters; ++s) {
      if (dist[s] < dist[best]) best = s;
    }
    for (std::size_t s = 0; s < kClusters; ++s) {
      if (medoids[s] == j) best = s;
    }
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < kClusters; ++s) {
      if (s != best) second = std::min(second, dist[s]);
    }
    out.slot[j] = static_cast<std::uint8_t>(best);
    out.first[j] = dist[best];
    out.second[j] = second;
  }
  return out;
}

double total_cost(std::span<const double> dist) {
  double sum = 0.0;
  for (double v : dist) sum += v;
  return sum;
}

}  // namespace

ClusterAssignment cluster_k3(const GowerMatrix& d, std::uint64_t seed, std::size_t threads) {
  const std::size_t n = d.size();
  if (n < kClusters) {
    throw InputError("clustering needs at least 3 households, got " + std::to_string(n));
  }
  const auto rank = tie_break_ranks(n, seed);
  std::vector<bool> is_medoid(n, false);
  std::array<std::size_t, kClusters> medoids{};

  // BUILD: add the point that minimizes the objective given the medoids so far.
  std::vector<double> current(n, std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < kClusters; ++s) {
    std::vector<double> cost(n, std::numeric_limits<double>::infinity());
    detail::parallel_for(n, threads, [&](std::size_t c) {
      if (is_medoid[c]) return;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += std::min(current[j], d(j, c));
      cost[c] = sum;
    });
    std::size_t best = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_medoid[c]) continue;
      if (best == n || cost[c] < cost[best] || (cost[c] == cost[best] && rank[c] < rank[best])) {
        best = c;
      }
    }
    medoids[s] = best;
    is_medoid[best] = true;
    for (std::size_t j = 0; j < n; ++j) current[j] = std::min(current[j], d(j, best));
  }

  ClusterAssignment out;
  Nearest near = nearest_medoids(d, medoids);
  double objective = total_cost(near.first);
  out.objective_trace.push_back(objective);

  // SWAP: best (medoid, non-medoid) exchange per iteration, ordered by
  // (cost, rank of medoid, rank of candidate).
  struct Candidate {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t slot = 0;
  };
  std::vector<Candidate> per_point(n);
  for (;;) {
    detail::parallel_for(n, threads, [&](std::size_t h) {
      per_point[h] = Candidate{};
      if (is_medoid[h]) return;
      std::array<double, kClusters> cost{};
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = d(j, h);
        for (std::size_t s = 0; s < kClusters; ++s) {
          const double keep = near.slot[j] == s ? near.second[j] : near.first[j];
          cost[s] += std::min(keep, dh);
        }
      }
      Candidate best{cost[0], 0};
      for (std::size_t s = 1; s < kClusters; ++s) {
        if (cost[s] < best.cost ||
            (cost[s] == best.cost && rank[medoids[s]] < rank[medoids[best.slot]])) {
          best = {cost[s], s};
        }
      }
      per_point[h] = best;
    });

    std::size_t chosen = n;
    for (std::size_t h = 0; h < n; ++h) {
      if (is_medoid[h]) continue;
      if (chosen == n) {
        chosen = h;
        continue;
      }
      const auto& a = per_point[h];
      const auto& b = per_point[chosen];
      if (std::tuple(a.cost, rank[medoids[a.slot]], rank[h]) <
          std::tuple(b.cost, rank[medoids[b.slot]], rank[chosen])) {
        chosen = h;
      }
    }
    if (chosen == n || !(per_point[chosen].cost < objective)) break;

    const std::size_t slot = per_point[chosen].slot;
    is_medoid[medoids[slot]] = false;
    medoids[slot] = chosen;
    is_medoid[chosen] = true;
    near = nearest_medoids(d, medoids);
    objective = total_cost(near.first);
    out.objective_trace.push_back(objective);
    ++out.swaps;
  }

  out.medoids = medoids;
  out.objective = objective;
  out.cluster = std::move(near.slot);
  return out;
}

// ---------------------------------------------------------------------------
// cluster ordering

OrderedClusters order_clusters(const ClusterAssignment& a, const StandardizedMatrix& m) {
  if (a.cluster.size() != m.rows) {
    throw std::invalid_argument("order_clusters: assignment and matrix sizes differ");
  }
  std::array<double, kClusters> sum{};
  std::array<std::size_t, kClusters> observed{};
  std::array<std::size_t, kClusters> size{};
  for (std::size_t i = 0; i < m.rows; ++i) {
    const std::size_t c = a.cluster[i];
    if (c >= kClusters) throw std::invalid_argument("order_clusters: raw id out of range");
    ++size[c];
    for (double v : m.row(i)) {
      if (std::isnan(v)) continue;
      sum[c] += v;
      ++observed[c];
    }
  }
  std::array<double, kClusters> welfare{};
  for (std::size_t c = 0; c < kClusters; ++c) {
    if (size[c] == 0) throw std::invalid_argument("order_clusters: empty cluster");
    welfare[c] = observed[c] ? sum[c] / static_cast<double>(observed[c]) : 0.0;
  }

  std::array<std::size_t, kClusters> raw{0, 1, 2};
  std::sort(raw.begin(), raw.end(), [&](std::size_t x, std::size_t y) {
    if (welfare[x] != welfare[y]) return welfare[x] < welfare[y];
    if (size[x] != size[y]) return size[x] > size[y];
    return a.medoids[x] < a.medoids[y];
  });

  OrderedClusters out;
  for (std::size_t pos = 0; pos < kClusters; ++pos) {
    const std::size_t c = raw[pos];
    out.label_of_raw[c] = static_cast<std::uint8_t>(pos + 1);
    out.welfare_by_label[pos] = welfare[c];
    out.size_by_label[pos] = size[c];
    out.medoid_by_label[pos] = a.medoids[c];
  }
  out.label.reserve(a.cluster.size());
  for (auto c : a.cluster) out.label.push_back(out.label_of_raw[c]);
  return out;
}

// ---------------------------------------------------------------------------
// ANOVA

AnovaResult anova_f(std::span<const double> values, std::span<const int> groups) {
  if (values.size() != groups.size()) {
    throw std::invalid_argument("anova_f: values and groups differ in length");
  }
  struct Group {
    double sum = 0.0;
    std::size_t count = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
  };
  std::map<int, Group> by_label;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& g = by_label[groups[i]];
    g.sum += values[i];
    ++g.count;
    g.min = std::min(g.min, values[i]);
    g.max = std::max(g.max, values[i]);
  }
  const std::size_t k = by_label.size();
  const std::size_t n = values.size();
  if (k < 2) throw std::invalid_argument("anova_f: needs at least two groups");
  if (n <= k) throw std::invalid_argument("anova_f: needs more values than groups");

  AnovaResult r;
  r.df_between = k - 1;
  r.df_within = n - k;

  const bool all_equal = std::all_of(values.begin(), values.end(),
                                     [&](double v) { return v == values[0]; });
  if (all_equal) return r;  // SSB = SSW = 0

  // Exact test for zero within-group spread; the sums below would leave
  // rounding residue.
  const bool flat_groups = std::all_of(by_label.begin(), by_label.end(),
                                       [](const auto& kv) { return kv.second.min == kv.second.max; });
  if (flat_groups) {
    r.f = std::numeric_limits<double>::infinity();
    r.infinite = true;
    return r;
  }

  double grand = 0.0;
  for (double v : values) grand += v;
  grand /= static_cast<double>(n);

  std::map<int, double> mean;
  double ssb = 0.0;
  for (const auto& [label, g] : by_label) {
    mean[label] = g.sum / static_cast<double>(g.count);
    const double dev = mean[label] - grand;
    ssb += static_cast<double>(g.count) * dev * dev;
  }
  double ssw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = values[i] - mean[groups[i]];
    ssw += dev * dev;
  }
  r.f = (ssb / static_cast<double>(r.df_between)) / (ssw / static_cast<double>(r.df_within));
  return r;
}

std::vector<VariableAnova> anova_by_variable(const StandardizedMatrix& m,
                                             std::span<const std::uint8_t> labels) {
  if (labels.size() != m.rows) {
    throw std::invalid_argument("anova_by_variable: label count differs from rows");
  }
  std::vector<VariableAnova> out;
  std::vector<double> values;
  std::vector<int> groups;
  for (std::size_t c = 0; c < m.cols; ++c) {
    values.clear();
    groups.clear();
    for (std::size_t i = 0; i < m.rows; ++i) {
      if (m.missing(i, c)) continue;
      values.push_back(m.at(i, c));
      groups.push_back(labels[i]);
    }
    VariableAnova va{m.column_names[c], std::nullopt};
    std::vector<int> distinct = groups;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() >= 2 && values.size() > distinct.size()) va.anova = anova_f(values, groups);
    out.push_back(std::move(va));
  }
  return out;
}

// ---------------------------------------------------------------------------
// blocks

std::vector<BlockK3> block_k3(std::span<const HouseholdRecord> households,
                              std::span<const std::uint8_t> labels) {
  if (households.size() != labels.size()) {
    throw std::invalid_argument("block_k3: household and label counts differ");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> acc;  // label sum, count
  for (std::size_t i = 0; i < households.size(); ++i) {
    if (labels[i] < 1 || labels[i] > kClusters) {
      throw std::invalid_argument("block_k3: label outside 1..3");
    }
    auto& [sum, count] = acc[households[i].block_id];
    sum += labels[i];
    ++count;
  }
  std::vector<BlockK3> out;
  out.reserve(acc.size());
  for (const auto& [block, sc] : acc) {
    out.push_back({block, static_cast<double>(sc.first) / static_cast<double>(sc.second),
                   sc.second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// pipeline

K3Result compute_k3(std::span<const HouseholdRecord> households, const CensusSchema& schema,
                    const K3Options& options) {
  const std::size_t n = households.size();
  if (n > kDefaultMaxHouseholds && !options.allow_large) {
    throw InputError("refusing " + std::to_string(n) + " households (limit " +
                     std::to_string(kDefaultMaxHouseholds) +
                     "); the dissimilarity matrix grows as N^2, pass allow_large to override");
  }
  if (n < kClusters) {
    throw InputError("K3 needs at least 3 households, got " + std::to_string(n));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return households[a].household_id < households[b].household_id;
  });
  std::vector<HouseholdRecord> sorted;
  sorted.reserve(n);
  for (std::size_t i : order) sorted.push_back(households[i]);

  const StandardizedMatrix m = standardize(sorted, schema);
  const GowerMatrix d = gower(m, options.threads);
  const ClusterAssignment raw = cluster_k3(d, options.seed, options.threads);
  const OrderedClusters ordered = order_clusters(raw, m);

  K3Result result;
  result.labels.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) result.labels[order[pos]] = ordered.label[pos];
  result.blocks = block_k3(sorted, ordered.label);

  auto& diag = result.diagnostics;
  for (std::size_t l = 0; l < kClusters; ++l) {
    diag.medoid_household_by_label[l] = sorted[ordered.medoid_by_label[l]].household_id;
  }
  diag.size_by_label = ordered.size_by_label;
  diag.welfare_by_label = ordered.welfare_by_label;
  diag.objective = raw.objective;
  diag.swaps = raw.swaps;
  diag.anova = anova_by_variable(m, ordered.label);
  diag.anova_threshold = options.anova_threshold;
  diag.dropped_columns = m.dropped_columns;
  std::size_t tested = 0;
  std::size_t above = 0;
  for (const auto& va : diag.anova) {
    if (!va.anova) continue;
    ++tested;
    if (va.anova->f > options.anova_threshold) ++above;
    diag.min_f = diag.min_f ? std::min(*diag.min_f, va.anova->f) : va.anova->f;
  }
  diag.fraction_above_threshold =
      tested ? static_cast<double>(above) / static_cast<double>(tested) : 0.0;
  return result;
}

}  // namespace vulnmap::k3
