#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vulnmap/records.hpp"

// The K3 household-vulnerability index.
//
// Census variables are rescaled to [0, 1] with "higher = better off", the
// households are compared with Gower's coefficient, split into three groups
// by k-medoids, and the groups are numbered 1 (most vulnerable) to 3. A
// block's K3 is the mean group number of its households. One-way ANOVA per
// variable reports how well separated the groups are.
namespace vulnmap::k3 {

inline constexpr std::size_t kClusters = 3;
inline constexpr std::size_t kDefaultMaxHouseholds = 100'000;

// Row-major households x kept variables. NaN marks a missing cell.
struct StandardizedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cells;
  std::vector<std::string> column_names;
  std::vector<std::size_t> schema_columns;   // schema index of each kept column
  std::vector<std::string> dropped_columns;  // constant over observed cells

  double at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  bool missing(std::size_t r, std::size_t c) const { return std::isnan(at(r, c)); }
  std::span<const double> row(std::size_t r) const { return {cells.data() + r * cols, cols}; }
};

// Binary cells map to {0, 1}, percentages to value / 100, each column is then
// min-max rescaled over its observed cells, and higher_is_worse columns are
// flipped (x -> 1 - x). Columns with a single observed value carry no
// information and are dropped. Throws InputError on an all-missing column or
// an empty record list.
StandardizedMatrix standardize(std::span<const HouseholdRecord> records,
                               const CensusSchema& schema);

// Symmetric dissimilarity matrix with zero diagonal, stored as the strict
// upper triangle.
class GowerMatrix {
 public:
  GowerMatrix() = default;
  explicit GowerMatrix(std::size_t n);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, double d);

  // Builds from a dense row-major n x n matrix; only the upper triangle is read.
  static GowerMatrix from_dense(std::span<const double> dense, std::size_t n);

 private:
  std::size_t offset(std::size_t i, std::size_t j) const;  // requires i < j

  std::size_t n_ = 0;
  std::vector<double> upper_;
};

// d(i, j) = mean |x_ik - x_jk| over the columns observed in both rows (the
// range of every standardized column is 1). Throws InputError if some pair
// shares no observed column. Rows are computed independently, so the result
// does not depend on `threads`.
GowerMatrix gower(const StandardizedMatrix& m, std::size_t threads = 1);

struct ClusterAssignment {
  std::vector<std::uint8_t> cluster;        // raw id in [0, 3) per household
  std::array<std::size_t, kClusters> medoids{};
  double objective = 0.0;                   // sum of distances to own medoid
  std::vector<double> objective_trace;      // after BUILD, then after each swap
  std::size_t swaps = 0;
};

// Partitioning Around Medoids with k = 3: greedy BUILD, then SWAP until no
// exchange of a medoid with a non-medoid lowers the objective. Among equal
// costs the candidate with the lower tie-break rank wins; ranks are the
// household indices for seed 0 and a seeded permutation of them otherwise.
// Every medoid belongs to its own cluster, so all three clusters are
// non-empty. Throws InputError when fewer than 3 households are given.
ClusterAssignment cluster_k3(const GowerMatrix& d, std::uint64_t seed = 0,
                             std::size_t threads = 1);

struct OrderedClusters {
  std::vector<std::uint8_t> label;                // 1..3 per household
  std::array<std::uint8_t, kClusters> label_of_raw{};
  std::array<double, kClusters> welfare_by_label{};
  std::array<std::size_t, kClusters> size_by_label{};
  std::array<std::size_t, kClusters> medoid_by_label{};
};

// Labels clusters 1, 2, 3 by ascending mean standardized welfare (the mean
// of all observed cells of the cluster's members). Equal welfare: the
// larger cluster takes the lower label, then the lower medoid index.
OrderedClusters order_clusters(const ClusterAssignment& a, const StandardizedMatrix& m);

struct AnovaResult {
  double f = 0.0;  // +inf when infinite
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  bool infinite = false;  // zero within-group spread but distinct group means
};

// One-way ANOVA F = [SSB / (k - 1)] / [SSW / (N - k)] where k is the number
// of distinct labels. Throws std::invalid_argument for fewer than two groups,
// N <= k or mismatched lengths. When SSB and SSW are both zero, F = 0.
AnovaResult anova_f(std::span<const double> values, std::span<const int> groups);

struct VariableAnova {
  std::string variable;
  std::optional<AnovaResult> anova;  // nullopt when observed cells cannot support a test
};

// ANOVA of each standardized column across the cluster labels, using the
// observed cells only.
std::vector<VariableAnova> anova_by_variable(const StandardizedMatrix& m,
                                             std::span<const std::uint8_t> labels);

struct BlockK3 {
  std::string block_id;
  double k3 = 0.0;
  std::size_t n_households = 0;

  friend bool operator==(const BlockK3&, const BlockK3&) = default;
};

// Mean household label per block, sorted by block id.
std::vector<BlockK3> block_k3(std::span<const HouseholdRecord> households,
                              std::span<const std::uint8_t> labels);

struct K3Options {
  std::uint64_t seed = 0;
  double anova_threshold = 3.0;
  std::size_t threads = 1;
  bool allow_large = false;
};

struct K3Diagnostics {
  std::array<std::string, kClusters> medoid_household_by_label;
  std::array<std::size_t, kClusters> size_by_label{};
  std::array<double, kClusters> welfare_by_label{};
  double objective = 0.0;
  std::size_t swaps = 0;
  std::vector<VariableAnova> anova;
  std::optional<double> min_f;
  double fraction_above_threshold = 0.0;
  double anova_threshold = 3.0;
  std::vector<std::string> dropped_columns;
};

struct K3Result {
  std::vector<std::uint8_t> labels;  // aligned with the input households
  std::vector<BlockK3> blocks;
  K3Diagnostics diagnostics;
};

// The whole index. Households are processed in household_id order, so the
// result does not depend on the order of `households`. Refuses more than
// kDefaultMaxHouseholds households unless allow_large is set.
K3Result compute_k3(std::span<const HouseholdRecord> households, const CensusSchema& schema,
                    const K3Options& options = {});

}  // namespace vulnmap::k3
