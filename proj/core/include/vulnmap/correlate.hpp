#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vulnmap/geocode.hpp"
#include "vulnmap/k3.hpp"

// Block-level comparison of image-derived building attributes with K3.
namespace vulnmap::correlate {

struct BlockProfile {
  std::string block_id;
  std::size_t n_buildings = 0;
  // Share of the block's buildings in each class, taxonomy order; sums to 1.
  PerAttribute<std::vector<double>> proportions{};
};

// One profile per block, sorted by block id.
std::vector<BlockProfile> block_profiles(std::span<const geocode::BuildingAttributeRecord> buildings);

// Sample Pearson correlation. nullopt when either input has zero variance.
// Throws std::invalid_argument for unequal lengths or fewer than 2 values.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Column-major table: "k3" followed by one "<attribute>:<class>" column per
// class of every attribute. Rows are the blocks present in both inputs, in
// block id order.
struct JoinedTable {
  std::vector<std::string> block_ids;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // values[column][row]

  std::size_t rows() const { return block_ids.size(); }
};

JoinedTable join_k3_profiles(std::span<const k3::BlockK3> blocks,
                             std::span<const BlockProfile> profiles);

struct CorrelationMatrix {
  std::vector<std::string> columns;
  std::vector<std::optional<double>> cells;  // row-major, nullopt = undefined

  std::size_t size() const { return columns.size(); }
  const std::optional<double>& at(std::size_t i, std::size_t j) const {
    return cells[i * columns.size() + j];
  }
};

// Pairwise Pearson over all columns. The diagonal is exactly 1; off-diagonal
// cells involving a zero-variance column are undefined. Throws
// std::invalid_argument for fewer than 2 rows.
CorrelationMatrix correlation_matrix(const JoinedTable& table, std::size_t threads = 1);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares; nullopt when x has no spread.
std::optional<LineFit> least_squares(std::span<const double> x, std::span<const double> y);

struct ClassTrend {
  ClassId class_id = 0;
  std::size_t rank = 0;
  std::optional<double> mean_k3;  // nullopt when no building has this class
  std::size_t count = 0;
};

struct TrendSummary {
  Attribute attribute = Attribute::condition;
  std::vector<ClassTrend> classes;  // in rank order
  std::optional<LineFit> fit;       // over (rank, mean_k3) of populated classes
};

// The rank order used on the trend x-axis:
//   construction_type  unconfined, confined
//   material           wood_polished, wood_crude_plank, corrugated_metal,
//                      brick_or_concrete_block, plaster, mix_other_unclear
//   use                residential, non_residential, mixed
//   condition          poor, fair, good
// Materials outside this list are not ranked.
std::vector<ClassId> default_class_order(Attribute a);

// Each building takes its block's K3; K3 is averaged per consensus class.
// Throws InputError if a building's block has no K3 value.
TrendSummary class_k3_trend(std::span<const geocode::BuildingAttributeRecord> buildings,
                            std::span<const k3::BlockK3> blocks, Attribute attribute,
                            std::span<const ClassId> class_order);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;  // above hi, or NaN

  double bin_lo(std::size_t b) const;
  double bin_hi(std::size_t b) const;
};

// Equal-width bins over [lo, hi]. A value on an interior edge belongs to
// the upper bin; hi itself belongs to the last bin. Throws
// std::invalid_argument unless bins >= 1 and lo < hi.
Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

}  // namespace vulnmap::correlate
