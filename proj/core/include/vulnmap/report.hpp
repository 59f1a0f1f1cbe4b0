#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vulnmap/correlate.hpp"
#include "vulnmap/eval.hpp"
#include "vulnmap/geocode.hpp"
#include "vulnmap/k3.hpp"

// Serialization of pipeline artifacts. All writers emit UTF-8 with LF line
// endings; CSV follows RFC 4180 and numbers use the shortest text that
// round-trips, so identical inputs give byte-identical files.
namespace vulnmap::report {

void write_buildings_jsonl(std::ostream& out,
                           std::span<const geocode::BuildingAttributeRecord> buildings);
std::vector<geocode::BuildingAttributeRecord> read_buildings_jsonl(std::istream& in,
                                                                   const std::string& source);

void write_rejects_jsonl(std::ostream& out, std::span<const geocode::Reject> rejects,
                         std::span<const DetectionRecord> detections);

void write_blocks_k3_csv(std::ostream& out, std::span<const k3::BlockK3> blocks);
std::vector<k3::BlockK3> read_blocks_k3_csv(std::istream& in, const std::string& source);

void write_k3_diagnostics_json(std::ostream& out, const k3::K3Diagnostics& diagnostics,
                               std::uint64_t seed, std::size_t households);

void write_eval_report_json(std::ostream& out, const eval::EvalReport& report);

// Header row and column carry the variable names; undefined cells are empty.
void write_correlation_csv(std::ostream& out, const correlate::CorrelationMatrix& m);

// attribute,class,rank,mean_k3,n,slope,intercept
void write_class_k3_csv(std::ostream& out, std::span<const correlate::TrendSummary> trends);

// bin_lo,bin_hi,count
void write_histogram_csv(std::ostream& out, const correlate::Histogram& h);

// One polygon feature per footprint whose block has a K3 value, carrying the
// block's K3 and building-class proportions.
void write_blocks_joined_geojson(std::ostream& out, std::span<const FootprintFeature> footprints,
                                 std::span<const k3::BlockK3> blocks,
                                 std::span<const correlate::BlockProfile> profiles);

}  // namespace vulnmap::report
