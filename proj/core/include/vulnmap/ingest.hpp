#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vulnmap/records.hpp"

// Readers and writers for the three pipeline inputs (plus annotations).
//
// Every parser fails with ParseError on the first bad record, naming the
// source, the 1-based line and the offending field. Parsers never reorder
// records. The writers emit exactly the format the parsers accept, so
// parse(write(x)) == x.
namespace vulnmap::ingest {

// --- detections.jsonl / predictions.jsonl ---------------------------------
std::vector<DetectionRecord> parse_detections(const std::filesystem::path& path);
std::vector<DetectionRecord> parse_detections(std::istream& in,
                                              const std::string& source);
void write_detections(std::ostream& out, std::span<const DetectionRecord> records);

// --- annotations.jsonl ------------------------------------------------------
std::vector<AnnotatedInstance> parse_annotations(const std::filesystem::path& path);
std::vector<AnnotatedInstance> parse_annotations(std::istream& in,
                                                 const std::string& source);
void write_annotations(std::ostream& out,
                       std::span<const AnnotatedInstance> records);

// --- footprints.geojson -----------------------------------------------------
std::vector<FootprintFeature> parse_footprints(const std::filesystem::path& path);
std::vector<FootprintFeature> parse_footprints(std::istream& in,
                                               const std::string& source);
void write_footprints(std::ostream& out, std::span<const FootprintFeature> features);

// Throws InputError describing the first violated ring invariant: closed,
// at least 4 vertices, nonzero area, no self-intersection.
void validate_ring(std::span<const GeoPoint> ring);

// --- schema.yaml --------------------------------------------------------------
// The 26 household variables of the K3 index: 15 yes/no housing-unit
// questions followed by 11 household-member percentages.
CensusSchema default_census_schema();
CensusSchema load_schema(const std::filesystem::path& path);
CensusSchema parse_schema(std::istream& in, const std::string& source);
void write_schema(std::ostream& out, const CensusSchema& schema);
void validate_schema(const CensusSchema& schema);

// --- census.csv -----------------------------------------------------------------
std::vector<HouseholdRecord> parse_census(const std::filesystem::path& path,
                                          const CensusSchema& schema);
std::vector<HouseholdRecord> parse_census(std::istream& in, const std::string& source,
                                          const CensusSchema& schema);
void write_census(std::ostream& out, std::span<const HouseholdRecord> records,
                  const CensusSchema& schema);

}  // namespace vulnmap::ingest
