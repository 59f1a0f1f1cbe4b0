#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vulnmap/taxonomy.hpp"

namespace vulnmap {

// Degrees, WGS84.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct PixelRect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  double area() const { return (x_max - x_min) * (y_max - y_min); }

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

using PixelPolygon = std::vector<PixelPoint>;

enum class Side : std::uint8_t { left, right };

struct AttributePrediction {
  ClassId class_id = 0;
  double confidence = 0.0;

  friend bool operator==(const AttributePrediction&,
                         const AttributePrediction&) = default;
};

// One building seen in one street-view image.
struct DetectionRecord {
  std::string image_id;
  GeoPoint capture_point;
  double camera_heading = 0.0;  // clockwise from north, [0, 360)
  Side side = Side::right;
  PixelRect bbox;
  std::optional<PixelPolygon> mask;
  PerAttribute<AttributePrediction> attributes{};

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct FootprintFeature {
  std::string footprint_id;
  std::string block_id;
  std::vector<GeoPoint> ring;  // closed: front() == back()

  friend bool operator==(const FootprintFeature&, const FootprintFeature&) = default;
};

enum class VariableKind : std::uint8_t { binary, percentage };
enum class Polarity : std::uint8_t { higher_is_better, higher_is_worse };

struct CensusVariable {
  std::string name;
  VariableKind kind = VariableKind::binary;
  Polarity polarity = Polarity::higher_is_better;

  friend bool operator==(const CensusVariable&, const CensusVariable&) = default;
};

struct CensusSchema {
  std::vector<CensusVariable> variables;

  std::size_t size() const { return variables.size(); }
  friend bool operator==(const CensusSchema&, const CensusSchema&) = default;
};

// Values are aligned with CensusSchema::variables. Binary cells hold 0 or 1,
// percentage cells hold [0, 100]; nullopt is a missing cell.
struct HouseholdRecord {
  std::string household_id;
  std::string block_id;
  std::vector<std::optional<double>> values;

  friend bool operator==(const HouseholdRecord&, const HouseholdRecord&) = default;
};

struct AnnotatedInstance {
  std::string image_id;
  PixelRect bbox;
  std::optional<PixelPolygon> mask;
  PerAttribute<ClassId> labels{};

  friend bool operator==(const AnnotatedInstance&, const AnnotatedInstance&) = default;
};

}  // namespace vulnmap
