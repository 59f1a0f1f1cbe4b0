#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vulnmap/records.hpp"
#include "vulnmap/spatial_index.hpp"

// Links street-view detections to building footprints.
//
// Each detection is turned into a ray leaving the camera perpendicular to
// the direction of travel, on the side of the vehicle the image was taken
// from. The first footprint wall that ray meets within `max_range` owns the
// detection. All geometry happens in a local planar frame (meters, x east,
// y north) obtained by an equirectangular projection.
namespace vulnmap::geocode {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kDefaultMaxRangeM = 50.0;

struct PlanarPoint {
  double x = 0.0;
  double y = 0.0;
};

// x = R * dlon * cos(lat0), y = R * dlat, angles in radians. Error stays
// below 0.1% for spans under ~5 km.
class LocalProjection {
 public:
  explicit LocalProjection(GeoPoint origin);

  PlanarPoint project(GeoPoint p) const;
  GeoPoint unproject(PlanarPoint p) const;
  GeoPoint origin() const { return origin_; }

 private:
  GeoPoint origin_;
  double cos_lat0_;
};

std::vector<PlanarPoint> project_local(std::span<const GeoPoint> points, GeoPoint origin);

struct ViewRay {
  PlanarPoint origin;
  double bearing_deg = 0.0;  // clockwise from north, [0, 360)
  double max_range = kDefaultMaxRangeM;

  PlanarPoint direction() const;  // unit vector
};

// heading + 90 for the right side, heading - 90 for the left, in [0, 360).
double perpendicular_bearing(double heading_deg, Side side);

ViewRay cast_ray(const DetectionRecord& d, const LocalProjection& projection,
                 double max_range = kDefaultMaxRangeM);

struct PlanarFootprint {
  std::vector<PlanarPoint> ring;  // closed
  BoundingBox bounds;
};

PlanarFootprint make_planar_footprint(std::vector<PlanarPoint> ring);

// Distance along the ray to the first crossing of the ring boundary, if any
// crossing lies in (0, max_range]. Edges are half-open [p_k, p_k+1) so a ray
// through a shared vertex is counted once.
std::optional<double> ray_ring_hit(const ViewRay& ray, std::span<const PlanarPoint> ring);

struct RayHit {
  std::size_t footprint = 0;
  double distance = 0.0;
};

BoundingBox ray_bounds(const ViewRay& ray);

// Nearest footprint hit, using `index` (built over `footprints[i].bounds`) to
// prune candidates. Equal distances resolve to the lower footprint index.
std::optional<RayHit> match_footprint(const ViewRay& ray, const SpatialIndex& index,
                                      std::span<const PlanarFootprint> footprints);

// Footprints projected around the center of their lon/lat extent, plus the
// index over them.
class FootprintMatcher {
 public:
  explicit FootprintMatcher(std::span<const FootprintFeature> features);

  std::optional<RayHit> match(const DetectionRecord& d, double max_range) const;

  const LocalProjection& projection() const { return projection_; }
  std::span<const PlanarFootprint> footprints() const { return planar_; }
  const SpatialIndex& index() const { return index_; }

 private:
  LocalProjection projection_;
  std::vector<PlanarFootprint> planar_;
  SpatialIndex index_;
};

struct BuildingAttributeRecord {
  std::string footprint_id;
  std::string block_id;
  std::size_t n_detections = 0;
  PerAttribute<ClassId> consensus{};
  // Summed confidence per class, in taxonomy order.
  PerAttribute<std::vector<double>> weights{};

  double support(Attribute a) const { return weights[index_of(a)][consensus[index_of(a)]]; }

  friend bool operator==(const BuildingAttributeRecord&,
                         const BuildingAttributeRecord&) = default;
};

// Confidence-weighted vote per attribute. Ties go to the class declared
// first in the taxonomy. Throws std::invalid_argument on an empty list.
BuildingAttributeRecord consensus_attributes(std::span<const DetectionRecord> detections,
                                             std::string footprint_id,
                                             std::string block_id);

struct Reject {
  std::size_t detection = 0;  // index into the input
  std::string reason;
};

struct GeocodeOptions {
  double max_range_m = kDefaultMaxRangeM;
  std::size_t threads = 1;
};

struct GeocodeResult {
  // One record per footprint with at least one detection, in footprint input order.
  std::vector<BuildingAttributeRecord> buildings;
  // Unmatched detections in input order.
  std::vector<Reject> rejects;
  // Matched footprint per detection.
  std::vector<std::optional<RayHit>> assignment;
};

GeocodeResult geocode(std::span<const DetectionRecord> detections,
                      std::span<const FootprintFeature> footprints,
                      const GeocodeOptions& options = {});

}  // namespace vulnmap::geocode
