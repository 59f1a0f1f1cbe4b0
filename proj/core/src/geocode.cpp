#include "vulnmap/geocode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "detail/parallel.hpp"

namespace vulnmap::geocode {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double cross(PlanarPoint a, PlanarPoint b) { return a.x * b.y - a.y * b.x; }
double dot(PlanarPoint a, PlanarPoint b) { return a.x * b.x + a.y * b.y; }
PlanarPoint sub(PlanarPoint a, PlanarPoint b) { return {a.x - b.x, a.y - b.y}; }

double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r -= 360.0;
  return r;
}

}  // namespace

LocalProjection::LocalProjection(GeoPoint origin)
    : origin_(origin), cos_lat0_(std::cos(origin.lat * kDegToRad)) {}

PlanarPoint LocalProjection::project(GeoPoint p) const {
  return {kEarthRadiusM * (p.lon - origin_.lon) * kDegToRad * cos_lat0_,
          kEarthRadiusM * (p.lat - origin_.lat) * kDegToRad};
}

GeoPoint LocalProjection::unproject(PlanarPoint p) const {
  return {origin_.lon + p.x / (kEarthRadiusM * cos_lat0_ * kDegToRad),
          origin_.lat + p.y / (kEarthRadiusM * kDegToRad)};
}

std::vector<PlanarPoint> project_local(std::span<const GeoPoint> points, GeoPoint origin) {
  LocalProjection proj(origin);
  std::vector<PlanarPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(proj.project(p));
  return out;
}

PlanarPoint ViewRay::direction() const {
  double b = bearing_deg * kDegToRad;
  return {std::sin(b), std::cos(b)};
}

double perpendicular_bearing(double heading_deg, Side side) {
  return normalize_degrees(side == Side::right ? heading_deg + 90.0 : heading_deg - 90.0);
}

ViewRay cast_ray(const DetectionRecord& d, const LocalProjection& projection,
                 double max_range) {
  if (!(max_range > 0.0)) throw std::invalid_argument("max_range must be positive");
  return {projection.project(d.capture_point), perpendicular_bearing(d.camera_heading, d.side),
          max_range};
}

PlanarFootprint make_planar_footprint(std::vector<PlanarPoint> ring) {
  if (ring.empty()) throw std::invalid_argument("empty footprint ring");
  BoundingBox b{ring[0].x, ring[0].y, ring[0].x, ring[0].y};
  for (const auto& p : ring) b = b.merged({p.x, p.y, p.x, p.y});
  return {std::move(ring), b};
}

std::optional<double> ray_ring_hit(const ViewRay& ray, std::span<const PlanarPoint> ring) {
  const PlanarPoint u = ray.direction();
  std::optional<double> best;
  auto consider = [&](double t) {
    if (t > 0.0 && t <= ray.max_range && (!best || t < *best)) best = t;
  };
  for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
    const PlanarPoint p = ring[k];
    const PlanarPoint e = sub(ring[k + 1], p);
    const PlanarPoint w = sub(p, ray.origin);
    const double denom = cross(u, e);
    if (denom == 0.0) {
      // Parallel. A collinear edge is first reached at its nearer endpoint.
      if (cross(w, u) == 0.0) {
        double t0 = dot(w, u);
        double t1 = dot(sub(ring[k + 1], ray.origin), u);
        if (std::min(t0, t1) > 0.0) consider(std::min(t0, t1));
      }
      continue;
    }
    const double t = cross(w, e) / denom;
    const double s = cross(w, u) / denom;
    if (s >= 0.0 && s < 1.0) consider(t);
  }
  return best;
}

BoundingBox ray_bounds(const ViewRay& ray) {
  const PlanarPoint u = ray.direction();
  const PlanarPoint end{ray.origin.x + ray.max_range * u.x, ray.origin.y + ray.max_range * u.y};
  return {std::min(ray.origin.x, end.x), std::min(ray.origin.y, end.y),
          std::max(ray.origin.x, end.x), std::max(ray.origin.y, end.y)};
}

std::optional<RayHit> match_footprint(const ViewRay& ray, const SpatialIndex& index,
                                      std::span<const PlanarFootprint> footprints) {
  std::optional<RayHit> best;
  for (std::size_t i : index.query(ray_bounds(ray))) {
    auto t = ray_ring_hit(ray, footprints[i].ring);
    if (t && (!best || *t < best->distance)) best = RayHit{i, *t};
  }
  return best;
}

namespace {

GeoPoint extent_center(std::span<const FootprintFeature> features) {
  if (features.empty()) return {};
  double min_lon = features[0].ring[0].lon, max_lon = min_lon;
  double min_lat = features[0].ring[0].lat, max_lat = min_lat;
  for (const auto& f : features) {
    for (const auto& p : f.ring) {
      min_lon = std::min(min_lon, p.lon);
      max_lon = std::max(max_lon, p.lon);
      min_lat = std::min(min_lat, p.lat);
      max_lat = std::max(max_lat, p.lat);
    }
  }
  return {0.5 * (min_lon + max_lon), 0.5 * (min_lat + max_lat)};
}

}  // namespace

FootprintMatcher::FootprintMatcher(std::span<const FootprintFeature> features)
    : projection_(extent_center(features)) {
  planar_.reserve(features.size());
  std::vector<BoundingBox> boxes;
  boxes.reserve(features.size());
  for (const auto& f : features) {
    std::vector<PlanarPoint> ring;
    ring.reserve(f.ring.size());
    for (const auto& p : f.ring) ring.push_back(projection_.project(p));
    planar_.push_back(make_planar_footprint(std::move(ring)));
    boxes.push_back(planar_.back().bounds);
  }
  index_ = SpatialIndex(boxes);
}

std::optional<RayHit> FootprintMatcher::match(const DetectionRecord& d, double max_range) const {
  return match_footprint(cast_ray(d, projection_, max_range), index_, planar_);
}

BuildingAttributeRecord consensus_attributes(std::span<const DetectionRecord> detections,
                                             std::string footprint_id, std::string block_id) {
  if (detections.empty()) throw std::invalid_argument("consensus of an empty detection list");
  BuildingAttributeRecord rec;
  rec.footprint_id = std::move(footprint_id);
  rec.block_id = std::move(block_id);
  rec.n_detections = detections.size();
  for (Attribute a : kAllAttributes) {
    const std::size_t ai = index_of(a);
    // Sum each class's confidences in sorted order so the totals, and hence
    // the winner, do not depend on detection order.
    std::vector<std::vector<double>> votes(class_count(a));
    for (const auto& d : detections) {
      votes[d.attributes[ai].class_id].push_back(d.attributes[ai].confidence);
    }
    auto& weights = rec.weights[ai];
    weights.assign(class_count(a), 0.0);
    for (std::size_t c = 0; c < votes.size(); ++c) {
      std::sort(votes[c].begin(), votes[c].end());
      for (double v : votes[c]) weights[c] += v;
    }
    auto winner = std::max_element(weights.begin(), weights.end());  // first max wins ties
    rec.consensus[ai] = static_cast<ClassId>(winner - weights.begin());
  }
  return rec;
}

GeocodeResult geocode(std::span<const DetectionRecord> detections,
                      std::span<const FootprintFeature> footprints,
                      const GeocodeOptions& options) {
  if (!(options.max_range_m > 0.0)) throw std::invalid_argument("max_range_m must be positive");
  FootprintMatcher matcher(footprints);

  GeocodeResult result;
  result.assignment.resize(detections.size());
  detail::parallel_for(detections.size(), options.threads, [&](std::size_t i) {
    result.assignment[i] = matcher.match(detections[i], options.max_range_m);
  });

  std::vector<std::vector<DetectionRecord>> per_footprint(footprints.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (const auto& hit = result.assignment[i]) {
      per_footprint[hit->footprint].push_back(detections[i]);
    } else {
      result.rejects.push_back({i, "no footprint boundary within max range along viewing ray"});
    }
  }
  for (std::size_t f = 0; f < footprints.size(); ++f) {
    if (per_footprint[f].empty()) continue;
    result.buildings.push_back(consensus_attributes(per_footprint[f], footprints[f].footprint_id,
                                                    footprints[f].block_id));
  }
  return result;
}

}  // namespace vulnmap::geocode
