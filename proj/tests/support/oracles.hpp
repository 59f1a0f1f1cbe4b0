#pragma once

// Reference computations the tests compare the library against. Each one
// takes the slow, obvious route and shares no code with the implementation.

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "vulnmap/geocode.hpp"
#include "vulnmap/k3.hpp"

namespace vulnmap::testing {

using Table = std::vector<std::vector<std::optional<double>>>;

// Mean absolute difference over mutually observed columns, by double loop.
std::vector<std::vector<double>> naive_gower(const Table& rows);

struct MedoidSearch {
  double objective = 0.0;
  std::array<std::size_t, 3> medoids{};
};

// Tries every medoid triple.
MedoidSearch exhaustive_k3(const std::vector<std::vector<double>>& d);
MedoidSearch exhaustive_k3(const k3::GowerMatrix& d);

// Textbook PAM with every cost recomputed from scratch: greedy BUILD, then
// repeatedly apply the single best improving medoid/non-medoid exchange.
MedoidSearch textbook_pam(const k3::GowerMatrix& d);

// Total distance of every point to its nearest medoid.
double medoid_cost(const k3::GowerMatrix& d, const std::array<std::size_t, 3>& medoids);

struct ScanHit {
  std::size_t footprint = 0;
  double distance = 0.0;
};

// Intersects the ray segment with every edge of every footprint, solving
// each 2x2 system with Cramer's rule.
std::optional<ScanHit> linear_scan_match(const geocode::ViewRay& ray,
                                         const std::vector<geocode::PlanarFootprint>& footprints);

}  // namespace vulnmap::testing
