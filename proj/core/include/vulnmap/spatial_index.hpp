#pragma once

#include <cstddef>
#include <vector>

namespace vulnmap::geocode {

struct BoundingBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  // Closed-interval overlap: boxes sharing only an edge intersect.
  bool intersects(const BoundingBox& o) const {
    return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
  }
  BoundingBox merged(const BoundingBox& o) const;
};

// Static R-tree packed with Sort-Tile-Recursive bulk loading. Immutable after
// construction, so concurrent queries are safe.
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const std::vector<BoundingBox>& boxes, std::size_t node_capacity = 16);

  // Indices (into the constructor's vector) of every box intersecting
  // `query`, in ascending order.
  std::vector<std::size_t> query(const BoundingBox& query) const;

  std::size_t size() const { return leaf_count_; }
  std::size_t height() const { return levels_.size(); }

 private:
  struct Node {
    BoundingBox box;
    std::size_t first = 0;  // first child in the level below, or item index at leaves
    std::size_t count = 0;
  };

  // levels_[0] holds the leaf entries (one per item, reordered); each higher
  // level groups contiguous runs of the level below. The last level is the root.
  std::vector<std::vector<Node>> levels_;
  std::vector<std::size_t> item_of_leaf_;
  std::size_t leaf_count_ = 0;
};

}  // namespace vulnmap::geocode
