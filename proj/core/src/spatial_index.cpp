#include "vulnmap/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vulnmap::geocode {

BoundingBox BoundingBox::merged(const BoundingBox& o) const {
  return {std::min(min_x, o.min_x), std::min(min_y, o.min_y), std::max(max_x, o.max_x),
          std::max(max_y, o.max_y)};
}

namespace {

double center_x(const BoundingBox& b) { return 0.5 * (b.min_x + b.max_x); }
double center_y(const BoundingBox& b) { return 0.5 * (b.min_y + b.max_y); }

// Sort-Tile-Recursive ordering: vertical slices by center x, each slice
// sorted by center y. Ties fall back to the original position so the layout
// is deterministic.
template <class Node>
void str_sort(std::vector<Node>& nodes, std::size_t capacity) {
  const std::size_t pages = (nodes.size() + capacity - 1) / capacity;
  const auto slices = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(pages))));
  const std::size_t per_slice = slices * capacity;

  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return center_x(nodes[a].box) < center_x(nodes[b].box);
  });
  for (std::size_t begin = 0; begin < order.size(); begin += per_slice) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(begin);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + per_slice));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return center_y(nodes[a].box) < center_y(nodes[b].box);
    });
  }
  std::vector<Node> sorted;
  sorted.reserve(nodes.size());
  for (std::size_t i : order) sorted.push_back(nodes[i]);
  nodes = std::move(sorted);
}

}  // namespace

SpatialIndex::SpatialIndex(const std::vector<BoundingBox>& boxes, std::size_t node_capacity) {
  if (node_capacity < 2) throw std::invalid_argument("node capacity must be at least 2");
  leaf_count_ = boxes.size();
  if (boxes.empty()) return;

  std::vector<Node> level;
  level.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) level.push_back({boxes[i], i, 1});
  str_sort(level, node_capacity);
  item_of_leaf_.reserve(level.size());
  for (const auto& n : level) item_of_leaf_.push_back(n.first);
  for (std::size_t i = 0; i < level.size(); ++i) level[i].first = i;
  levels_.push_back(std::move(level));

  while (levels_.back().size() > 1) {
    auto& below = levels_.back();
    if (levels_.size() > 1) {
      // Leaves are already tiled; upper levels are re-tiled by node box.
      str_sort(below, node_capacity);
    }
    std::vector<Node> above;
    for (std::size_t begin = 0; begin < below.size(); begin += node_capacity) {
      std::size_t end = std::min(below.size(), begin + node_capacity);
      Node parent{below[begin].box, begin, end - begin};
      for (std::size_t i = begin + 1; i < end; ++i) parent.box = parent.box.merged(below[i].box);
      above.push_back(parent);
    }
    levels_.push_back(std::move(above));
  }
}

std::vector<std::size_t> SpatialIndex::query(const BoundingBox& q) const {
  std::vector<std::size_t> hits;
  if (levels_.empty()) return hits;

  struct Frame {
    std::size_t level;
    std::size_t node;
  };
  std::vector<Frame> stack;
  const std::size_t root_level = levels_.size() - 1;
  for (std::size_t i = 0; i < levels_[root_level].size(); ++i) stack.push_back({root_level, i});

  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const Node& node = levels_[f.level][f.node];
    if (!node.box.intersects(q)) continue;
    if (f.level == 0) {
      hits.push_back(item_of_leaf_[node.first]);
      continue;
    }
    for (std::size_t c = 0; c < node.count; ++c) stack.push_back({f.level - 1, node.first + c});
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

}  // namespace vulnmap::geocode
