#include "lodstream/octree.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <string>

#include "lodstream/error.hpp"

namespace lodstream {

CubeBounds CubeBounds::child(int octant) const {
  const double h = half();
  CubeBounds c;
  c.size = h;
  for (int axis = 0; axis < 3; ++axis) {
    c.min[axis] = (octant >> axis) & 1 ? min[axis] + h : min[axis];
  }
  return c;
}

bool CubeBounds::contains(const Point& p) const {
  const Vec3 hi = max();
  return p.x >= min[0] && p.x <= hi[0] && p.y >= min[1] && p.y <= hi[1] && p.z >= min[2] && p.z <= hi[2];
}

CubeBounds CubeBounds::cubify(const Vec3& box_min, const Vec3& box_max) {
  double size = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    size = std::max(size, box_max[axis] - box_min[axis]);
  }
  if (!(size > 0.0)) {
    size = 1.0;
  }
  CubeBounds cube;
  cube.size = size;
  for (int axis = 0; axis < 3; ++axis) {
    const double mid = 0.5 * (box_min[axis] + box_max[axis]);
    cube.min[axis] = box_max[axis] - box_min[axis] == size ? box_min[axis] : mid - 0.5 * size;
  }
  return cube;
}

int octant_of(const Point& p, const Vec3& center) {
  return (p.x >= center[0] ? 1 : 0) | (p.y >= center[1] ? 2 : 0) | (p.z >= center[2] ? 4 : 0);
}

int octant_of(const Point& p, const CubeBounds& bounds) { return octant_of(p, bounds.center()); }

namespace {

std::uint32_t quantize(double v, double lo, double size, std::uint32_t resolution) {
  const double q = std::floor(resolution * (v - lo) / size);
  if (!(q > 0.0)) {
    return 0;
  }
  return q >= resolution - 1 ? resolution - 1 : static_cast<std::uint32_t>(q);
}

}  // namespace

CellCoord cell_coords_of(const Point& p, const CubeBounds& bounds, std::uint32_t resolution) {
  return {quantize(p.x, bounds.min[0], bounds.size, resolution), quantize(p.y, bounds.min[1], bounds.size, resolution),
          quantize(p.z, bounds.min[2], bounds.size, resolution)};
}

std::uint32_t cell_of(const Point& p, const CubeBounds& bounds, std::uint32_t resolution) {
  const CellCoord c = cell_coords_of(p, bounds, resolution);
  return c.x + resolution * (c.y + resolution * c.z);
}

CellCoord cell_coords(std::uint32_t cell, std::uint32_t resolution) {
  return {cell % resolution, (cell / resolution) % resolution, cell / (resolution * resolution)};
}

Point voxel_center(std::uint32_t cell, const CubeBounds& bounds, std::uint32_t resolution) {
  const CellCoord c = cell_coords(cell, resolution);
  const double step = bounds.size / resolution;
  Point p;
  p.x = static_cast<float>(bounds.min[0] + (c.x + 0.5) * step);
  p.y = static_cast<float>(bounds.min[1] + (c.y + 0.5) * step);
  p.z = static_cast<float>(bounds.min[2] + (c.z + 0.5) * step);
  return p;
}

Point make_voxel(std::uint32_t cell, const CubeBounds& bounds, std::uint32_t resolution, std::uint32_t rgba) {
  Point p = voxel_center(cell, bounds, resolution);
  p.set_rgba(rgba);
  return p;
}

OccupancyGrid::OccupancyGrid(std::span<std::uint64_t> words, std::uint32_t resolution)
    : words_(words), resolution_(resolution) {}

std::size_t OccupancyGrid::storage_bytes(std::uint32_t resolution) {
  const std::uint64_t cells = std::uint64_t{resolution} * resolution * resolution;
  return static_cast<std::size_t>((cells + 63) / 64 * 8);
}

CellProbe OccupancyGrid::test_and_set(std::uint32_t cell) {
  const std::uint64_t mask = std::uint64_t{1} << (cell & 63);
  std::atomic_ref<std::uint64_t> word(words_[cell >> 6]);
  if (word.load(std::memory_order_relaxed) & mask) {
    return CellProbe::WasOccupied;
  }
  return word.fetch_or(mask, std::memory_order_acq_rel) & mask ? CellProbe::WasOccupied : CellProbe::WasEmpty;
}

bool OccupancyGrid::test(std::uint32_t cell) const {
  const std::uint64_t mask = std::uint64_t{1} << (cell & 63);
  return std::atomic_ref<std::uint64_t>(const_cast<std::uint64_t&>(words_[cell >> 6])).load(
             std::memory_order_relaxed) &
         mask;
}

std::uint64_t OccupancyGrid::popcount() const {
  std::uint64_t total = 0;
  for (std::uint64_t w : words_) {
    total += static_cast<std::uint64_t>(std::popcount(w));
  }
  return total;
}

std::vector<std::uint32_t> OccupancyGrid::set_cells() const {
  std::vector<std::uint32_t> cells;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    std::uint64_t w = words_[i];
    while (w != 0) {
      const int bit = std::countr_zero(w);
      cells.push_back(static_cast<std::uint32_t>(i * 64 + bit));
      w &= w - 1;
    }
  }
  return cells;
}

std::vector<Point> samples_of(const Node& node) {
  std::vector<Point> out;
  out.reserve(node.count);
  for_each_sample(node, [&](const Point& p) { out.push_back(p); });
  return out;
}

void SpillBuffer::reserve_for(std::size_t extra) const {
  if (points_.size() + extra > capacity_) {
    throw Error(ErrorCode::SpillOverflow, "spill buffer needs " + std::to_string(points_.size() + extra) +
                                              " points, capacity is " + std::to_string(capacity_));
  }
}

Octree::Octree(const CubeBounds& root_bounds, const OctreeConfig& config)
    : config_(config), bounds_(root_bounds), arena_(config.arena_capacity), pool_(arena_, config.chunk_capacity) {
  if (!(root_bounds.size > 0.0) || !std::isfinite(root_bounds.size)) {
    throw Error(ErrorCode::InvalidArgument, "root bounds must have a positive size");
  }
  if (config.grid_resolution == 0 || config.grid_resolution > 1024) {
    throw Error(ErrorCode::InvalidArgument, "grid resolution must be in [1, 1024]");
  }
  if (config.leaf_threshold == 0) {
    throw Error(ErrorCode::InvalidArgument, "leaf threshold must be positive");
  }
}

Node& Octree::create_node(const CubeBounds& bounds, Node* parent, int octant) {
  auto node = std::make_unique<Node>();
  node->id = static_cast<std::uint32_t>(nodes_.size());
  node->bounds = bounds;
  node->center = bounds.center();
  node->parent = parent;
  node->octant = static_cast<std::uint8_t>(octant);
  node->level = parent == nullptr ? 0 : parent->level + 1;
  nodes_.push_back(std::move(node));
  return *nodes_.back();
}

Node& Octree::ensure_root() {
  if (nodes_.empty()) {
    create_node(bounds_, nullptr, 0);
  }
  return *nodes_.front();
}

Node* Octree::leaf_for(const Point& p) {
  Node* node = root();
  while (node != nullptr && node->is_inner()) {
    node = node->children[octant_of(p, node->center)];
  }
  return node;
}

const Node* Octree::leaf_for(const Point& p) const { return const_cast<Octree*>(this)->leaf_for(p); }

bool Octree::split(Node& node, SpillBuffer& spill) {
  if (!node.is_leaf()) {
    throw Error(ErrorCode::InvalidArgument, "node " + std::to_string(node.id) + " is already inner");
  }
  if (node.level >= config_.max_depth) {
    return false;
  }
  spill.reserve_for(node.count);

  const std::uint32_t g = config_.grid_resolution;
  const std::size_t grid_bytes = OccupancyGrid::storage_bytes(g);
  const Region region = arena_.allocate(grid_bytes, 64);
  node.grid = OccupancyGrid({reinterpret_cast<std::uint64_t*>(region.data), grid_bytes / 8}, g);

  for (int octant = 0; octant < 8; ++octant) {
    node.children[octant] = &create_node(node.bounds.child(octant), &node, octant);
  }
  for_each_sample(node, [&](const Point& p) { spill.push_back(p); });
  pool_.release(node.chunk_head);

  node.state = NodeState::Inner;
  node.count = 0;
  node.pending = 0;
  node.chunk_head = nullptr;
  node.chunk_tail = nullptr;
  node.chunk_count = 0;
  return true;
}

void Octree::reserve_samples(Node& node, std::uint32_t total) {
  const std::uint32_t needed = chunks_needed(total, config_.chunk_capacity);
  while (node.chunk_count < needed) {
    Chunk* chunk = pool_.acquire();
    if (node.chunk_tail == nullptr) {
      node.chunk_head = chunk;
    } else {
      node.chunk_tail->next = chunk;
    }
    node.chunk_tail = chunk;
    ++node.chunk_count;
  }
}

}  // namespace lodstream
