#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lodstream/point.hpp"
#include "lodstream/store.hpp"

namespace lodstream {

using Vec3 = std::array<double, 3>;

inline constexpr std::uint32_t kDefaultLeafThreshold = 50'000;
inline constexpr std::uint32_t kDefaultGridResolution = 128;
inline constexpr std::uint32_t kDefaultMaxDepth = 20;
inline constexpr std::uint32_t kNoNode = 0xFFFF'FFFFu;

// Axis-aligned cube. Children split every axis at min + size/2.
struct CubeBounds {
  Vec3 min{0.0, 0.0, 0.0};
  double size = 1.0;

  double half() const { return size * 0.5; }
  Vec3 center() const { return {min[0] + half(), min[1] + half(), min[2] + half()}; }
  Vec3 max() const { return {min[0] + size, min[1] + size, min[2] + size}; }
  CubeBounds child(int octant) const;

  // Closed-interval containment.
  bool contains(const Point& p) const;

  // Smallest cube sharing the box's center along each axis.
  static CubeBounds cubify(const Vec3& box_min, const Vec3& box_max);

  friend bool operator==(const CubeBounds&, const CubeBounds&) = default;
};

// bit0: x >= center.x, bit1: y >= center.y, bit2: z >= center.z
int octant_of(const Point& p, const CubeBounds& bounds);
int octant_of(const Point& p, const Vec3& center);

struct CellCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;
};

CellCoord cell_coords_of(const Point& p, const CubeBounds& bounds, std::uint32_t resolution);
// cx + G*cy + G*G*cz, each coordinate clamped to [0, G-1].
std::uint32_t cell_of(const Point& p, const CubeBounds& bounds, std::uint32_t resolution);
CellCoord cell_coords(std::uint32_t cell, std::uint32_t resolution);

// Position of the center of `cell`: min + (coord + 0.5) * size / G per axis.
Point voxel_center(std::uint32_t cell, const CubeBounds& bounds, std::uint32_t resolution);
Point make_voxel(std::uint32_t cell, const CubeBounds& bounds, std::uint32_t resolution, std::uint32_t rgba);

enum class CellProbe { WasEmpty, WasOccupied };

// One bit per cell over G^3 cells. Non-owning: the words live in the arena.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(std::span<std::uint64_t> words, std::uint32_t resolution);

  static std::size_t storage_bytes(std::uint32_t resolution);

  bool valid() const { return !words_.empty(); }
  std::uint32_t resolution() const { return resolution_; }
  std::uint64_t cell_count() const {
    return std::uint64_t{resolution_} * resolution_ * resolution_;
  }

  // Atomic fetch-or; exactly one of several concurrent callers on the same
  // empty cell sees WasEmpty.
  CellProbe test_and_set(std::uint32_t cell);
  bool test(std::uint32_t cell) const;
  std::uint64_t popcount() const;
  std::vector<std::uint32_t> set_cells() const;

 private:
  std::span<std::uint64_t> words_;
  std::uint32_t resolution_ = 0;
};

enum class NodeState : std::uint8_t { Leaf, Inner };

struct Node {
  std::uint32_t id = 0;
  CubeBounds bounds;
  Vec3 center{};
  std::uint32_t level = 0;
  std::uint8_t octant = 0;
  NodeState state = NodeState::Leaf;
  Node* parent = nullptr;
  std::array<Node*, 8> children{};

  // Stored samples: points in a leaf, voxels in an inner node.
  std::uint32_t count = 0;
  Chunk* chunk_head = nullptr;
  Chunk* chunk_tail = nullptr;
  std::uint32_t chunk_count = 0;
  OccupancyGrid grid;

  // Per-update scratch, reset at the end of every insertion cycle.
  std::uint32_t pending = 0;
  bool final_flag = false;
  std::uint32_t slot = kNoNode;

  bool is_leaf() const { return state == NodeState::Leaf; }
  bool is_inner() const { return state == NodeState::Inner; }
};

// Walks the node's chunk list and visits its `count` samples in slot order.
template <class Fn>
void for_each_sample(const Node& node, Fn&& fn) {
  const Chunk* chunk = node.chunk_head;
  std::uint32_t remaining = node.count;
  while (remaining > 0 && chunk != nullptr) {
    const std::uint32_t n = remaining < chunk->capacity ? remaining : chunk->capacity;
    for (const Point& p : chunk->slots().first(n)) {
      fn(p);
    }
    remaining -= n;
    chunk = chunk->next;
  }
}

std::vector<Point> samples_of(const Node& node);

// Points of split leaves, re-inserted from the root within the same update.
class SpillBuffer {
 public:
  explicit SpillBuffer(std::size_t capacity = 10'000'000) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  std::span<const Point> points() const { return points_; }

  // Throws Error{SpillOverflow} if the buffer would exceed its capacity.
  void reserve_for(std::size_t extra) const;
  void push_back(const Point& p) { points_.push_back(p); }
  void clear() { points_.clear(); }

 private:
  std::size_t capacity_;
  std::vector<Point> points_;
};

struct OctreeConfig {
  std::uint32_t leaf_threshold = kDefaultLeafThreshold;
  std::uint32_t chunk_capacity = kDefaultChunkCapacity;
  std::uint32_t grid_resolution = kDefaultGridResolution;
  std::uint32_t max_depth = kDefaultMaxDepth;
  std::size_t arena_capacity = kDefaultArenaCapacity;
};

class Octree {
 public:
  explicit Octree(const CubeBounds& root_bounds, const OctreeConfig& config = {});

  Octree(const Octree&) = delete;
  Octree& operator=(const Octree&) = delete;

  const OctreeConfig& config() const { return config_; }
  const CubeBounds& bounds() const { return bounds_; }

  // The root is created on first insertion, so a fresh tree is empty.
  Node* root() { return nodes_.empty() ? nullptr : nodes_.front().get(); }
  const Node* root() const { return nodes_.empty() ? nullptr : nodes_.front().get(); }
  Node& ensure_root();

  std::size_t node_count() const { return nodes_.size(); }
  Node& node(std::uint32_t id) { return *nodes_[id]; }
  const Node& node(std::uint32_t id) const { return *nodes_[id]; }

  // Descends from the root using the >= routing rule.
  Node* leaf_for(const Point& p);
  const Node* leaf_for(const Point& p) const;

  // Converts a leaf into an inner node with 8 empty leaf children. Its stored
  // points are copied to `spill` and its chunks go back to the pool. Returns
  // false without touching the node when it sits at max depth.
  bool split(Node& node, SpillBuffer& spill);

  // Links chunks at the tail until the node can hold `total` samples.
  void reserve_samples(Node& node, std::uint32_t total);

  Arena& arena() { return arena_; }
  const Arena& arena() const { return arena_; }
  ChunkPool& pool() { return pool_; }
  const ChunkPool& pool() const { return pool_; }

 private:
  Node& create_node(const CubeBounds& bounds, Node* parent, int octant);

  OctreeConfig config_;
  CubeBounds bounds_;
  Arena arena_;
  ChunkPool pool_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace lodstream
