#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "doctest.h"
#include "lodstream/error.hpp"
#include "lodstream/octree.hpp"
#include "support/oracles.hpp"

using namespace lodstream;

namespace {

Point pt(float x, float y, float z, std::uint32_t rgba = 0xFF000000u) {
  Point p{x, y, z};
  p.set_rgba(rgba);
  return p;
}

const CubeBounds kUnit{{0.0, 0.0, 0.0}, 1.0};

}  // namespace

TEST_SUITE("octree") {
  TEST_CASE("octant routing sends boundary points up") {
    CHECK(octant_of(pt(0.1f, 0.1f, 0.1f), kUnit) == 0);
    CHECK(octant_of(pt(0.8f, 0.8f, 0.8f), kUnit) == 7);
    CHECK(octant_of(pt(0.5f, 0.1f, 0.1f), kUnit) == 1);
    CHECK(octant_of(pt(0.1f, 0.5f, 0.1f), kUnit) == 2);
    CHECK(octant_of(pt(0.1f, 0.1f, 0.5f), kUnit) == 4);
  }

  TEST_CASE("cell index with clamping") {
    CHECK(cell_of(pt(0.1f, 0.1f, 0.1f), kUnit, 4) == 0);
    CHECK(cell_of(pt(0.8f, 0.8f, 0.8f), kUnit, 4) == 63);
    CHECK(cell_of(pt(1.0f, 1.0f, 1.0f), kUnit, 4) == 63);
    CHECK(cell_of(pt(0.0f, 0.0f, 0.0f), kUnit, 4) == 0);
    CHECK(cell_of(pt(0.3f, 0.0f, 0.0f), kUnit, 4) == 1);
    CHECK(cell_of(pt(0.0f, 0.3f, 0.0f), kUnit, 4) == 4);
    CHECK(cell_of(pt(0.0f, 0.0f, 0.3f), kUnit, 4) == 16);
  }

  TEST_CASE("voxel centers") {
    const Point a = voxel_center(0, kUnit, 4);
    CHECK(a.x == 0.125f);
    CHECK(a.y == 0.125f);
    CHECK(a.z == 0.125f);
    const Point b = voxel_center(63, kUnit, 4);
    CHECK(b.x == 0.875f);
    CHECK(b.z == 0.875f);
    const Point c = voxel_center(0, CubeBounds{{10.0, 10.0, 10.0}, 8.0}, 128);
    CHECK(c.x == 10.03125f);
    CHECK(c.y == 10.03125f);
  }

  TEST_CASE("voxel centers map back to their cell") {
    const CubeBounds b{{-3.0, 2.0, 7.5}, 12.0};
    for (std::uint32_t g : {1u, 4u, 16u, 128u}) {
      for (std::uint32_t cell = 0; cell < g * g * g; cell += std::max(1u, g * g * g / 97)) {
        CHECK(cell_of(voxel_center(cell, b, g), b, g) == cell);
      }
    }
  }

  TEST_CASE("children tile the parent and routing lands inside the child") {
    const CubeBounds b{{-1.0, 4.0, 2.0}, 6.0};
    double volume = 0.0;
    for (int o = 0; o < 8; ++o) {
      const CubeBounds c = b.child(o);
      CHECK(c.size == 3.0);
      volume += c.size * c.size * c.size;
    }
    CHECK(volume == 216.0);
    for (const Point& p : testing::random_points(2000, 5, -1.0, 5.0)) {
      Point q = p;
      q.y = p.y + 5.0f;
      q.z = p.z + 3.0f;
      if (!b.contains(q)) continue;
      CHECK(b.child(octant_of(q, b)).contains(q));
    }
  }

  TEST_CASE("cubify expands shorter axes symmetrically") {
    const CubeBounds c = CubeBounds::cubify({0.0, 0.0, 0.0}, {2.0, 1.0, 1.0});
    CHECK(c.size == 2.0);
    CHECK(c.min[0] == 0.0);
    CHECK(c.min[1] == -0.5);
    CHECK(c.min[2] == -0.5);
    const CubeBounds u = CubeBounds::cubify({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
    CHECK(u.size == 1.0);
    CHECK(u.min == Vec3{0.0, 0.0, 0.0});
    CHECK(CubeBounds::cubify({3.0, 3.0, 3.0}, {3.0, 3.0, 3.0}).size > 0.0);
  }

  TEST_CASE("grid test-and-set") {
    std::vector<std::uint64_t> words(OccupancyGrid::storage_bytes(4) / 8);
    OccupancyGrid grid(words, 4);
    CHECK(grid.test_and_set(0) == CellProbe::WasEmpty);
    CHECK(grid.test_and_set(0) == CellProbe::WasOccupied);
    CHECK(grid.test_and_set(5) == CellProbe::WasEmpty);
    CHECK(grid.test(5));
    CHECK_FALSE(grid.test(6));
    CHECK(grid.popcount() == 2);
    CHECK(grid.set_cells() == std::vector<std::uint32_t>{0, 5});
  }

  TEST_CASE("grid storage is one bit per cell") {
    CHECK(OccupancyGrid::storage_bytes(128) == 256 * 1024);
    CHECK(OccupancyGrid::storage_bytes(4) == 8);
  }

  TEST_CASE("exactly one concurrent caller wins an empty cell") {
    std::vector<std::uint64_t> words(OccupancyGrid::storage_bytes(16) / 8);
    OccupancyGrid grid(words, 16);
    for (std::uint32_t cell = 0; cell < 64; ++cell) {
      std::atomic<int> winners{0};
      std::vector<std::thread> threads;
      for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
          if (grid.test_and_set(cell * 61) == CellProbe::WasEmpty) ++winners;
        });
      }
      for (auto& t : threads) t.join();
      CHECK(winners.load() == 1);
    }
    CHECK(grid.popcount() == 64);
  }

  TEST_CASE("fresh tree is empty and the root appears on demand") {
    Octree tree(kUnit, {});
    CHECK(tree.root() == nullptr);
    CHECK(tree.node_count() == 0);
    Node& root = tree.ensure_root();
    CHECK(root.id == 0);
    CHECK(root.level == 0);
    CHECK(root.is_leaf());
    CHECK(&tree.ensure_root() == &root);
  }

  TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(Octree(CubeBounds{{0, 0, 0}, 0.0}, {}), Error);
    OctreeConfig c;
    c.grid_resolution = 0;
    CHECK_THROWS_AS(Octree(kUnit, c), Error);
    c = {};
    c.leaf_threshold = 0;
    CHECK_THROWS_AS(Octree(kUnit, c), Error);
  }

  TEST_CASE("split of an empty leaf") {
    OctreeConfig c;
    c.grid_resolution = 4;
    c.chunk_capacity = 2;
    c.arena_capacity = 1 << 20;
    Octree tree(kUnit, c);
    SpillBuffer spill;
    Node& root = tree.ensure_root();
    REQUIRE(tree.split(root, spill));
    CHECK(root.is_inner());
    CHECK(root.grid.valid());
    CHECK(root.grid.popcount() == 0);
    CHECK(root.count == 0);
    CHECK(spill.empty());
    CHECK(tree.pool().released_total() == 0);
    CHECK(tree.node_count() == 9);
    for (int o = 0; o < 8; ++o) {
      const Node* child = root.children[o];
      CHECK(child->id == static_cast<std::uint32_t>(o + 1));
      CHECK(child->is_leaf());
      CHECK(child->count == 0);
      CHECK(child->chunk_head == nullptr);
      CHECK(child->bounds == kUnit.child(o));
      CHECK(child->level == 1);
      CHECK(child->parent == &root);
    }
  }

  TEST_CASE("split spills stored points and releases chunks") {
    OctreeConfig c;
    c.grid_resolution = 4;
    c.chunk_capacity = 2;
    c.arena_capacity = 1 << 20;
    Octree tree(kUnit, c);
    Node& root = tree.ensure_root();
    tree.reserve_samples(root, 3);
    CHECK(root.chunk_count == 2);
    const Point pts[3] = {pt(0.1f, 0.1f, 0.1f, 1), pt(0.2f, 0.2f, 0.2f, 2), pt(0.8f, 0.8f, 0.8f, 3)};
    root.chunk_head->slots()[0] = pts[0];
    root.chunk_head->slots()[1] = pts[1];
    root.chunk_head->next->slots()[0] = pts[2];
    root.count = 3;
    SpillBuffer spill;
    REQUIRE(tree.split(root, spill));
    REQUIRE(spill.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(same_bits(spill.points()[i], pts[i]));
    CHECK(tree.pool().released_total() == 2);
    CHECK(tree.pool().free_count() == 2);
    CHECK(root.chunk_head == nullptr);
    CHECK(root.chunk_count == 0);
    CHECK(root.count == 0);
  }

  TEST_CASE("split at max depth is refused") {
    OctreeConfig c;
    c.max_depth = 0;
    c.grid_resolution = 4;
    c.arena_capacity = 1 << 20;
    Octree tree(kUnit, c);
    SpillBuffer spill;
    Node& root = tree.ensure_root();
    CHECK_FALSE(tree.split(root, spill));
    CHECK(root.is_leaf());
    CHECK(tree.node_count() == 1);
  }

  TEST_CASE("split reports spill overflow") {
    OctreeConfig c;
    c.grid_resolution = 4;
    c.chunk_capacity = 4;
    c.arena_capacity = 1 << 20;
    Octree tree(kUnit, c);
    Node& root = tree.ensure_root();
    tree.reserve_samples(root, 3);
    root.count = 3;
    SpillBuffer spill(2);
    try {
      tree.split(root, spill);
      FAIL("expected SpillOverflow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SpillOverflow);
    }
  }

  TEST_CASE("reserve_samples appends at the tail and keeps existing chunks") {
    OctreeConfig c;
    c.chunk_capacity = 1000;
    c.arena_capacity = 1 << 24;
    Octree tree(kUnit, c);
    Node& root = tree.ensure_root();
    tree.reserve_samples(root, 999);
    Chunk* first = root.chunk_head;
    tree.reserve_samples(root, 1000);
    CHECK(root.chunk_count == 1);
    tree.reserve_samples(root, 1001);
    CHECK(root.chunk_count == 2);
    CHECK(root.chunk_head == first);
    CHECK(first->next == root.chunk_tail);
  }

  TEST_CASE("leaf_for follows the routing rule") {
    OctreeConfig c;
    c.grid_resolution = 4;
    c.arena_capacity = 1 << 20;
    Octree tree(kUnit, c);
    SpillBuffer spill;
    tree.split(tree.ensure_root(), spill);
    tree.split(*tree.root()->children[7], spill);
    CHECK(tree.leaf_for(pt(0.1f, 0.1f, 0.1f)) == tree.root()->children[0]);
    CHECK(tree.leaf_for(pt(0.9f, 0.9f, 0.9f)) == tree.root()->children[7]->children[7]);
    CHECK(tree.leaf_for(pt(0.75f, 0.5f, 0.5f)) == tree.root()->children[7]->children[1]);
  }
}
