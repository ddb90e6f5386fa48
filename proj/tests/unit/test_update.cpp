#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "lodstream/error.hpp"
#include "lodstream/io.hpp"
#include "lodstream/update.hpp"
#include "support/oracles.hpp"

using namespace lodstream;
using lodstream::testing::build_reference;
using lodstream::testing::compare_trees;
using lodstream::testing::random_points;
using lodstream::testing::replay_voxels;

namespace {

constexpr std::uint32_t kRed = 0xFF0000FFu;
constexpr std::uint32_t kGreen = 0xFF00FF00u;
constexpr std::uint32_t kBlue = 0xFFFF0000u;

Point pt(float x, float y, float z, std::uint32_t rgba = 0xFF808080u) {
  Point p{x, y, z};
  p.set_rgba(rgba);
  return p;
}

const CubeBounds kUnit{{0.0, 0.0, 0.0}, 1.0};

OctreeConfig small_config(std::uint32_t t, std::uint32_t g, std::uint32_t c, std::uint32_t depth = 20) {
  OctreeConfig config;
  config.leaf_threshold = t;
  config.grid_resolution = g;
  config.chunk_capacity = c;
  config.max_depth = depth;
  config.arena_capacity = std::size_t{1} << 28;
  return config;
}

std::vector<Point> canonical() { return {pt(.1f, .1f, .1f, kRed), pt(.2f, .2f, .2f, kGreen), pt(.8f, .8f, .8f, kBlue)}; }

void check_quiescent(const Octree& tree, const Updater& updater) {
  CHECK(updater.spill().empty());
  CHECK(updater.backlog().empty());
  const std::uint32_t c = tree.config().chunk_capacity;
  for (std::uint32_t id = 0; id < tree.node_count(); ++id) {
    const Node& n = tree.node(id);
    CHECK_FALSE(n.final_flag);
    CHECK(n.pending == 0);
    CHECK(n.chunk_count == chunks_needed(n.count, c));
    std::uint32_t linked = 0;
    for (const Chunk* ch = n.chunk_head; ch != nullptr; ch = ch->next) {
      ++linked;
      if (ch->next != nullptr) CHECK(ch->occupied == c);
    }
    CHECK(linked == n.chunk_count);
    if (n.is_inner()) {
      CHECK(n.grid.popcount() == n.count);
    } else {
      CHECK_FALSE(n.grid.valid());
      if (n.level < tree.config().max_depth) CHECK(n.count <= tree.config().leaf_threshold);
    }
  }
  CHECK(tree.pool().allocated_total() ==
        [&] {
          std::size_t live = 0;
          for (std::uint32_t id = 0; id < tree.node_count(); ++id) live += tree.node(id).chunk_count;
          return live;
        }() + tree.pool().free_count());
}

// Ten points for the two-step insertion walkthrough: six in octant 0 spread
// over its sub-octants, four in octant 7.
std::vector<Point> ten_points() {
  return {pt(.05f, .05f, .05f), pt(.30f, .05f, .05f), pt(.05f, .30f, .05f), pt(.30f, .30f, .05f),
          pt(.05f, .05f, .30f), pt(.30f, .30f, .30f), pt(.60f, .60f, .60f), pt(.90f, .60f, .60f),
          pt(.60f, .90f, .60f), pt(.90f, .90f, .90f)};
}

}  // namespace

TEST_SUITE("update") {
  TEST_CASE("canonical tiny set") {
    Octree tree(kUnit, small_config(2, 4, 2));
    Updater updater(tree);
    const auto pts = canonical();
    updater.insert_batch(pts);

    const Node* root = tree.root();
    REQUIRE(root != nullptr);
    CHECK(root->is_inner());
    CHECK(root->count == 2);
    CHECK(root->chunk_count == 1);
    const std::vector<Point> voxels = samples_of(*root);
    REQUIRE(voxels.size() == 2);
    std::map<std::uint32_t, std::uint32_t> cells;
    for (const Point& v : voxels) cells[cell_of(v, root->bounds, 4)] = v.rgba();
    CHECK(cells == std::map<std::uint32_t, std::uint32_t>{{0, kRed}, {63, kBlue}});
    CHECK(same_bits(voxels[0], make_voxel(0, kUnit, 4, kRed)));

    const Node* c0 = root->children[0];
    const Node* c7 = root->children[7];
    REQUIRE(c0->count == 2);
    CHECK(c0->chunk_count == 1);
    CHECK(same_bits(samples_of(*c0)[0], pts[0]));
    CHECK(same_bits(samples_of(*c0)[1], pts[1]));
    CHECK(c7->count == 1);
    CHECK(c7->chunk_count == 1);
    CHECK(same_bits(samples_of(*c7)[0], pts[2]));
    for (int o = 1; o < 7; ++o) CHECK(root->children[o]->count == 0);
    check_quiescent(tree, updater);
  }

  TEST_CASE("canonical tiny set one point per batch") {
    Octree tree(kUnit, small_config(2, 4, 2));
    Updater updater(tree);
    for (const Point& p : canonical()) {
      updater.insert_batch(std::span<const Point>(&p, 1));
      check_quiescent(tree, updater);
    }
    auto ref = build_reference(canonical(), kUnit, 2, 20);
    replay_voxels(*ref, canonical(), 4);
    const auto mismatch = compare_trees(*ref, tree, true, true);
    CHECK_MESSAGE(!mismatch, (mismatch ? mismatch->where + ": " + mismatch->what : ""));
    // p2 splits the root, whose single chunk goes back to the pool.
    CHECK(updater.totals().points_spilled == 2);
    CHECK(tree.pool().released_total() == 1);
  }

  TEST_CASE("count pass starts from the stored count") {
    Octree tree(kUnit, small_config(5, 4, 2));
    Updater updater(tree);
    const auto pts = ten_points();
    updater.begin_cycle(pts);
    updater.count_pass();
    CHECK(tree.root()->count + tree.root()->pending == 10);
    CHECK(updater.split_pass() == 1);
    CHECK(tree.root()->is_inner());
    for (const Node* child : tree.root()->children) CHECK(child->pending == 0);
    updater.count_pass();
    CHECK(tree.root()->children[0]->pending == 6);
    CHECK(tree.root()->children[7]->pending == 4);
    CHECK(updater.split_pass() == 1);
    CHECK(tree.root()->children[7]->final_flag);
    // Final leaves are not counted again.
    updater.count_pass();
    CHECK(tree.root()->children[7]->pending == 4);
    CHECK(updater.split_pass() == 0);
    updater.sample_voxels();
    updater.allocate_chunks();
    updater.store_all();
    updater.end_cycle();
    check_quiescent(tree, updater);
  }

  TEST_CASE("prospective count adds pending to stored points") {
    Octree tree(kUnit, small_config(10, 4, 2));
    Updater updater(tree);
    const std::vector<Point> three{pt(.1f, .1f, .1f), pt(.2f, .1f, .1f), pt(.3f, .1f, .1f)};
    updater.insert_batch(three);
    CHECK(tree.root()->count == 3);
    const Point one = pt(.4f, .1f, .1f);
    updater.begin_cycle(std::span<const Point>(&one, 1));
    updater.count_pass();
    CHECK(tree.root()->count + tree.root()->pending == 4);
    updater.split_pass();
    updater.sample_voxels();
    updater.allocate_chunks();
    updater.store_all();
    updater.end_cycle();
    CHECK(tree.root()->count == 4);
  }

  TEST_CASE("ten points then a spilling pair") {
    Octree tree(kUnit, small_config(5, 4, 2));
    Updater updater(tree);
    const auto first = ten_points();
    const UpdateStats a = updater.insert_batch(first);
    CHECK(a.max_expansion_iterations == 3);
    CHECK(a.nodes_split == 2);
    const Node* root = tree.root();
    CHECK(root->is_inner());
    CHECK(root->children[0]->is_inner());
    CHECK(root->children[7]->is_leaf());
    CHECK(root->children[7]->count == 4);
    CHECK(root->children[7]->chunk_count == 2);
    check_quiescent(tree, updater);

    auto live_chunks = [&] {
      std::size_t live = 0;
      for (std::uint32_t id = 0; id < tree.node_count(); ++id) live += tree.node(id).chunk_count;
      return live;
    };
    const std::size_t allocated_before = tree.pool().allocated_total();
    const std::size_t live_before = live_chunks();
    const std::vector<Point> second{pt(.95f, .95f, .60f), pt(.60f, .60f, .95f)};
    const UpdateStats b = updater.insert_batch(second);
    CHECK(b.nodes_split == 1);
    CHECK(b.points_spilled == 4);
    CHECK(root->children[7]->is_inner());
    CHECK(tree.pool().released_total() == 2);
    // Both released chunks were reused before any new arena allocation.
    CHECK(tree.pool().free_count() == 0);
    CHECK(tree.pool().allocated_total() - allocated_before == live_chunks() - live_before);
    std::uint64_t leaf_points = 0;
    for (std::uint32_t id = 0; id < tree.node_count(); ++id) {
      const Node& n = tree.node(id);
      if (n.is_leaf()) {
        CHECK(n.count <= 5);
        leaf_points += n.count;
      }
    }
    CHECK(leaf_points == 12);
    check_quiescent(tree, updater);

    std::vector<Point> all = first;
    all.insert(all.end(), second.begin(), second.end());
    auto ref = build_reference(all, kUnit, 5, 20);
    replay_voxels(*ref, all, 4);
    const auto mismatch = compare_trees(*ref, tree, true, true);
    CHECK_MESSAGE(!mismatch, (mismatch ? mismatch->where + ": " + mismatch->what : ""));
  }

  TEST_CASE("batch into final-sized leaves needs one count pass") {
    Octree tree(kUnit, small_config(100, 4, 8));
    Updater updater(tree);
    const auto pts = random_points(50, 1);
    const UpdateStats s = updater.insert_batch(pts);
    CHECK(s.max_expansion_iterations == 1);
    CHECK(s.nodes_split == 0);
  }

  TEST_CASE("identical points stop at max depth") {
    Octree tree(kUnit, small_config(4, 4, 4, 6));
    Updater updater(tree);
    std::vector<Point> same(20, pt(.3f, .3f, .3f));
    updater.insert_batch(same);
    const Node* leaf = tree.leaf_for(same[0]);
    CHECK(leaf->level == 6);
    CHECK(leaf->count == 20);
    check_quiescent(tree, updater);
  }

  TEST_CASE("voxel grids persist across batches") {
    Octree tree(kUnit, small_config(50, 8, 16));
    Updater updater(tree);
    const auto pts = random_points(400, 2);
    updater.insert_batch(pts);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> before;
    for (std::uint32_t id = 0; id < tree.node_count(); ++id) {
      if (tree.node(id).is_inner()) {
        before.emplace_back(id, tree.node(id).count);
      }
    }
    REQUIRE_FALSE(before.empty());
    updater.insert_batch(pts);
    for (const auto& [id, count] : before) {
      CHECK(tree.node(id).count == count);
      CHECK(tree.node(id).grid.popcount() == count);
    }
  }

  TEST_CASE("no voxels while the root is a leaf") {
    Octree tree(kUnit, small_config(100, 8, 16));
    Updater updater(tree);
    const auto pts = random_points(60, 3);
    CHECK(updater.insert_batch(pts).voxels_created == 0);
  }

  TEST_CASE("chunk slots follow the formula") {
    Octree tree(kUnit, small_config(5000, 8, 1000));
    Updater updater(tree);
    const auto pts = random_points(1001, 4);
    updater.insert_batch(std::span<const Point>(pts).first(1));
    const Node* root = tree.root();
    CHECK(same_bits(root->chunk_head->slots()[0], pts[0]));
    updater.insert_batch(std::span<const Point>(pts).subspan(1, 998));
    CHECK(root->chunk_count == 1);
    updater.insert_batch(std::span<const Point>(pts).subspan(999, 1));
    CHECK(root->chunk_count == 1);
    updater.insert_batch(std::span<const Point>(pts).subspan(1000, 1));
    CHECK(root->chunk_count == 2);
    CHECK(same_bits(root->chunk_tail->slots()[0], pts[1000]));
  }

  TEST_CASE("backlog overflow names the flag") {
    Octree tree(kUnit, small_config(10, 16, 16));
    UpdateConfig config;
    config.backlog_capacity = 5;
    Updater updater(tree, config);
    const auto pts = random_points(200, 5);
    try {
      updater.insert_batch(pts);
      FAIL("expected BacklogOverflow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BacklogOverflow);
      CHECK(std::string(e.what()).find("--backlog") != std::string::npos);
    }
  }

  TEST_CASE("spill overflow is reported") {
    Octree tree(kUnit, small_config(10, 8, 16));
    UpdateConfig config;
    config.spill_capacity = 3;
    Updater updater(tree, config);
    const auto pts = random_points(8, 6);
    updater.insert_batch(pts);
    const auto more = random_points(8, 7);
    CHECK_THROWS_AS(updater.insert_batch(more), Error);
  }

  TEST_CASE("out of arena is reported") {
    OctreeConfig config = small_config(10, 128, 1000);
    config.arena_capacity = 300'000;
    Octree tree(kUnit, config);
    Updater updater(tree);
    const auto pts = random_points(100, 8);
    try {
      updater.insert_batch(pts);
      FAIL("expected OutOfArena");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OutOfArena);
    }
  }

  TEST_CASE("matches the reference builder under different partitions") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const bool surface = seed % 2 == 1;
      const std::size_t n = 3000 + seed * 1700;
      auto pts = make_synthetic(surface ? SyntheticKind::Surface : SyntheticKind::Uniform, n, seed);
      const CubeBounds bounds = bounds_of(pts);
      auto ref = build_reference(pts, bounds, 100, 12);
      replay_voxels(*ref, pts, 16);
      for (std::size_t batch : {std::size_t{7}, std::size_t{1000}, n}) {
        Octree tree(bounds, small_config(100, 16, 64, 12));
        Updater updater(tree);
        for (std::size_t i = 0; i < n; i += batch) {
          updater.insert_batch(std::span<const Point>(pts).subspan(i, std::min(batch, n - i)));
        }
        const auto mismatch = compare_trees(*ref, tree, true, true);
        CHECK_MESSAGE(!mismatch, "seed " << seed << " batch " << batch << ": "
                                         << (mismatch ? mismatch->where + ": " + mismatch->what : ""));
        check_quiescent(tree, updater);
      }
    }
  }

  TEST_CASE("deterministic state does not depend on thread count") {
    const auto pts = make_synthetic(SyntheticKind::Surface, 60'000, 11);
    const CubeBounds bounds = bounds_of(pts);
    std::vector<std::vector<std::vector<Point>>> states;
    for (int threads : {1, 2, 4}) {
      Octree tree(bounds, small_config(2000, 32, 256));
      UpdateConfig config;
      config.threads = threads;
      Updater updater(tree, config);
      for (std::size_t i = 0; i < pts.size(); i += 20'000) {
        updater.insert_batch(std::span<const Point>(pts).subspan(i, 20'000));
      }
      std::vector<std::vector<Point>> state;
      for (std::uint32_t id = 0; id < tree.node_count(); ++id) state.push_back(samples_of(tree.node(id)));
      states.push_back(std::move(state));
    }
    for (std::size_t s = 1; s < states.size(); ++s) {
      REQUIRE(states[s].size() == states[0].size());
      for (std::size_t id = 0; id < states[0].size(); ++id) {
        REQUIRE(states[s][id].size() == states[0][id].size());
        CHECK(std::equal(states[s][id].begin(), states[s][id].end(), states[0][id].begin(), same_bits));
      }
    }
  }

  TEST_CASE("racy mode keeps multisets and cell sets") {
    const auto pts = make_synthetic(SyntheticKind::Uniform, 50'000, 12);
    const CubeBounds bounds = bounds_of(pts);
    auto ref = build_reference(pts, bounds, 1500, 20);
    Octree tree(bounds, small_config(1500, 16, 128));
    UpdateConfig config;
    config.deterministic = false;
    config.threads = 4;
    Updater updater(tree, config);
    for (std::size_t i = 0; i < pts.size(); i += 10'000) {
      updater.insert_batch(std::span<const Point>(pts).subspan(i, 10'000));
    }
    const auto mismatch = compare_trees(*ref, tree, false, false);
    CHECK_MESSAGE(!mismatch, (mismatch ? mismatch->where + ": " + mismatch->what : ""));
    replay_voxels(*ref, pts, 16);
    std::vector<std::pair<const lodstream::testing::RefNode*, const Node*>> stack{{ref.get(), tree.root()}};
    while (!stack.empty()) {
      auto [r, n] = stack.back();
      stack.pop_back();
      if (!r->inner) continue;
      std::vector<std::uint32_t> want;
      for (const auto& [cell, color] : r->voxels) want.push_back(cell);
      CHECK(n->grid.set_cells() == want);
      CHECK(n->count == want.size());
      for (int o = 0; o < 8; ++o) stack.push_back({r->children[o].get(), n->children[o]});
    }
    check_quiescent(tree, updater);
  }

  TEST_CASE("budget: tiny budget processes exactly one batch per frame") {
    Octree tree(kUnit, small_config(50, 8, 16));
    Updater updater(tree);
    BatchQueue queue(16);
    for (int i = 0; i < 5; ++i) queue.push(Batch{random_points(100, 20 + i), 0});
    BudgetClock clock(0.001);
    const UpdateStats s = updater.run_frame_updates(queue, clock);
    CHECK(s.batches == 1);
    CHECK(queue.size() == 4);
    CHECK(updater.totals().frames == 1);
  }

  TEST_CASE("budget: empty queue is a no-op") {
    Octree tree(kUnit, small_config(50, 8, 16));
    Updater updater(tree);
    BatchQueue queue(4);
    BudgetClock clock(10.0);
    const UpdateStats s = updater.run_frame_updates(queue, clock);
    CHECK(s.batches == 0);
    CHECK(updater.totals().frames == 0);
    CHECK(tree.root() == nullptr);
  }

  TEST_CASE("budget: generous budget drains the queue") {
    Octree tree(kUnit, small_config(50, 8, 16));
    Updater updater(tree);
    BatchQueue queue(16);
    for (int i = 0; i < 5; ++i) queue.push(Batch{random_points(100, 30 + i), 0});
    BudgetClock clock(10'000.0);
    CHECK(updater.run_frame_updates(queue, clock).batches == 5);
    CHECK(updater.totals().points_inserted == 500);
  }

  TEST_CASE("stats are dimensionally consistent") {
    UpdateStats s;
    s.points_inserted = 2'000'000;
    s.update_ms = 1000.0;
    CHECK(s.throughput_mps() == doctest::Approx(2.0));
    s.frames = 4;
    s.frame_ms = 10.0;
    CHECK(s.avg_frame_ms() == doctest::Approx(2.5));
  }

  TEST_CASE("listener sees the canonical event order") {
    struct Recorder : UpdateListener {
      std::vector<std::string> events;
      void on_node_created(const Node& n) override { events.push_back("created " + std::to_string(n.id)); }
      void on_node_split(const Node& n) override { events.push_back("split " + std::to_string(n.id)); }
      void on_points_stored(const Node& n, std::uint32_t first, std::uint32_t count) override {
        events.push_back("points " + std::to_string(n.id) + " " + std::to_string(first) + "+" + std::to_string(count));
      }
      void on_voxels_stored(const Node& n, std::span<const VoxelEntry> e) override {
        events.push_back("voxels " + std::to_string(n.id) + " " + std::to_string(e.size()));
      }
    } recorder;
    Octree tree(kUnit, small_config(2, 4, 2));
    Updater updater(tree);
    updater.set_listener(&recorder);
    for (const Point& p : canonical()) updater.insert_batch(std::span<const Point>(&p, 1));
    const std::vector<std::string> want{"created 0",  "points 0 0+1", "points 0 1+1", "split 0",
                                        "created 1",  "created 2",    "created 3",    "created 4",
                                        "created 5",  "created 6",    "created 7",    "created 8",
                                        "voxels 0 2", "points 1 0+2", "points 8 0+1"};
    CHECK(recorder.events == want);
  }
}
