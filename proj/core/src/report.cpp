#include "lodstream/report.hpp"

#include <algorithm>
#include <cstdio>
#include "json.hpp"
#include <sstream>

namespace lodstream {

TreeStats collect_tree_stats(const Octree& tree) {
  TreeStats s;
  const Node* root = tree.root();
  if (root == nullptr) {
    return s;
  }
  const std::size_t chunk_bytes = tree.pool().chunk_bytes();
  std::vector<const Node*> stack{root};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    ++s.nodes;
    s.depth = std::max(s.depth, n->level);
    for (const Chunk* c = n->chunk_head; c != nullptr; c = c->next) {
      ++s.chunks;
      s.chunk_bytes += chunk_bytes;
    }
    if (n->is_leaf()) {
      ++s.leaves;
      s.points += n->count;
    } else {
      ++s.inner;
      s.voxels += n->count;
      s.grid_bytes += OccupancyGrid::storage_bytes(n->grid.resolution());
      for (const Node* child : n->children) {
        stack.push_back(child);
      }
    }
  }
  return s;
}

std::vector<Check> verify_tree(const Octree& tree, const UpdateStats& totals) {
  const TreeStats s = collect_tree_stats(tree);
  std::vector<Check> checks;
  auto add = [&](std::string name, bool ok, std::string detail) {
    checks.push_back({std::move(name), ok, std::move(detail)});
  };
  add("points_conserved", s.points == totals.points_inserted,
      std::to_string(s.points) + " in leaves, " + std::to_string(totals.points_inserted) + " inserted");
  add("voxels_conserved", s.voxels == totals.voxels_created,
      std::to_string(s.voxels) + " in inner nodes, " + std::to_string(totals.voxels_created) + " created");
  add("nodes_reachable", s.nodes == tree.node_count(),
      std::to_string(s.nodes) + " reachable, " + std::to_string(tree.node_count()) + " created");

  std::size_t bad_chunks = 0;
  std::size_t bad_grids = 0;
  const std::uint32_t capacity = tree.pool().chunk_capacity();
  for (std::uint32_t id = 0; id < tree.node_count(); ++id) {
    const Node& n = tree.node(id);
    std::uint32_t linked = 0;
    for (const Chunk* c = n.chunk_head; c != nullptr; c = c->next) {
      ++linked;
    }
    if (linked != n.chunk_count || linked != chunks_needed(n.count, capacity)) {
      ++bad_chunks;
    }
    if (n.is_inner() && n.grid.popcount() != n.count) {
      ++bad_grids;
    }
  }
  add("chunks_match_counts", bad_chunks == 0, std::to_string(bad_chunks) + " nodes with a wrong chunk count");
  add("grids_match_voxels", bad_grids == 0, std::to_string(bad_grids) + " grids disagree with voxel counts");

  const std::uint64_t allocated = tree.pool().allocated_total();
  const std::uint64_t free_chunks = tree.pool().free_count();
  add("pool_ledger", allocated == s.chunks + free_chunks,
      std::to_string(allocated) + " allocated, " + std::to_string(s.chunks) + " live, " +
          std::to_string(free_chunks) + " free");
  return checks;
}

bool RunReport::checks_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok; });
}

void finish_report(RunReport& report, const Octree& tree) {
  report.tree = collect_tree_stats(tree);
  report.chunks_allocated = tree.pool().allocated_total();
  report.chunks_free = tree.pool().free_count();
  report.arena_high_water = tree.arena().high_water_mark();
  report.checks = verify_tree(tree, report.update);
}

std::string to_json(const RunReport& r, int indent) {
  nlohmann::ordered_json j;
  j["input"] = r.input;
  j["pointsInserted"] = r.update.points_inserted;
  j["pointsRead"] = r.points;
  j["pointsRejected"] = r.rejected;
  j["fileBytes"] = r.file_bytes;
  j["config"] = {
      {"leafThreshold", r.leaf_threshold}, {"chunkCapacity", r.chunk_capacity},
      {"gridResolution", r.grid_resolution}, {"batchSize", r.batch_size},
      {"budgetMs", r.budget_ms}, {"deterministic", r.deterministic},
  };
  j["update"] = {
      {"batches", r.update.batches},
      {"frames", r.update.frames},
      {"avgFrameMs", r.update.avg_frame_ms()},
      {"maxFrameMs", r.update.max_frame_ms},
      {"seconds", r.update_seconds},
      {"throughputMps", r.update_mps()},
      {"maxExpansionIterations", r.update.max_expansion_iterations},
      {"pointsSpilled", r.update.points_spilled},
  };
  j["total"] = {
      {"seconds", r.wall_seconds},
      {"throughputMps", r.total_mps()},
      {"throughputGBps", r.total_gbps()},
  };
  j["tree"] = {
      {"nodes", r.tree.nodes},         {"leaves", r.tree.leaves},
      {"inner", r.tree.inner},         {"depth", r.tree.depth},
      {"points", r.tree.points},       {"voxels", r.tree.voxels},
      {"chunks", r.tree.chunks},       {"chunkBytes", r.tree.chunk_bytes},
      {"gridBytes", r.tree.grid_bytes},
  };
  j["memory"] = {
      {"chunksAllocated", r.chunks_allocated},
      {"chunksFree", r.chunks_free},
      {"arenaHighWater", r.arena_high_water},
      {"backlogHighWater", r.update.backlog_high_water},
  };
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const Check& c : r.checks) {
    checks.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
  }
  j["checks"] = checks;
  j["checksPassed"] = r.checks_passed();
  return j.dump(indent);
}

std::string to_text(const RunReport& r) {
  std::ostringstream out;
  char line[256];
  auto emit = [&](const char* fmt, auto... args) {
    std::snprintf(line, sizeof line, fmt, args...);
    out << line << '\n';
  };
  emit("input            %s", r.input.c_str());
  emit("points           %llu inserted, %llu rejected", static_cast<unsigned long long>(r.update.points_inserted),
       static_cast<unsigned long long>(r.rejected));
  emit("updates          %llu batches over %llu frames, avg %.3f ms, max %.3f ms",
       static_cast<unsigned long long>(r.update.batches), static_cast<unsigned long long>(r.update.frames),
       r.update.avg_frame_ms(), r.update.max_frame_ms);
  emit("update only      %.3f s, %.2f MP/s", r.update_seconds, r.update_mps());
  emit("total            %.3f s, %.2f MP/s, %.3f GB/s", r.wall_seconds, r.total_mps(), r.total_gbps());
  emit("nodes            %zu (%zu leaves, %zu inner, depth %u)", r.tree.nodes, r.tree.leaves, r.tree.inner,
       r.tree.depth);
  emit("voxels           %llu", static_cast<unsigned long long>(r.tree.voxels));
  emit("chunks           %llu live, %llu free, %.1f MB", static_cast<unsigned long long>(r.tree.chunks),
       static_cast<unsigned long long>(r.chunks_free), r.tree.chunk_bytes / 1e6);
  emit("arena high water %.1f MB", r.arena_high_water / 1e6);
  emit("backlog peak     %zu", r.update.backlog_high_water);
  for (const Check& c : r.checks) {
    emit("check %-20s %s (%s)", c.name.c_str(), c.ok ? "ok" : "FAILED", c.detail.c_str());
  }
  return out.str();
}

}  // namespace lodstream
