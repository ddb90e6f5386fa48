#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lodstream/octree.hpp"
#include "lodstream/update.hpp"

namespace lodstream {

// Counts gathered by walking the tree, independent of the updater's tallies.
struct TreeStats {
  std::size_t nodes = 0;
  std::size_t leaves = 0;
  std::size_t inner = 0;
  std::uint32_t depth = 0;
  std::uint64_t points = 0;
  std::uint64_t voxels = 0;
  std::uint64_t chunks = 0;
  // Live chunks times bytes per chunk.
  std::uint64_t chunk_bytes = 0;
  std::uint64_t grid_bytes = 0;
};

TreeStats collect_tree_stats(const Octree& tree);

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

// Conservation checks on a finished tree: counts match the totals, chunk
// lists match their node counts, grids match voxel counts and the pool
// ledger balances.
std::vector<Check> verify_tree(const Octree& tree, const UpdateStats& totals);

struct RunReport {
  std::string input;
  std::uint64_t points = 0;
  std::uint64_t file_bytes = 0;
  std::uint64_t rejected = 0;

  std::uint32_t leaf_threshold = 0;
  std::uint32_t chunk_capacity = 0;
  std::uint32_t grid_resolution = 0;
  std::size_t batch_size = 0;
  double budget_ms = 0.0;
  bool deterministic = true;

  UpdateStats update;
  double update_seconds = 0.0;
  // Load plus insertion, measured on the same clock as update_seconds.
  double wall_seconds = 0.0;

  TreeStats tree;
  std::uint64_t chunks_allocated = 0;
  std::uint64_t chunks_free = 0;
  std::uint64_t arena_high_water = 0;

  std::vector<Check> checks;

  double update_mps() const { return update_seconds > 0.0 ? points / update_seconds / 1e6 : 0.0; }
  double total_mps() const { return wall_seconds > 0.0 ? points / wall_seconds / 1e6 : 0.0; }
  double total_gbps() const { return wall_seconds > 0.0 ? file_bytes / wall_seconds / 1e9 : 0.0; }
  bool checks_passed() const;
};

// Fills the tree, pool and check sections from a finished build.
void finish_report(RunReport& report, const Octree& tree);

std::string to_json(const RunReport& report, int indent = 2);
std::string to_text(const RunReport& report);

}  // namespace lodstream
