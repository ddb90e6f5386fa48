#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "lodstream/io.hpp"
#include "lodstream/octree.hpp"
#include "lodstream/report.hpp"
#include "lodstream/update.hpp"

namespace lodstream {

struct BuildOptions {
  OctreeConfig tree;
  UpdateConfig update;
  ReaderOptions reader;
  std::size_t queue_capacity = 8;
  // Root cube; discovered from the file when unset.
  std::optional<CubeBounds> bounds;
};

struct BuildResult {
  std::unique_ptr<Octree> tree;
  RunReport report;
};

// Frame loop without rendering: background readers fill the batch queue and
// each frame inserts batches until the update budget is spent.
BuildResult build_tree(std::shared_ptr<const PointFile> file, const BuildOptions& options,
                       const std::string& input_name = {}, UpdateListener* listener = nullptr);

}  // namespace lodstream
