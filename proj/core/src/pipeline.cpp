#include "lodstream/pipeline.hpp"

#include <chrono>

namespace lodstream {

BuildResult build_tree(std::shared_ptr<const PointFile> file, const BuildOptions& options,
                       const std::string& input_name, UpdateListener* listener) {
  const auto started = std::chrono::steady_clock::now();
  BuildResult result;
  RunReport& report = result.report;
  report.input = input_name;
  report.points = file->point_count();
  report.file_bytes = file->file_bytes();
  report.leaf_threshold = options.tree.leaf_threshold;
  report.chunk_capacity = options.tree.chunk_capacity;
  report.grid_resolution = options.tree.grid_resolution;
  report.batch_size = options.reader.batch_size;
  report.budget_ms = options.update.budget_ms;
  report.deterministic = options.update.deterministic;

  CubeBounds bounds;
  if (options.bounds) {
    bounds = *options.bounds;
  } else if (file->point_count() > 0) {
    bounds = discover_bounds(*file);
  }
  result.tree = std::make_unique<Octree>(bounds, options.tree);

  ReaderOptions reader_options = options.reader;
  if (!reader_options.clamp_to) {
    reader_options.clamp_to = bounds;
  }
  Updater updater(*result.tree, options.update);
  updater.set_listener(listener);
  BatchQueue queue(options.queue_capacity);
  {
    BatchReader reader(file, queue, reader_options);
    while (true) {
      queue.wait_for_data(std::chrono::milliseconds(50));
      if (queue.drained()) {
        break;
      }
      BudgetClock clock(options.update.budget_ms);
      updater.run_frame_updates(queue, clock);
    }
    reader.join();
    reader.rethrow_if_failed();
    report.rejected = reader.rejected();
  }

  report.update = updater.totals();
  report.update_seconds = report.update.update_ms / 1e3;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  finish_report(report, *result.tree);
  return result;
}

}  // namespace lodstream
