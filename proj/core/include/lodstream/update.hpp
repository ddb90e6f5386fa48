#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lodstream/batch_queue.hpp"
#include "lodstream/octree.hpp"

namespace lodstream {

inline constexpr std::size_t kDefaultBacklogCapacity = 10'000'000;
inline constexpr double kDefaultBudgetMs = 10.0;

struct UpdateConfig {
  double budget_ms = kDefaultBudgetMs;
  std::size_t backlog_capacity = kDefaultBacklogCapacity;
  std::size_t spill_capacity = 10'000'000;
  // Lowest ingestion index wins contested voxel cells and slots follow input
  // order. When false, cells and slots go to whichever thread gets there first.
  bool deterministic = true;
  // 0 picks the TBB default.
  int threads = 0;
};

// A voxel created during sampling, waiting for its node's chunks.
struct VoxelEntry {
  Node* node = nullptr;
  std::uint32_t cell = 0;
  std::uint32_t rgba = 0;
};

class VoxelBacklog {
 public:
  explicit VoxelBacklog(std::size_t capacity = kDefaultBacklogCapacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t high_water_mark() const { return high_water_; }
  std::span<const VoxelEntry> entries() const { return entries_; }

  // Throws Error{BacklogOverflow} at capacity.
  void push_back(const VoxelEntry& entry);
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::size_t high_water_ = 0;
  std::vector<VoxelEntry> entries_;
};

struct UpdateStats {
  std::uint64_t batches = 0;
  std::uint64_t frames = 0;
  std::uint64_t points_inserted = 0;
  std::uint64_t voxels_created = 0;
  std::uint64_t nodes_created = 0;
  std::uint64_t nodes_split = 0;
  std::uint64_t points_spilled = 0;
  // Sum of insert_batch durations.
  double update_ms = 0.0;
  // Sum and maximum of per-frame update durations.
  double frame_ms = 0.0;
  double max_frame_ms = 0.0;
  std::size_t backlog_high_water = 0;
  std::uint32_t max_expansion_iterations = 0;

  double avg_frame_ms() const { return frames == 0 ? 0.0 : frame_ms / static_cast<double>(frames); }
  // Million points per second over the summed update time.
  double throughput_mps() const {
    return update_ms > 0.0 ? static_cast<double>(points_inserted) / (update_ms * 1e3) : 0.0;
  }

  UpdateStats& operator+=(const UpdateStats& other);
};

class BudgetClock {
 public:
  using clock = std::chrono::steady_clock;

  explicit BudgetClock(double budget_ms = kDefaultBudgetMs) : budget_ms_(budget_ms) { start(); }

  void start() { started_ = clock::now(); }
  double budget_ms() const { return budget_ms_; }
  double elapsed_ms() const { return std::chrono::duration<double, std::milli>(clock::now() - started_).count(); }
  bool exhausted() const { return elapsed_ms() >= budget_ms_; }

 private:
  double budget_ms_;
  clock::time_point started_;
};

// Receives structural changes as insert_batch applies them. Callbacks run on
// the updating thread between passes, never concurrently.
class UpdateListener {
 public:
  virtual ~UpdateListener() = default;
  virtual void on_node_created(const Node& /*node*/) {}
  virtual void on_node_split(const Node& /*node*/) {}
  // Slots [first_slot, first_slot + count) of the leaf were just written.
  virtual void on_points_stored(const Node& /*leaf*/, std::uint32_t /*first_slot*/, std::uint32_t /*count*/) {}
  // Entries appear in slot order.
  virtual void on_voxels_stored(const Node& /*node*/, std::span<const VoxelEntry> /*entries*/) {}
};

/// Incremental insertion pipeline.
///
/// Each batch runs one cycle of passes separated by full barriers:
///   expand          count_pass + split_pass until no leaf splits
///   sample_voxels   first-come voxel sampling into the backlog
///   allocate_chunks link enough chunks for stored + pending samples
///   store_all       write points into leaves and backlog voxels into inner nodes
/// The passes are public so tests can step through a cycle; insert_batch is
/// the normal entry point.
class Updater {
 public:
  explicit Updater(Octree& tree, const UpdateConfig& config = {});
  ~Updater();

  Updater(const Updater&) = delete;
  Updater& operator=(const Updater&) = delete;

  UpdateStats insert_batch(const Batch& batch);
  UpdateStats insert_batch(std::span<const Point> points);

  // Inserts queued batches until the clock's budget is spent. At least one
  // batch is processed when the queue is non-empty.
  UpdateStats run_frame_updates(BatchQueue& queue, BudgetClock& clock);

  void set_listener(UpdateListener* listener) { listener_ = listener; }

  // Step-wise cycle. begin_cycle requires empty spill/backlog.
  void begin_cycle(std::span<const Point> batch);
  void count_pass();
  std::uint32_t split_pass();
  // Returns the number of count/split iterations.
  std::uint32_t expand();
  std::size_t sample_voxels();
  void allocate_chunks();
  void store_all();
  void end_cycle();

  Octree& tree() { return tree_; }
  const UpdateConfig& config() const { return config_; }
  const SpillBuffer& spill() const { return spill_; }
  const VoxelBacklog& backlog() const { return backlog_; }
  const UpdateStats& totals() const { return totals_; }

 private:
  struct Impl;

  std::size_t work_size() const { return spill_.size() + batch_.size(); }
  const Point& work_point(std::size_t i) const {
    return i < spill_.size() ? spill_.points()[i] : batch_[i - spill_.size()];
  }

  Octree& tree_;
  UpdateConfig config_;
  SpillBuffer spill_;
  VoxelBacklog backlog_;
  UpdateListener* listener_ = nullptr;
  UpdateStats totals_;
  UpdateStats cycle_;
  std::span<const Point> batch_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lodstream
