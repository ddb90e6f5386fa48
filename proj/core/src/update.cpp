#include "lodstream/update.hpp"

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <atomic>
#include <cassert>
#include <mutex>
#include <string>
#include <unordered_set>

#include "lodstream/error.hpp"

namespace lodstream {

namespace {

// Below this many work items a pass runs inline on the calling thread.
constexpr std::size_t kParallelGrain = 4096;

bool by_id(const Node* a, const Node* b) { return a->id < b->id; }

}  // namespace

void VoxelBacklog::push_back(const VoxelEntry& entry) {
  if (entries_.size() >= capacity_) {
    throw Error(ErrorCode::BacklogOverflow, "voxel backlog is full at " + std::to_string(capacity_) +
                                               " entries; raise the backlog capacity (--backlog)");
  }
  entries_.push_back(entry);
  high_water_ = std::max(high_water_, entries_.size());
}

UpdateStats& UpdateStats::operator+=(const UpdateStats& other) {
  batches += other.batches;
  frames += other.frames;
  points_inserted += other.points_inserted;
  voxels_created += other.voxels_created;
  nodes_created += other.nodes_created;
  nodes_split += other.nodes_split;
  points_spilled += other.points_spilled;
  update_ms += other.update_ms;
  frame_ms += other.frame_ms;
  max_frame_ms = std::max(max_frame_ms, other.max_frame_ms);
  backlog_high_water = std::max(backlog_high_water, other.backlog_high_water);
  max_expansion_iterations = std::max(max_expansion_iterations, other.max_expansion_iterations);
  return *this;
}

struct Updater::Impl {
  explicit Impl(int threads)
      : arena(threads > 0 ? threads : tbb::task_arena::automatic),
        concurrency(static_cast<std::size_t>(threads > 0 ? threads : tbb::this_task_arena::max_concurrency())) {}

  std::size_t range_count(std::size_t n) const {
    if (n < kParallelGrain || concurrency <= 1) {
      return 1;
    }
    return std::min((n + kParallelGrain - 1) / kParallelGrain, concurrency * 4);
  }

  // fn(range, begin, end) over `ranges` contiguous slices of [0, n).
  template <class Fn>
  void for_ranges(std::size_t n, std::size_t ranges, Fn&& fn) {
    if (ranges <= 1) {
      fn(std::size_t{0}, std::size_t{0}, n);
      return;
    }
    arena.execute([&] {
      tbb::parallel_for(std::size_t{0}, ranges, [&](std::size_t r) { fn(r, n * r / ranges, n * (r + 1) / ranges); });
    });
  }

  tbb::task_arena arena;
  std::size_t concurrency;

  std::mutex counted_mutex;
  std::vector<Node*> counted;       // leaves counted in the current iteration
  std::vector<Node*> final_leaves;  // leaves receiving points this cycle
  std::vector<Node*> voxel_nodes;   // inner nodes receiving voxels this cycle
  std::vector<Node*> touched;       // final_leaves ++ voxel_nodes, slot = index

  // Chunk segment per touched node, starting at the chunk holding slot `count`.
  std::vector<Chunk*> chunk_table;
  std::vector<std::size_t> table_offset;
  std::vector<std::uint32_t> first_chunk;
  std::vector<std::uint32_t> stored_before;

  std::vector<std::uint32_t> targets;
  std::vector<std::uint32_t> range_counts;
  std::vector<std::vector<VoxelEntry>> candidates;

  std::vector<VoxelEntry> voxel_events;
  std::vector<std::size_t> voxel_event_offset;
};

Updater::Updater(Octree& tree, const UpdateConfig& config)
    : tree_(tree),
      config_(config),
      spill_(config.spill_capacity),
      backlog_(config.backlog_capacity),
      impl_(std::make_unique<Impl>(config.threads)) {}

Updater::~Updater() = default;

void Updater::begin_cycle(std::span<const Point> batch) {
  assert(spill_.empty() && backlog_.empty());
  batch_ = batch;
  cycle_ = UpdateStats{};
  if (!batch.empty() && tree_.root() == nullptr) {
    Node& root = tree_.ensure_root();
    ++cycle_.nodes_created;
    if (listener_ != nullptr) {
      listener_->on_node_created(root);
    }
  }
}

void Updater::count_pass() {
  Impl& im = *impl_;
  const std::size_t n = work_size();
  im.for_ranges(n, im.range_count(n), [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<Node*> first_touch;
    for (std::size_t i = begin; i < end; ++i) {
      Node* leaf = tree_.leaf_for(work_point(i));
      if (leaf->final_flag) {
        continue;
      }
      if (std::atomic_ref<std::uint32_t>(leaf->pending).fetch_add(1, std::memory_order_relaxed) == 0) {
        first_touch.push_back(leaf);
      }
    }
    if (!first_touch.empty()) {
      std::lock_guard lock(im.counted_mutex);
      im.counted.insert(im.counted.end(), first_touch.begin(), first_touch.end());
    }
  });
}

std::uint32_t Updater::split_pass() {
  Impl& im = *impl_;
  std::sort(im.counted.begin(), im.counted.end(), by_id);
  const std::uint32_t threshold = tree_.config().leaf_threshold;
  std::uint32_t splits = 0;
  for (Node* leaf : im.counted) {
    const std::uint64_t prospective = std::uint64_t{leaf->count} + leaf->pending;
    const std::uint32_t stored = leaf->count;
    if (prospective > threshold && tree_.split(*leaf, spill_)) {
      ++splits;
      ++cycle_.nodes_split;
      cycle_.nodes_created += 8;
      cycle_.points_spilled += stored;
      if (listener_ != nullptr) {
        listener_->on_node_split(*leaf);
        for (const Node* child : leaf->children) {
          listener_->on_node_created(*child);
        }
      }
    } else {
      leaf->final_flag = true;
      im.final_leaves.push_back(leaf);
    }
  }
  im.counted.clear();
  return splits;
}

std::uint32_t Updater::expand() {
  std::uint32_t iterations = 0;
  if (tree_.root() == nullptr) {
    return iterations;
  }
  for (;;) {
    ++iterations;
    count_pass();
    if (split_pass() == 0) {
      break;
    }
  }
  cycle_.max_expansion_iterations = std::max(cycle_.max_expansion_iterations, iterations);
  return iterations;
}

std::size_t Updater::sample_voxels() {
  Impl& im = *impl_;
  const Node* root = tree_.root();
  const std::size_t n = work_size();
  if (root == nullptr || root->is_leaf() || n == 0) {
    return 0;
  }
  const std::uint32_t g = tree_.config().grid_resolution;

  auto claim = [&](const VoxelEntry& entry) {
    backlog_.push_back(entry);
    if (entry.node->pending++ == 0) {
      im.voxel_nodes.push_back(entry.node);
    }
  };

  const std::size_t ranges = im.range_count(n);
  if (ranges == 1) {
    // Sequential replay: first-come is lowest index.
    for (std::size_t i = 0; i < n; ++i) {
      const Point& p = work_point(i);
      for (Node* node = tree_.root(); node->is_inner(); node = node->children[octant_of(p, node->center)]) {
        const std::uint32_t cell = cell_of(p, node->bounds, g);
        if (node->grid.test_and_set(cell) == CellProbe::WasEmpty) {
          claim({node, cell, p.rgba()});
        }
      }
    }
  } else if (config_.deterministic) {
    // Each range proposes the first unclaimed hit per (node, cell); merging the
    // proposals in range order makes the lowest index win.
    im.candidates.resize(ranges);
    im.for_ranges(n, ranges, [&](std::size_t r, std::size_t begin, std::size_t end) {
      std::vector<VoxelEntry>& out = im.candidates[r];
      out.clear();
      std::unordered_set<std::uint64_t> seen;
      for (std::size_t i = begin; i < end; ++i) {
        const Point& p = work_point(i);
        for (Node* node = tree_.root(); node->is_inner(); node = node->children[octant_of(p, node->center)]) {
          const std::uint32_t cell = cell_of(p, node->bounds, g);
          if (node->grid.test(cell)) {
            continue;
          }
          if (seen.insert((std::uint64_t{node->id} << 32) | cell).second) {
            out.push_back({node, cell, p.rgba()});
          }
        }
      }
    });
    for (std::size_t r = 0; r < ranges; ++r) {
      for (const VoxelEntry& entry : im.candidates[r]) {
        if (entry.node->grid.test_and_set(entry.cell) == CellProbe::WasEmpty) {
          claim(entry);
        }
      }
    }
  } else {
    im.candidates.resize(ranges);
    im.for_ranges(n, ranges, [&](std::size_t r, std::size_t begin, std::size_t end) {
      std::vector<VoxelEntry>& out = im.candidates[r];
      out.clear();
      for (std::size_t i = begin; i < end; ++i) {
        const Point& p = work_point(i);
        for (Node* node = tree_.root(); node->is_inner(); node = node->children[octant_of(p, node->center)]) {
          const std::uint32_t cell = cell_of(p, node->bounds, g);
          if (node->grid.test_and_set(cell) == CellProbe::WasEmpty) {
            out.push_back({node, cell, p.rgba()});
          }
        }
      }
    });
    for (std::size_t r = 0; r < ranges; ++r) {
      for (const VoxelEntry& entry : im.candidates[r]) {
        claim(entry);
      }
    }
  }
  cycle_.voxels_created += backlog_.size();
  cycle_.backlog_high_water = std::max(cycle_.backlog_high_water, backlog_.size());
  return backlog_.size();
}

void Updater::allocate_chunks() {
  Impl& im = *impl_;
  std::sort(im.final_leaves.begin(), im.final_leaves.end(), by_id);
  std::sort(im.voxel_nodes.begin(), im.voxel_nodes.end(), by_id);
  im.touched.clear();
  im.touched.insert(im.touched.end(), im.final_leaves.begin(), im.final_leaves.end());
  im.touched.insert(im.touched.end(), im.voxel_nodes.begin(), im.voxel_nodes.end());

  const std::uint32_t c = tree_.config().chunk_capacity;
  im.chunk_table.clear();
  im.table_offset.assign(im.touched.size(), 0);
  im.first_chunk.assign(im.touched.size(), 0);
  im.stored_before.assign(im.touched.size(), 0);
  for (std::size_t k = 0; k < im.touched.size(); ++k) {
    Node* node = im.touched[k];
    node->slot = static_cast<std::uint32_t>(k);
    tree_.reserve_samples(*node, node->count + node->pending);

    im.stored_before[k] = node->count;
    im.first_chunk[k] = node->count / c;
    im.table_offset[k] = im.chunk_table.size();
    Chunk* chunk = node->chunk_head;
    for (std::uint32_t skip = 0; skip < im.first_chunk[k]; ++skip) {
      chunk = chunk->next;
    }
    for (; chunk != nullptr; chunk = chunk->next) {
      im.chunk_table.push_back(chunk);
    }
  }
}

void Updater::store_all() {
  Impl& im = *impl_;
  const std::uint32_t c = tree_.config().chunk_capacity;
  const std::uint32_t g = tree_.config().grid_resolution;
  const std::size_t touched = im.touched.size();

  auto slot_ref = [&](std::uint32_t k, std::uint32_t slot) -> Point& {
    Chunk* chunk = im.chunk_table[im.table_offset[k] + (slot / c - im.first_chunk[k])];
    return chunk->slots()[slot % c];
  };

  // Assigns slots stored_before[k], stored_before[k] + 1, ... to the items of
  // each target k. Deterministic mode keeps item order within a target.
  auto scatter = [&](std::size_t n, auto&& write) {
    const std::size_t ranges = im.range_count(n);
    if (ranges == 1) {
      std::vector<std::uint32_t> cursor(im.stored_before);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t k = im.targets[i];
        write(i, k, cursor[k]++);
      }
      return;
    }
    if (!config_.deterministic) {
      std::vector<std::uint32_t> cursor(im.stored_before);
      im.for_ranges(n, ranges, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const std::uint32_t k = im.targets[i];
          write(i, k, std::atomic_ref<std::uint32_t>(cursor[k]).fetch_add(1, std::memory_order_relaxed));
        }
      });
      return;
    }
    im.range_counts.assign(ranges * touched, 0);
    im.for_ranges(n, ranges, [&](std::size_t r, std::size_t begin, std::size_t end) {
      std::uint32_t* counts = im.range_counts.data() + r * touched;
      for (std::size_t i = begin; i < end; ++i) {
        ++counts[im.targets[i]];
      }
    });
    for (std::size_t k = 0; k < touched; ++k) {
      std::uint32_t base = im.stored_before[k];
      for (std::size_t r = 0; r < ranges; ++r) {
        const std::uint32_t cnt = im.range_counts[r * touched + k];
        im.range_counts[r * touched + k] = base;
        base += cnt;
      }
    }
    im.for_ranges(n, ranges, [&](std::size_t r, std::size_t begin, std::size_t end) {
      std::uint32_t* cursor = im.range_counts.data() + r * touched;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t k = im.targets[i];
        write(i, k, cursor[k]++);
      }
    });
  };

  // Points into leaves.
  const std::size_t n = work_size();
  im.targets.resize(n);
  im.for_ranges(n, im.range_count(n), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Node* leaf = tree_.leaf_for(work_point(i));
      assert(leaf->slot != kNoNode && leaf->final_flag);
      im.targets[i] = leaf->slot;
    }
  });
  scatter(n, [&](std::size_t i, std::uint32_t k, std::uint32_t slot) { slot_ref(k, slot) = work_point(i); });

  // Backlog voxels into inner nodes.
  const std::span<const VoxelEntry> entries = backlog_.entries();
  im.targets.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    im.targets[i] = entries[i].node->slot;
  }
  if (listener_ != nullptr) {
    im.voxel_events.resize(entries.size());
    im.voxel_event_offset.assign(touched, 0);
    std::size_t offset = 0;
    for (std::size_t k = im.final_leaves.size(); k < touched; ++k) {
      im.voxel_event_offset[k] = offset;
      offset += im.touched[k]->pending;
    }
  }
  scatter(entries.size(), [&](std::size_t i, std::uint32_t k, std::uint32_t slot) {
    const VoxelEntry& entry = entries[i];
    slot_ref(k, slot) = make_voxel(entry.cell, entry.node->bounds, g, entry.rgba);
    if (listener_ != nullptr) {
      im.voxel_events[im.voxel_event_offset[k] + (slot - im.stored_before[k])] = entry;
    }
  });

  for (std::size_t k = 0; k < touched; ++k) {
    Node* node = im.touched[k];
    node->count += node->pending;
    std::uint32_t chunk_index = im.first_chunk[k];
    for (std::size_t t = im.table_offset[k]; t < (k + 1 < touched ? im.table_offset[k + 1] : im.chunk_table.size());
         ++t, ++chunk_index) {
      const std::uint64_t begin = std::uint64_t{chunk_index} * c;
      im.chunk_table[t]->occupied = static_cast<std::uint32_t>(std::min<std::uint64_t>(c, node->count - begin));
    }
  }

  if (listener_ != nullptr) {
    for (std::size_t k = im.final_leaves.size(); k < touched; ++k) {
      const Node* node = im.touched[k];
      listener_->on_voxels_stored(*node, std::span<const VoxelEntry>(im.voxel_events).subspan(
                                             im.voxel_event_offset[k], node->pending));
    }
    for (std::size_t k = 0; k < im.final_leaves.size(); ++k) {
      const Node* node = im.touched[k];
      listener_->on_points_stored(*node, im.stored_before[k], node->pending);
    }
  }
}

void Updater::end_cycle() {
  Impl& im = *impl_;
  for (std::vector<Node*>* list : {&im.counted, &im.final_leaves, &im.voxel_nodes}) {
    for (Node* node : *list) {
      node->pending = 0;
      node->final_flag = false;
      node->slot = kNoNode;
    }
    list->clear();
  }
  im.touched.clear();
  spill_.clear();
  backlog_.clear();
  batch_ = {};
}

UpdateStats Updater::insert_batch(const Batch& batch) { return insert_batch(std::span<const Point>(batch.points)); }

UpdateStats Updater::insert_batch(std::span<const Point> points) {
  const auto started = BudgetClock::clock::now();
  begin_cycle(points);
  if (!points.empty()) {
    expand();
    sample_voxels();
    allocate_chunks();
    store_all();
  }
  end_cycle();
  cycle_.batches = 1;
  cycle_.points_inserted = points.size();
  cycle_.update_ms = std::chrono::duration<double, std::milli>(BudgetClock::clock::now() - started).count();
  totals_ += cycle_;
  return cycle_;
}

UpdateStats Updater::run_frame_updates(BatchQueue& queue, BudgetClock& clock) {
  UpdateStats frame;
  clock.start();
  while (frame.batches == 0 || !clock.exhausted()) {
    std::optional<Batch> batch = queue.try_pop();
    if (!batch) {
      break;
    }
    const UpdateStats delta = insert_batch(*batch);
    frame.batches += delta.batches;
    frame.points_inserted += delta.points_inserted;
    frame.voxels_created += delta.voxels_created;
    frame.nodes_created += delta.nodes_created;
    frame.nodes_split += delta.nodes_split;
    frame.points_spilled += delta.points_spilled;
    frame.update_ms += delta.update_ms;
    frame.backlog_high_water = std::max(frame.backlog_high_water, delta.backlog_high_water);
    frame.max_expansion_iterations = std::max(frame.max_expansion_iterations, delta.max_expansion_iterations);
  }
  if (frame.batches > 0) {
    frame.frames = 1;
    frame.frame_ms = clock.elapsed_ms();
    frame.max_frame_ms = frame.frame_ms;
    totals_.frames += 1;
    totals_.frame_ms += frame.frame_ms;
    totals_.max_frame_ms = std::max(totals_.max_frame_ms, frame.frame_ms);
  }
  return frame;
}

}  // namespace lodstream
