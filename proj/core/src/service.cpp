#include <algorithm>

#include "lodstream/error.hpp"
#include "lodstream/service.hpp"

namespace lodstream {

std::size_t EventLog::append(const StreamMessage& message) {
  auto encoded = std::make_shared<const std::vector<std::uint8_t>>(encode(message));
  std::lock_guard lock(mutex_);
  if (closed_) {
    throw Error(ErrorCode::InvalidArgument, "append to a closed event log");
  }
  bytes_ += encoded->size();
  messages_.push_back(std::move(encoded));
  changed_.notify_all();
  return messages_.size() - 1;
}

void EventLog::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  changed_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mutex_);
  return messages_.size();
}

std::uint64_t EventLog::bytes() const {
  std::lock_guard lock(mutex_);
  return bytes_;
}

std::vector<EncodedMessage> EventLog::read_from(std::size_t cursor, std::size_t max,
                                                std::chrono::milliseconds wait) const {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, wait, [&] { return closed_ || messages_.size() > cursor; });
  if (cursor >= messages_.size()) {
    return {};
  }
  const std::size_t end = std::min(messages_.size(), cursor + max);
  return {messages_.begin() + static_cast<std::ptrdiff_t>(cursor), messages_.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<EncodedMessage> EventLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return messages_;
}

void EventEmitter::on_node_created(const Node& node) {
  log_.append(NodeCreatedMsg{node.id, node.parent == nullptr ? kNoNode : node.parent->id, node.octant,
                             static_cast<std::uint8_t>(node.level)});
}

void EventEmitter::on_node_split(const Node& node) { log_.append(NodeSplitMsg{node.id}); }

void EventEmitter::on_points_stored(const Node& leaf, std::uint32_t first_slot, std::uint32_t count) {
  const Chunk* chunk = leaf.chunk_head;
  std::uint32_t skip = first_slot;
  while (chunk != nullptr && skip >= chunk->capacity) {
    skip -= chunk->capacity;
    chunk = chunk->next;
  }
  PointsAppendedMsg message{leaf.id, {}};
  message.points.reserve(std::min<std::size_t>(count, kMaxRecordsPerMessage));
  std::uint32_t remaining = count;
  while (chunk != nullptr && remaining > 0) {
    const std::uint32_t n = std::min(remaining, chunk->capacity - skip);
    for (const Point& p : chunk->slots().subspan(skip, n)) {
      message.points.push_back(p);
      if (message.points.size() == kMaxRecordsPerMessage) {
        log_.append(message);
        message.points.clear();
      }
    }
    remaining -= n;
    skip = 0;
    chunk = chunk->next;
  }
  if (!message.points.empty()) {
    log_.append(message);
  }
}

void EventEmitter::on_voxels_stored(const Node& node, std::span<const VoxelEntry> entries) {
  for (std::size_t first = 0; first < entries.size(); first += kMaxRecordsPerMessage) {
    VoxelsAppendedMsg message{node.id, {}};
    const std::size_t n = std::min(kMaxRecordsPerMessage, entries.size() - first);
    message.voxels.reserve(n);
    for (const VoxelEntry& e : entries.subspan(first, n)) {
      message.voxels.push_back({e.cell, e.rgba});
    }
    log_.append(message);
  }
}

StreamProducer::StreamProducer(std::shared_ptr<const PointFile> file, const StreamConfig& config, EventLog& log)
    : file_(std::move(file)), config_(config), log_(log) {
  const auto started = std::chrono::steady_clock::now();
  CubeBounds bounds;
  if (config_.bounds) {
    bounds = *config_.bounds;
  } else if (file_->point_count() > 0) {
    bounds = discover_bounds(*file_);
  }
  if (!config_.reader.clamp_to) {
    config_.reader.clamp_to = bounds;
  }
  tree_ = std::make_unique<Octree>(bounds, config_.tree);
  wall_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

void StreamProducer::run(const std::atomic<bool>* cancel) {
  const auto started = std::chrono::steady_clock::now();
  log_.append(HelloMsg{kProtocolVersion, tree_->bounds(), config_.tree.grid_resolution, config_.tree.leaf_threshold,
                       config_.tree.chunk_capacity});
  EventEmitter emitter(log_);
  Updater updater(*tree_, config_.update);
  updater.set_listener(&emitter);
  BatchQueue queue(config_.queue_capacity);
  std::optional<BatchReader> reader;
  try {
    reader.emplace(file_, queue, config_.reader);
    std::uint64_t frame = 0;
    while (true) {
      if (cancel != nullptr && cancel->load()) {
        reader->stop();
        throw Error(ErrorCode::IoError, "stream cancelled");
      }
      queue.wait_for_data(std::chrono::milliseconds(50));
      if (queue.drained()) {
        break;
      }
      BudgetClock clock(config_.update.budget_ms);
      const UpdateStats step = updater.run_frame_updates(queue, clock);
      if (step.batches == 0) {
        continue;
      }
      const UpdateStats& t = updater.totals();
      log_.append(StatsTickMsg{++frame, t.points_inserted, t.voxels_created, static_cast<std::uint32_t>(tree_->node_count()),
                               t.avg_frame_ms(), t.max_frame_ms, t.throughput_mps()});
    }
    reader->join();
    reader->rethrow_if_failed();
    rejected_ = reader->rejected();
    log_.append(EndOfStreamMsg{});
  } catch (const std::exception& e) {
    if (reader) {
      reader->stop();
      queue.close();
      reader->join();
    }
    error_ = e.what();
    log_.append(ErrorMsg{e.what()});
  }
  totals_ = updater.totals();
  wall_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log_.close();
}

}  // namespace lodstream
