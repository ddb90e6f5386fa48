#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lodstream/io.hpp"
#include "lodstream/octree.hpp"
#include "lodstream/protocol.hpp"
#include "lodstream/update.hpp"

namespace lodstream {

using EncodedMessage = std::shared_ptr<const std::vector<std::uint8_t>>;

/// Append-only log of encoded messages. One writer, any number of readers at
/// independent cursors; appends never wait for readers.
class EventLog {
 public:
  std::size_t append(const StreamMessage& message);
  // No further appends; readers at the end see the log as complete.
  void close();

  bool closed() const;
  std::size_t size() const;
  std::uint64_t bytes() const;

  // Messages [cursor, cursor + max). Waits up to `wait` when the cursor is at
  // the end of an open log.
  std::vector<EncodedMessage> read_from(std::size_t cursor, std::size_t max, std::chrono::milliseconds wait) const;
  std::vector<EncodedMessage> snapshot() const;

 private:
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::vector<EncodedMessage> messages_;
  std::uint64_t bytes_ = 0;
  bool closed_ = false;
};

inline constexpr std::size_t kMaxRecordsPerMessage = 65'536;

// Turns updater callbacks into protocol messages.
class EventEmitter final : public UpdateListener {
 public:
  explicit EventEmitter(EventLog& log) : log_(log) {}

  void on_node_created(const Node& node) override;
  void on_node_split(const Node& node) override;
  void on_points_stored(const Node& leaf, std::uint32_t first_slot, std::uint32_t count) override;
  void on_voxels_stored(const Node& node, std::span<const VoxelEntry> entries) override;

 private:
  EventLog& log_;
};

struct StreamConfig {
  OctreeConfig tree;
  UpdateConfig update;
  ReaderOptions reader;
  std::size_t queue_capacity = 8;
  // Root cube; discovered from the file when unset.
  std::optional<CubeBounds> bounds;
};

/// Ingest and update loop that publishes every structural change to a log:
/// Hello, then per frame the node, point and voxel events followed by a
/// StatsTick, and finally EndOfStream. A failure ends the log with an Error
/// message instead.
class StreamProducer {
 public:
  StreamProducer(std::shared_ptr<const PointFile> file, const StreamConfig& config, EventLog& log);

  void run(const std::atomic<bool>* cancel = nullptr);

  const Octree& tree() const { return *tree_; }
  const UpdateStats& totals() const { return totals_; }
  const std::optional<std::string>& error() const { return error_; }
  double wall_seconds() const { return wall_seconds_; }
  std::uint64_t rejected() const { return rejected_; }

 private:
  std::shared_ptr<const PointFile> file_;
  StreamConfig config_;
  EventLog& log_;
  std::unique_ptr<Octree> tree_;
  UpdateStats totals_;
  std::optional<std::string> error_;
  double wall_seconds_ = 0.0;
  std::uint64_t rejected_ = 0;
};

/// WebSocket endpoint: every client receives the whole log from the start,
/// one binary frame per message, then a normal close once the log is closed.
class WsServer {
 public:
  // Binds immediately; port 0 picks a free port. Throws Error{BindError}.
  WsServer(const EventLog& log, const std::string& host, std::uint16_t port);
  ~WsServer();

  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  std::uint16_t port() const;
  void start();
  void stop();

  std::size_t active_sessions() const;
  std::size_t total_sessions() const;

  // Blocks until the log is closed, at least one client has connected and
  // every connected client has been sent the complete log.
  void wait_until_drained(const std::atomic<bool>* cancel = nullptr);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Headless client: connects, collects binary frames until the server closes.
std::vector<std::vector<std::uint8_t>> fetch_ws_log(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout = std::chrono::seconds(30));

}  // namespace lodstream
