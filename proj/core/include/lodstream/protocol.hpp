#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lodstream/octree.hpp"

namespace lodstream {

inline constexpr std::uint32_t kProtocolVersion = 1;

enum class MessageTag : std::uint8_t {
  Hello = 0,
  NodeCreated = 1,
  NodeSplit = 2,
  PointsAppended = 3,
  VoxelsAppended = 4,
  StatsTick = 5,
  EndOfStream = 6,
  Error = 7,
};

struct HelloMsg {
  std::uint32_t version = kProtocolVersion;
  CubeBounds bounds;
  std::uint32_t grid_resolution = kDefaultGridResolution;
  std::uint32_t leaf_threshold = kDefaultLeafThreshold;
  std::uint32_t chunk_capacity = kDefaultChunkCapacity;

  friend bool operator==(const HelloMsg&, const HelloMsg&) = default;
};

struct NodeCreatedMsg {
  std::uint32_t id = 0;
  std::uint32_t parent = kNoNode;
  std::uint8_t octant = 0;
  std::uint8_t level = 0;

  friend bool operator==(const NodeCreatedMsg&, const NodeCreatedMsg&) = default;
};

struct NodeSplitMsg {
  std::uint32_t id = 0;

  friend bool operator==(const NodeSplitMsg&, const NodeSplitMsg&) = default;
};

struct PointsAppendedMsg {
  std::uint32_t id = 0;
  std::vector<Point> points;

  friend bool operator==(const PointsAppendedMsg& a, const PointsAppendedMsg& b);
};

struct VoxelRecord {
  std::uint32_t cell = 0;
  std::uint32_t rgba = 0;

  friend bool operator==(const VoxelRecord&, const VoxelRecord&) = default;
};

struct VoxelsAppendedMsg {
  std::uint32_t id = 0;
  std::vector<VoxelRecord> voxels;

  friend bool operator==(const VoxelsAppendedMsg&, const VoxelsAppendedMsg&) = default;
};

struct StatsTickMsg {
  std::uint64_t frame = 0;
  std::uint64_t points = 0;
  std::uint64_t voxels = 0;
  std::uint32_t nodes = 0;
  double avg_update_ms = 0.0;
  double max_update_ms = 0.0;
  double throughput_mps = 0.0;

  friend bool operator==(const StatsTickMsg&, const StatsTickMsg&) = default;
};

struct EndOfStreamMsg {
  friend bool operator==(const EndOfStreamMsg&, const EndOfStreamMsg&) = default;
};

struct ErrorMsg {
  std::string message;

  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using StreamMessage = std::variant<HelloMsg, NodeCreatedMsg, NodeSplitMsg, PointsAppendedMsg, VoxelsAppendedMsg,
                                   StatsTickMsg, EndOfStreamMsg, ErrorMsg>;

MessageTag tag_of(const StreamMessage& message);
std::string_view tag_name(MessageTag tag);

// Wire layout: one tag byte followed by a little-endian body.
std::vector<std::uint8_t> encode(const StreamMessage& message);
void encode_into(const StreamMessage& message, std::vector<std::uint8_t>& out);
std::size_t encoded_size(const StreamMessage& message);

// Throws Error{MalformedMessage} on an unknown tag, a short body or trailing bytes.
StreamMessage decode(std::span<const std::uint8_t> bytes);

/// Client-side reconstruction of the server tree from the event log.
class MirrorTree {
 public:
  struct MirrorNode {
    std::uint32_t id = 0;
    std::uint32_t parent = kNoNode;
    std::uint8_t octant = 0;
    std::uint8_t level = 0;
    CubeBounds bounds;
    bool inner = false;
    std::vector<Point> points;
    std::vector<VoxelRecord> voxels;

    std::uint64_t count() const { return inner ? voxels.size() : points.size(); }
  };

  // Throws Error{MalformedMessage} on protocol violations such as messages
  // for unknown nodes or points appended to an inner node.
  void apply(const StreamMessage& message);
  void apply(std::span<const std::uint8_t> bytes) { apply(decode(bytes)); }

  bool has_hello() const { return hello_.has_value(); }
  const HelloMsg& hello() const;
  bool finished() const { return finished_; }
  const std::optional<std::string>& error() const { return error_; }
  const std::optional<StatsTickMsg>& last_stats() const { return stats_; }

  std::size_t node_count() const { return nodes_.size(); }
  const MirrorNode& node(std::uint32_t id) const { return nodes_.at(id); }
  std::span<const MirrorNode> nodes() const { return nodes_; }

  std::uint64_t point_count() const;
  std::uint64_t voxel_count() const;

  // Voxel positions rebuilt from cell indices.
  std::vector<Point> voxel_samples(std::uint32_t id) const;

 private:
  MirrorNode& require(std::uint32_t id);

  std::optional<HelloMsg> hello_;
  std::vector<MirrorNode> nodes_;
  std::optional<StatsTickMsg> stats_;
  std::optional<std::string> error_;
  bool finished_ = false;
};

// Empty when the mirror matches the tree: same node ids, parents, states and
// counts, identical leaf points in slot order, identical voxel cell sets and
// voxel samples in slot order.
std::vector<std::string> mirror_differences(const MirrorTree& mirror, const Octree& tree);

}  // namespace lodstream
