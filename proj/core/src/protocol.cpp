#include "lodstream/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>

#include "lodstream/error.hpp"

namespace lodstream {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void point(const Point& p) {
    f32(p.x);
    f32(p.y);
    f32(p.z);
    u32(p.rgba());
  }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, MessageTag tag) : bytes_(bytes), tag_(tag) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t{b[i]} << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t{b[i]} << (8 * i);
    }
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Point point() {
    Point p;
    p.x = f32();
    p.y = f32();
    p.z = f32();
    p.set_rgba(u32());
    return p;
  }
  std::string string(std::size_t n) {
    const auto b = take(n);
    return {b.begin(), b.end()};
  }

  // Rejects counts that cannot fit in the remaining bytes before allocating.
  void expect_records(std::uint64_t count, std::size_t record_bytes) const {
    if (count > remaining() / record_bytes) {
      fail("count exceeds body length");
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void finish() const {
    if (remaining() != 0) {
      fail(std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) {
      fail("truncated body");
    }
    const auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::MalformedMessage, std::string(tag_name(tag_)) + ": " + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  MessageTag tag_;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

bool operator==(const PointsAppendedMsg& a, const PointsAppendedMsg& b) {
  return a.id == b.id && a.points.size() == b.points.size() &&
         std::equal(a.points.begin(), a.points.end(), b.points.begin(), same_bits);
}

MessageTag tag_of(const StreamMessage& message) { return static_cast<MessageTag>(message.index()); }

std::string_view tag_name(MessageTag tag) {
  switch (tag) {
    case MessageTag::Hello: return "Hello";
    case MessageTag::NodeCreated: return "NodeCreated";
    case MessageTag::NodeSplit: return "NodeSplit";
    case MessageTag::PointsAppended: return "PointsAppended";
    case MessageTag::VoxelsAppended: return "VoxelsAppended";
    case MessageTag::StatsTick: return "StatsTick";
    case MessageTag::EndOfStream: return "EndOfStream";
    case MessageTag::Error: return "Error";
  }
  return "Unknown";
}

std::size_t encoded_size(const StreamMessage& message) {
  return 1 + std::visit(Overloaded{
                            [](const HelloMsg&) -> std::size_t { return 4 + 4 * 8 + 3 * 4; },
                            [](const NodeCreatedMsg&) -> std::size_t { return 4 + 4 + 1 + 1; },
                            [](const NodeSplitMsg&) -> std::size_t { return 4; },
                            [](const PointsAppendedMsg& m) -> std::size_t { return 8 + 16 * m.points.size(); },
                            [](const VoxelsAppendedMsg& m) -> std::size_t { return 8 + 8 * m.voxels.size(); },
                            [](const StatsTickMsg&) -> std::size_t { return 3 * 8 + 4 + 3 * 8; },
                            [](const EndOfStreamMsg&) -> std::size_t { return 0; },
                            [](const ErrorMsg& m) -> std::size_t { return 4 + m.message.size(); },
                        },
                        message);
}

void encode_into(const StreamMessage& message, std::vector<std::uint8_t>& out) {
  out.reserve(out.size() + encoded_size(message));
  Writer w(out);
  w.u8(static_cast<std::uint8_t>(tag_of(message)));
  std::visit(Overloaded{
                 [&](const HelloMsg& m) {
                   w.u32(m.version);
                   for (double v : m.bounds.min) {
                     w.f64(v);
                   }
                   w.f64(m.bounds.size);
                   w.u32(m.grid_resolution);
                   w.u32(m.leaf_threshold);
                   w.u32(m.chunk_capacity);
                 },
                 [&](const NodeCreatedMsg& m) {
                   w.u32(m.id);
                   w.u32(m.parent);
                   w.u8(m.octant);
                   w.u8(m.level);
                 },
                 [&](const NodeSplitMsg& m) { w.u32(m.id); },
                 [&](const PointsAppendedMsg& m) {
                   w.u32(m.id);
                   w.u32(static_cast<std::uint32_t>(m.points.size()));
                   for (const Point& p : m.points) {
                     w.point(p);
                   }
                 },
                 [&](const VoxelsAppendedMsg& m) {
                   w.u32(m.id);
                   w.u32(static_cast<std::uint32_t>(m.voxels.size()));
                   for (const VoxelRecord& v : m.voxels) {
                     w.u32(v.cell);
                     w.u32(v.rgba);
                   }
                 },
                 [&](const StatsTickMsg& m) {
                   w.u64(m.frame);
                   w.u64(m.points);
                   w.u64(m.voxels);
                   w.u32(m.nodes);
                   w.f64(m.avg_update_ms);
                   w.f64(m.max_update_ms);
                   w.f64(m.throughput_mps);
                 },
                 [&](const EndOfStreamMsg&) {},
                 [&](const ErrorMsg& m) {
                   w.u32(static_cast<std::uint32_t>(m.message.size()));
                   w.bytes(m.message);
                 },
             },
             message);
}

std::vector<std::uint8_t> encode(const StreamMessage& message) {
  std::vector<std::uint8_t> out;
  encode_into(message, out);
  return out;
}

StreamMessage decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) {
    throw Error(ErrorCode::MalformedMessage, "empty message");
  }
  if (bytes[0] > static_cast<std::uint8_t>(MessageTag::Error)) {
    throw Error(ErrorCode::MalformedMessage, "unknown tag " + std::to_string(bytes[0]));
  }
  const auto tag = static_cast<MessageTag>(bytes[0]);
  Reader r(bytes.subspan(1), tag);
  StreamMessage out;
  switch (tag) {
    case MessageTag::Hello: {
      HelloMsg m;
      m.version = r.u32();
      for (double& v : m.bounds.min) {
        v = r.f64();
      }
      m.bounds.size = r.f64();
      m.grid_resolution = r.u32();
      m.leaf_threshold = r.u32();
      m.chunk_capacity = r.u32();
      out = m;
      break;
    }
    case MessageTag::NodeCreated: {
      NodeCreatedMsg m;
      m.id = r.u32();
      m.parent = r.u32();
      m.octant = r.u8();
      m.level = r.u8();
      out = m;
      break;
    }
    case MessageTag::NodeSplit:
      out = NodeSplitMsg{r.u32()};
      break;
    case MessageTag::PointsAppended: {
      PointsAppendedMsg m;
      m.id = r.u32();
      const std::uint32_t count = r.u32();
      r.expect_records(count, 16);
      m.points.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        m.points.push_back(r.point());
      }
      out = std::move(m);
      break;
    }
    case MessageTag::VoxelsAppended: {
      VoxelsAppendedMsg m;
      m.id = r.u32();
      const std::uint32_t count = r.u32();
      r.expect_records(count, 8);
      m.voxels.reserve(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t cell = r.u32();
        m.voxels.push_back({cell, r.u32()});
      }
      out = std::move(m);
      break;
    }
    case MessageTag::StatsTick: {
      StatsTickMsg m;
      m.frame = r.u64();
      m.points = r.u64();
      m.voxels = r.u64();
      m.nodes = r.u32();
      m.avg_update_ms = r.f64();
      m.max_update_ms = r.f64();
      m.throughput_mps = r.f64();
      out = m;
      break;
    }
    case MessageTag::EndOfStream:
      out = EndOfStreamMsg{};
      break;
    case MessageTag::Error: {
      const std::uint32_t len = r.u32();
      r.expect_records(len, 1);
      out = ErrorMsg{r.string(len)};
      break;
    }
  }
  r.finish();
  return out;
}

const HelloMsg& MirrorTree::hello() const {
  if (!hello_) {
    throw Error(ErrorCode::MalformedMessage, "no Hello received");
  }
  return *hello_;
}

MirrorTree::MirrorNode& MirrorTree::require(std::uint32_t id) {
  if (id >= nodes_.size()) {
    throw Error(ErrorCode::MalformedMessage, "message for unknown node " + std::to_string(id));
  }
  return nodes_[id];
}

void MirrorTree::apply(const StreamMessage& message) {
  if (finished_) {
    throw Error(ErrorCode::MalformedMessage, "message after end of stream");
  }
  if (!hello_ && !std::holds_alternative<HelloMsg>(message)) {
    throw Error(ErrorCode::MalformedMessage, "stream must start with Hello");
  }
  std::visit(Overloaded{
                 [&](const HelloMsg& m) {
                   if (hello_) {
                     throw Error(ErrorCode::MalformedMessage, "duplicate Hello");
                   }
                   if (m.version != kProtocolVersion) {
                     throw Error(ErrorCode::MalformedMessage, "unsupported protocol version " + std::to_string(m.version));
                   }
                   hello_ = m;
                 },
                 [&](const NodeCreatedMsg& m) {
                   if (m.id != nodes_.size()) {
                     throw Error(ErrorCode::MalformedMessage, "node ids must be sequential");
                   }
                   MirrorNode node;
                   node.id = m.id;
                   node.parent = m.parent;
                   node.octant = m.octant;
                   node.level = m.level;
                   if (m.parent == kNoNode) {
                     if (!nodes_.empty()) {
                       throw Error(ErrorCode::MalformedMessage, "second root");
                     }
                     node.bounds = hello_->bounds;
                   } else {
                     const MirrorNode& parent = require(m.parent);
                     if (!parent.inner || m.octant > 7 || m.level != parent.level + 1) {
                       throw Error(ErrorCode::MalformedMessage, "child created under a leaf or at a bad position");
                     }
                     node.bounds = parent.bounds.child(m.octant);
                   }
                   nodes_.push_back(std::move(node));
                 },
                 [&](const NodeSplitMsg& m) {
                   MirrorNode& node = require(m.id);
                   if (node.inner) {
                     throw Error(ErrorCode::MalformedMessage, "node split twice");
                   }
                   node.inner = true;
                   node.points.clear();
                   node.points.shrink_to_fit();
                 },
                 [&](const PointsAppendedMsg& m) {
                   MirrorNode& node = require(m.id);
                   if (node.inner) {
                     throw Error(ErrorCode::MalformedMessage, "points appended to an inner node");
                   }
                   node.points.insert(node.points.end(), m.points.begin(), m.points.end());
                 },
                 [&](const VoxelsAppendedMsg& m) {
                   MirrorNode& node = require(m.id);
                   if (!node.inner) {
                     throw Error(ErrorCode::MalformedMessage, "voxels appended to a leaf");
                   }
                   node.voxels.insert(node.voxels.end(), m.voxels.begin(), m.voxels.end());
                 },
                 [&](const StatsTickMsg& m) { stats_ = m; },
                 [&](const EndOfStreamMsg&) { finished_ = true; },
                 [&](const ErrorMsg& m) {
                   error_ = m.message;
                   finished_ = true;
                 },
             },
             message);
}

std::uint64_t MirrorTree::point_count() const {
  std::uint64_t total = 0;
  for (const MirrorNode& n : nodes_) {
    total += n.points.size();
  }
  return total;
}

std::uint64_t MirrorTree::voxel_count() const {
  std::uint64_t total = 0;
  for (const MirrorNode& n : nodes_) {
    total += n.voxels.size();
  }
  return total;
}

std::vector<Point> MirrorTree::voxel_samples(std::uint32_t id) const {
  const MirrorNode& n = node(id);
  std::vector<Point> out;
  out.reserve(n.voxels.size());
  for (const VoxelRecord& v : n.voxels) {
    out.push_back(make_voxel(v.cell, n.bounds, hello().grid_resolution, v.rgba));
  }
  return out;
}

std::vector<std::string> mirror_differences(const MirrorTree& mirror, const Octree& tree) {
  std::vector<std::string> diffs;
  if (mirror.has_hello() && !(mirror.hello().bounds == tree.bounds())) {
    diffs.push_back("root bounds differ");
  }
  if (mirror.node_count() != tree.node_count()) {
    diffs.push_back("node count " + std::to_string(mirror.node_count()) + " vs " + std::to_string(tree.node_count()));
    return diffs;
  }
  for (std::uint32_t id = 0; id < tree.node_count(); ++id) {
    const Node& n = tree.node(id);
    const MirrorTree::MirrorNode& m = mirror.node(id);
    const std::string where = "node " + std::to_string(id) + ": ";
    const std::uint32_t parent = n.parent == nullptr ? kNoNode : n.parent->id;
    if (m.parent != parent || m.octant != n.octant || m.level != n.level || !(m.bounds == n.bounds)) {
      diffs.push_back(where + "placement differs");
    }
    if (m.inner != n.is_inner()) {
      diffs.push_back(where + "state differs");
      continue;
    }
    if (m.count() != n.count) {
      diffs.push_back(where + "count " + std::to_string(m.count()) + " vs " + std::to_string(n.count));
      continue;
    }
    const std::vector<Point> stored = samples_of(n);
    if (n.is_leaf()) {
      if (!std::equal(stored.begin(), stored.end(), m.points.begin(), same_bits)) {
        diffs.push_back(where + "points differ");
      }
      continue;
    }
    std::set<std::uint32_t> cells;
    for (const VoxelRecord& v : m.voxels) {
      cells.insert(v.cell);
    }
    const std::vector<std::uint32_t> grid_cells = n.grid.set_cells();
    if (cells.size() != m.voxels.size() || !std::equal(cells.begin(), cells.end(), grid_cells.begin(), grid_cells.end())) {
      diffs.push_back(where + "voxel cells differ");
    }
    const std::vector<Point> rebuilt = mirror.voxel_samples(id);
    if (!std::equal(stored.begin(), stored.end(), rebuilt.begin(), same_bits)) {
      diffs.push_back(where + "voxel samples differ");
    }
  }
  return diffs;
}

}  // namespace lodstream
