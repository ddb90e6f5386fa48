#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "lodstream/error.hpp"
#include "lodstream/protocol.hpp"
#include "lodstream/update.hpp"
#include "support/oracles.hpp"

using namespace lodstream;

namespace {

constexpr std::uint32_t kBlue = 0xFFFF0000u;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

std::vector<std::uint8_t> bytes_of(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int b : v) {
    out.push_back(static_cast<std::uint8_t>(b));
  }
  return out;
}

double random_double(std::mt19937_64& rng) {
  // Arbitrary bit patterns, including NaN payloads and infinities.
  const std::uint64_t bits = rng();
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

StreamMessage random_message(std::mt19937_64& rng, MessageTag tag) {
  std::uniform_int_distribution<std::uint32_t> u32;
  std::uniform_int_distribution<int> small(0, 300);
  switch (tag) {
    case MessageTag::Hello:
      return HelloMsg{u32(rng), CubeBounds{{random_double(rng), random_double(rng), random_double(rng)},
                                           random_double(rng)},
                      u32(rng), u32(rng), u32(rng)};
    case MessageTag::NodeCreated:
      return NodeCreatedMsg{u32(rng), u32(rng), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
    case MessageTag::NodeSplit:
      return NodeSplitMsg{u32(rng)};
    case MessageTag::PointsAppended: {
      PointsAppendedMsg m{u32(rng), {}};
      m.points.resize(static_cast<std::size_t>(small(rng)));
      for (Point& p : m.points) {
        std::uint64_t raw[2] = {rng(), rng()};
        std::memcpy(&p, raw, sizeof p);
      }
      return m;
    }
    case MessageTag::VoxelsAppended: {
      VoxelsAppendedMsg m{u32(rng), {}};
      m.voxels.resize(static_cast<std::size_t>(small(rng)));
      for (VoxelRecord& v : m.voxels) {
        v = {u32(rng), u32(rng)};
      }
      return m;
    }
    case MessageTag::StatsTick:
      return StatsTickMsg{rng(), rng(), rng(), u32(rng), random_double(rng), random_double(rng), random_double(rng)};
    case MessageTag::EndOfStream:
      return EndOfStreamMsg{};
    case MessageTag::Error: {
      std::string text(static_cast<std::size_t>(small(rng)), '\0');
      for (char& c : text) {
        c = static_cast<char>(rng());
      }
      return ErrorMsg{text};
    }
  }
  return EndOfStreamMsg{};
}

Point pt(float x, float y, float z, std::uint32_t rgba) {
  Point p{x, y, z};
  p.set_rgba(rgba);
  return p;
}

// The canonical set's log: three points, T=2, one point per batch.
std::vector<StreamMessage> canonical_log() {
  HelloMsg hello;
  hello.bounds = CubeBounds{{0.0, 0.0, 0.0}, 1.0};
  hello.grid_resolution = 4;
  hello.leaf_threshold = 2;
  hello.chunk_capacity = 2;
  std::vector<StreamMessage> log{hello, NodeCreatedMsg{0, kNoNode, 0, 0},
                                 PointsAppendedMsg{0, {pt(.1f, .1f, .1f, 0xFF0000FFu)}},
                                 PointsAppendedMsg{0, {pt(.2f, .2f, .2f, 0xFF00FF00u)}}, NodeSplitMsg{0}};
  for (std::uint32_t i = 0; i < 8; ++i) {
    log.push_back(NodeCreatedMsg{1 + i, 0, static_cast<std::uint8_t>(i), 1});
  }
  log.push_back(VoxelsAppendedMsg{0, {{0, 0xFF0000FFu}, {63, kBlue}}});
  log.push_back(PointsAppendedMsg{1, {pt(.1f, .1f, .1f, 0xFF0000FFu), pt(.2f, .2f, .2f, 0xFF00FF00u)}});
  log.push_back(PointsAppendedMsg{8, {pt(.8f, .8f, .8f, kBlue)}});
  log.push_back(StatsTickMsg{1, 3, 2, 9, 0.1, 0.2, 3.0});
  log.push_back(EndOfStreamMsg{});
  return log;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("tags and names") {
    CHECK(tag_of(HelloMsg{}) == MessageTag::Hello);
    CHECK(tag_of(EndOfStreamMsg{}) == MessageTag::EndOfStream);
    CHECK(tag_of(ErrorMsg{}) == MessageTag::Error);
    CHECK(static_cast<int>(MessageTag::VoxelsAppended) == 4);
    CHECK(tag_name(MessageTag::StatsTick) == "StatsTick");
    CHECK(encode(EndOfStreamMsg{}) == bytes_of({6}));
  }

  TEST_CASE("one voxel record is 17 bytes") {
    const auto bytes = encode(VoxelsAppendedMsg{3, {{63, kBlue}}});
    CHECK(bytes == bytes_of({4, 3, 0, 0, 0, 1, 0, 0, 0, 63, 0, 0, 0, 0x00, 0x00, 0xFF, 0xFF}));
    CHECK(encoded_size(VoxelsAppendedMsg{3, {{63, kBlue}}}) == 17);
  }

  TEST_CASE("points travel as 16-byte records") {
    const auto bytes = encode(PointsAppendedMsg{2, {pt(1.0f, 2.0f, 3.0f, 0xFF0000FFu)}});
    CHECK(bytes == bytes_of({3, 2, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00,
                             0x40, 0x40, 0xFF, 0x00, 0x00, 0xFF}));
  }

  TEST_CASE("node messages have fixed layouts") {
    CHECK(encode(NodeCreatedMsg{5, 1, 7, 2}) == bytes_of({1, 5, 0, 0, 0, 1, 0, 0, 0, 7, 2}));
    CHECK(encode(NodeSplitMsg{0x01020304}) == bytes_of({2, 4, 3, 2, 1}));
    CHECK(encode(ErrorMsg{"ab"}) == bytes_of({7, 2, 0, 0, 0, 'a', 'b'}));
    const auto hello = encode(HelloMsg{});
    CHECK(hello.size() == 1 + 4 + 32 + 12);
    CHECK(hello[1] == kProtocolVersion);
  }

  TEST_CASE("every tag round-trips bit-exactly") {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 200; ++round) {
      for (int t = 0; t <= static_cast<int>(MessageTag::Error); ++t) {
        const auto tag = static_cast<MessageTag>(t);
        const StreamMessage msg = random_message(rng, tag);
        const auto bytes = encode(msg);
        REQUIRE(bytes.size() == encoded_size(msg));
        REQUIRE(bytes[0] == t);
        const StreamMessage back = decode(bytes);
        REQUIRE(tag_of(back) == tag);
        REQUIRE(encode(back) == bytes);
        if (tag != MessageTag::Hello && tag != MessageTag::StatsTick) {
          REQUIRE(back == msg);
        }
      }
    }
  }

  TEST_CASE("encode_into appends") {
    std::vector<std::uint8_t> out{42};
    encode_into(NodeSplitMsg{1}, out);
    CHECK(out == bytes_of({42, 2, 1, 0, 0, 0}));
  }

  TEST_CASE("malformed frames are rejected") {
    CHECK(code_of([] { decode({}); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({8})); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({255, 0})); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({6, 0})); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({2, 1, 0, 0})); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({4, 3, 0, 0, 0, 0xFF, 0xFF, 0xFF, 0xFF})); }) ==
          ErrorCode::MalformedMessage);
    CHECK(code_of([] { decode(bytes_of({7, 5, 0, 0, 0, 'a'})); }) == ErrorCode::MalformedMessage);

    std::mt19937_64 rng(5);
    for (int t = 0; t <= static_cast<int>(MessageTag::Error); ++t) {
      auto msg = random_message(rng, static_cast<MessageTag>(t));
      if (auto* p = std::get_if<PointsAppendedMsg>(&msg); p && p->points.empty()) {
        p->points.resize(1);
      }
      const auto bytes = encode(msg);
      for (std::size_t cut = 1; cut < bytes.size(); cut += std::max<std::size_t>(1, bytes.size() / 17)) {
        const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        REQUIRE(code_of([&] { decode(truncated); }) == ErrorCode::MalformedMessage);
      }
      auto longer = bytes;
      longer.push_back(0);
      REQUIRE(code_of([&] { decode(longer); }) == ErrorCode::MalformedMessage);
    }
  }

  TEST_CASE("mirror applies the canonical log") {
    MirrorTree mirror;
    for (const StreamMessage& m : canonical_log()) {
      mirror.apply(encode(m));
    }
    CHECK(mirror.finished());
    CHECK_FALSE(mirror.error());
    REQUIRE(mirror.node_count() == 9);
    CHECK(mirror.node(0).inner);
    for (std::uint32_t id = 1; id <= 8; ++id) {
      CHECK_FALSE(mirror.node(id).inner);
      CHECK(mirror.node(id).parent == 0);
      CHECK(mirror.node(id).bounds == CubeBounds{{0.0, 0.0, 0.0}, 1.0}.child(static_cast<int>(id - 1)));
    }
    CHECK(mirror.point_count() == 3);
    CHECK(mirror.voxel_count() == 2);
    CHECK(mirror.node(1).points.size() == 2);
    CHECK(mirror.node(8).points.size() == 1);
    const auto samples = mirror.voxel_samples(0);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].x == 0.125f);
    CHECK(samples[1].x == 0.875f);
    CHECK(samples[1].y == 0.875f);
    CHECK(samples[1].z == 0.875f);
    CHECK(samples[1].rgba() == kBlue);
    REQUIRE(mirror.last_stats());
    CHECK(mirror.last_stats()->nodes == 9);
  }

  TEST_CASE("mirror of the canonical log equals the updated tree") {
    OctreeConfig config;
    config.leaf_threshold = 2;
    config.grid_resolution = 4;
    config.chunk_capacity = 2;
    config.arena_capacity = std::size_t{1} << 24;
    Octree tree(CubeBounds{{0.0, 0.0, 0.0}, 1.0}, config);
    Updater updater(tree);
    for (const Point& p : {pt(.1f, .1f, .1f, 0xFF0000FFu), pt(.2f, .2f, .2f, 0xFF00FF00u), pt(.8f, .8f, .8f, kBlue)}) {
      updater.insert_batch(std::vector<Point>{p});
    }
    MirrorTree mirror;
    for (const StreamMessage& m : canonical_log()) {
      mirror.apply(m);
    }
    CHECK(mirror_differences(mirror, tree).empty());

    MirrorTree partial;
    const auto log = canonical_log();
    for (std::size_t i = 0; i + 3 < log.size(); ++i) {
      partial.apply(log[i]);
    }
    CHECK_FALSE(mirror_differences(partial, tree).empty());
  }

  TEST_CASE("mirror rejects protocol violations") {
    const HelloMsg hello;
    auto fresh = [&] {
      MirrorTree m;
      m.apply(hello);
      return m;
    };
    CHECK(code_of([] { MirrorTree().apply(NodeSplitMsg{0}); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] { fresh().apply(hello); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([] { MirrorTree().apply(HelloMsg{2, {}, 1, 1, 1}); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] { fresh().apply(NodeCreatedMsg{1, kNoNode, 0, 0}); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] { fresh().apply(PointsAppendedMsg{0, {}}); }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(NodeCreatedMsg{1, kNoNode, 0, 0});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(NodeCreatedMsg{1, 0, 0, 1});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(NodeSplitMsg{0});
            m.apply(NodeCreatedMsg{1, 0, 0, 2});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(NodeSplitMsg{0});
            m.apply(PointsAppendedMsg{0, {Point{}}});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(VoxelsAppendedMsg{0, {{1, 1}}});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(NodeCreatedMsg{0, kNoNode, 0, 0});
            m.apply(NodeSplitMsg{0});
            m.apply(NodeSplitMsg{0});
          }) == ErrorCode::MalformedMessage);
    CHECK(code_of([&] {
            auto m = fresh();
            m.apply(EndOfStreamMsg{});
            m.apply(StatsTickMsg{});
          }) == ErrorCode::MalformedMessage);
  }

  TEST_CASE("error frames end the stream") {
    MirrorTree mirror;
    mirror.apply(HelloMsg{});
    mirror.apply(ErrorMsg{"out of arena"});
    CHECK(mirror.finished());
    REQUIRE(mirror.error());
    CHECK(*mirror.error() == "out of arena");
  }
}
