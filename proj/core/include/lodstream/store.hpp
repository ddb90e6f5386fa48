#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "lodstream/point.hpp"

namespace lodstream {

inline constexpr std::size_t kDefaultArenaCapacity = std::size_t{4} << 30;
inline constexpr std::uint32_t kDefaultChunkCapacity = 1000;

// Number of chunks a node needs to hold `count` samples.
constexpr std::uint32_t chunks_needed(std::uint64_t count, std::uint32_t chunk_capacity) {
  return static_cast<std::uint32_t>((count + chunk_capacity - 1) / chunk_capacity);
}

// A contiguous byte range handed out by the arena. The bytes stay valid and
// in place until the arena is reset or destroyed.
struct Region {
  std::size_t offset = 0;
  std::size_t size = 0;
  std::byte* data = nullptr;

  std::span<std::byte> bytes() const { return {data, size}; }
};

/// Bump allocator over one reserved block of virtual memory.
///
/// The whole capacity is reserved up front and committed lazily by the OS, so
/// a large budget costs nothing until it is touched. Allocation is a single
/// compare-and-swap on the offset and is safe to call concurrently. Returned
/// regions are zero-filled and never move.
class Arena {
 public:
  explicit Arena(std::size_t capacity = kDefaultArenaCapacity);
  ~Arena();

  Arena(const Arena&) = delete;
  Arena& operator=(const Arena&) = delete;

  // Throws Error{OutOfArena} when the aligned request does not fit.
  // `align` must be a power of two no larger than the page size.
  Region allocate(std::size_t size, std::size_t align);

  std::size_t capacity() const { return capacity_; }
  std::size_t offset() const { return offset_.load(std::memory_order_acquire); }
  std::size_t high_water_mark() const;

  // Drops every allocation at once. Previously returned regions become invalid.
  void reset();

 private:
  std::size_t capacity_;
  std::size_t reserved_;
  std::byte* base_ = nullptr;
  std::atomic<std::size_t> offset_{0};
  std::size_t high_water_ = 0;
};

// Fixed-capacity block of 16-byte samples. The slots follow the header
// directly in arena memory.
struct Chunk {
  Chunk* next = nullptr;
  std::uint32_t occupied = 0;
  std::uint32_t capacity = 0;

  std::span<Point> slots() { return {reinterpret_cast<Point*>(this + 1), capacity}; }
  std::span<const Point> slots() const { return {reinterpret_cast<const Point*>(this + 1), capacity}; }
};

static_assert(sizeof(Chunk) == 16);

// Recycles chunks released by split leaves before touching the arena.
// The free list is LIFO.
class ChunkPool {
 public:
  ChunkPool(Arena& arena, std::uint32_t chunk_capacity = kDefaultChunkCapacity);

  ChunkPool(const ChunkPool&) = delete;
  ChunkPool& operator=(const ChunkPool&) = delete;

  Chunk* acquire();

  // Returns every chunk reachable from head to the free list.
  std::size_t release(Chunk* head);

  std::uint32_t chunk_capacity() const { return chunk_capacity_; }
  // Bytes per chunk including the header.
  std::size_t chunk_bytes() const { return sizeof(Chunk) + std::size_t{chunk_capacity_} * sizeof(Point); }

  std::size_t allocated_total() const;
  std::size_t released_total() const;
  std::size_t free_count() const;

 private:
  Arena& arena_;
  std::uint32_t chunk_capacity_;
  mutable std::mutex mutex_;
  std::vector<Chunk*> free_;
  std::size_t allocated_ = 0;
  std::size_t released_ = 0;
};

}  // namespace lodstream
