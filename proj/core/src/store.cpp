#include "lodstream/store.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <memory>
#include <string>

#include "lodstream/error.hpp"

namespace lodstream {

namespace {

std::size_t page_size() {
  static const std::size_t size = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
  return size;
}

std::size_t round_up(std::size_t value, std::size_t align) { return (value + align - 1) & ~(align - 1); }

}  // namespace

Arena::Arena(std::size_t capacity) : capacity_(capacity), reserved_(round_up(capacity, page_size())) {
  if (capacity == 0) {
    throw Error(ErrorCode::InvalidArgument, "arena capacity must be positive");
  }
  void* mem = ::mmap(nullptr, reserved_, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (mem == MAP_FAILED) {
    throw Error(ErrorCode::OutOfArena, "could not reserve " + std::to_string(capacity) + " bytes");
  }
  base_ = static_cast<std::byte*>(mem);
}

Arena::~Arena() {
  if (base_ != nullptr) {
    ::munmap(base_, reserved_);
  }
}

Region Arena::allocate(std::size_t size, std::size_t align) {
  if (size == 0 || !std::has_single_bit(align) || align > page_size()) {
    throw Error(ErrorCode::InvalidArgument, "bad arena request: size " + std::to_string(size) + ", align " +
                                                std::to_string(align));
  }
  std::size_t current = offset_.load(std::memory_order_relaxed);
  std::size_t start = 0;
  std::size_t next = 0;
  do {
    start = round_up(current, align);
    next = start + size;
    if (next > capacity_ || next < start) {
      throw Error(ErrorCode::OutOfArena, "arena exhausted: request of " + std::to_string(size) +
                                             " bytes at offset " + std::to_string(current) +
                                             " exceeds capacity " + std::to_string(capacity_) +
                                             "; raise --arena-bytes");
    }
  } while (!offset_.compare_exchange_weak(current, next, std::memory_order_acq_rel, std::memory_order_relaxed));
  return Region{start, size, base_ + start};
}

std::size_t Arena::high_water_mark() const { return std::max(high_water_, offset()); }

void Arena::reset() {
  const std::size_t used = offset();
  high_water_ = std::max(high_water_, used);
  if (used > 0) {
    // Private anonymous pages read back as zero after MADV_DONTNEED.
    ::madvise(base_, round_up(used, page_size()), MADV_DONTNEED);
  }
  offset_.store(0, std::memory_order_release);
}

ChunkPool::ChunkPool(Arena& arena, std::uint32_t chunk_capacity) : arena_(arena), chunk_capacity_(chunk_capacity) {
  if (chunk_capacity == 0) {
    throw Error(ErrorCode::InvalidArgument, "chunk capacity must be positive");
  }
}

Chunk* ChunkPool::acquire() {
  {
    std::lock_guard lock(mutex_);
    if (!free_.empty()) {
      Chunk* chunk = free_.back();
      free_.pop_back();
      chunk->next = nullptr;
      chunk->occupied = 0;
      return chunk;
    }
  }
  const Region region = arena_.allocate(chunk_bytes(), alignof(Chunk));
  Chunk* chunk = std::construct_at(reinterpret_cast<Chunk*>(region.data));
  chunk->capacity = chunk_capacity_;
  std::lock_guard lock(mutex_);
  ++allocated_;
  return chunk;
}

std::size_t ChunkPool::release(Chunk* head) {
  std::size_t count = 0;
  std::lock_guard lock(mutex_);
  while (head != nullptr) {
    Chunk* next = head->next;
    head->next = nullptr;
    head->occupied = 0;
    free_.push_back(head);
    head = next;
    ++count;
  }
  released_ += count;
  return count;
}

std::size_t ChunkPool::allocated_total() const {
  std::lock_guard lock(mutex_);
  return allocated_;
}

std::size_t ChunkPool::released_total() const {
  std::lock_guard lock(mutex_);
  return released_;
}

std::size_t ChunkPool::free_count() const {
  std::lock_guard lock(mutex_);
  return free_.size();
}

}  // namespace lodstream
