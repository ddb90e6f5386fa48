#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "lodstream/point.hpp"

namespace lodstream {

inline constexpr std::size_t kDefaultBatchSize = 1'000'000;

struct Batch {
  std::vector<Point> points;
  // Index of points[0] in global ingestion order.
  std::uint64_t source_offset = 0;
};

// Bounded multi-producer queue. Producers block while it is full; close()
// wakes everyone and makes further pushes fail.
class BatchQueue {
 public:
  explicit BatchQueue(std::size_t capacity = 8) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(Batch batch) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) {
      return false;
    }
    items_.push_back(std::move(batch));
    not_empty_.notify_one();
    return true;
  }

  std::optional<Batch> try_pop() {
    std::lock_guard lock(mutex_);
    return take_locked();
  }

  // Waits until a batch arrives, the queue is closed and empty, or the timeout expires.
  template <class Rep, class Period>
  std::optional<Batch> pop_for(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mutex_);
    not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    return take_locked();
  }

  std::optional<Batch> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    return take_locked();
  }

  // Blocks until the queue holds a batch or has been closed.
  template <class Rep, class Period>
  void wait_for_data(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mutex_);
    not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }
  bool drained() const {
    std::lock_guard lock(mutex_);
    return closed_ && items_.empty();
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::optional<Batch> take_locked() {
    if (items_.empty()) {
      return std::nullopt;
    }
    Batch batch = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return batch;
  }

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Batch> items_;
  bool closed_ = false;
};

}  // namespace lodstream
