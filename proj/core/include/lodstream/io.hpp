#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lodstream/batch_queue.hpp"
#include "lodstream/octree.hpp"

namespace lodstream {

enum class FileFormat { Sim, Las };

// By extension: .sim or .las. .laz is rejected with UnsupportedFormat.
FileFormat detect_format(const std::filesystem::path& path);

// Headerless little-endian XYZRGBA records, 16 bytes each.
void sim_write(const std::filesystem::path& path, std::span<const Point> points);
std::vector<Point> sim_read_all(const std::filesystem::path& path);

struct LasHeaderInfo {
  std::uint8_t version_major = 1;
  std::uint8_t version_minor = 2;
  std::uint64_t point_count = 0;
  std::uint8_t point_format = 0;
  std::uint16_t record_length = 0;
  std::uint32_t data_offset = 0;
  Vec3 scale{1.0, 1.0, 1.0};
  Vec3 offset{0.0, 0.0, 0.0};
  Vec3 min{0.0, 0.0, 0.0};
  Vec3 max{0.0, 0.0, 0.0};

  CubeBounds bounds() const { return CubeBounds::cubify(min, max); }
};

// Byte offset of the 16-bit RGB triple inside a record of the given format.
std::optional<std::size_t> las_rgb_offset(std::uint8_t point_format);

LasHeaderInfo las_open(const std::filesystem::path& path);

// Random-access decoder over a point container.
class PointFile {
 public:
  virtual ~PointFile() = default;
  virtual std::uint64_t point_count() const = 0;
  // Size of the underlying file, for GB/s figures.
  virtual std::uint64_t file_bytes() const = 0;
  // Appends points [first, first + count) to out.
  virtual void read(std::uint64_t first, std::uint64_t count, std::vector<Point>& out) const = 0;
  // True when reads bypass the OS page cache.
  virtual bool unbuffered() const { return false; }
};

std::unique_ptr<PointFile> open_sim(const std::filesystem::path& path);
std::unique_ptr<PointFile> open_las(const std::filesystem::path& path);
std::unique_ptr<PointFile> open_point_file(const std::filesystem::path& path);
std::unique_ptr<PointFile> memory_point_file(std::vector<Point> points);

// Root cube for a file: LAS header bounds or a full SIM pre-scan, cubified.
CubeBounds discover_bounds(const std::filesystem::path& path);
CubeBounds discover_bounds(const PointFile& file);
CubeBounds bounds_of(std::span<const Point> points);

// Drops non-finite points (returns how many) and clamps the rest into bounds.
std::size_t sanitize(std::vector<Point>& points, const std::optional<CubeBounds>& bounds);

// Sequential batching cursor over a PointFile.
class BatchSource {
 public:
  BatchSource(std::shared_ptr<const PointFile> file, std::size_t batch_size = kDefaultBatchSize,
              std::optional<CubeBounds> clamp_to = std::nullopt);

  // nullopt signals end of stream.
  std::optional<Batch> read_batch();

  std::uint64_t rejected() const { return rejected_; }
  const PointFile& file() const { return *file_; }

 private:
  std::shared_ptr<const PointFile> file_;
  std::size_t batch_size_;
  std::optional<CubeBounds> clamp_to_;
  std::uint64_t cursor_ = 0;
  std::uint64_t emitted_ = 0;
  std::uint64_t rejected_ = 0;
};

struct ReaderOptions {
  std::size_t batch_size = kDefaultBatchSize;
  unsigned workers = 1;
  std::optional<CubeBounds> clamp_to;
  // Points per second; 0 disables throttling.
  double throttle_pps = 0.0;
};

// Background loader: workers decode distinct file segments and push batches
// to the queue in file order. The queue is closed when the file is exhausted
// or on error.
class BatchReader {
 public:
  BatchReader(std::shared_ptr<const PointFile> file, BatchQueue& queue, ReaderOptions options = {});
  ~BatchReader();

  BatchReader(const BatchReader&) = delete;
  BatchReader& operator=(const BatchReader&) = delete;

  void join();
  void stop();

  std::uint64_t rejected() const { return rejected_.load(); }
  // Rethrows the first worker failure, if any.
  void rethrow_if_failed() const;

 private:
  void run_worker();

  std::shared_ptr<const PointFile> file_;
  BatchQueue& queue_;
  ReaderOptions options_;
  std::uint64_t batch_count_ = 0;
  std::atomic<std::uint64_t> next_batch_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::atomic<bool> stop_{false};

  std::mutex turn_mutex_;
  std::condition_variable turn_cv_;
  std::uint64_t next_to_push_ = 0;
  std::uint64_t emitted_ = 0;

  mutable std::mutex error_mutex_;
  std::exception_ptr error_;
  std::vector<std::thread> threads_;
  std::chrono::steady_clock::time_point started_;
};

inline constexpr unsigned kMortonBits = 21;

// Quantizes each axis to 2^bits cells and interleaves x at bit 3i, y at 3i+1,
// z at 3i+2.
std::uint64_t morton_key(const Point& p, const CubeBounds& bounds, unsigned bits_per_axis = kMortonBits);
std::uint64_t morton_interleave(std::uint32_t qx, std::uint32_t qy, std::uint32_t qz);

// Stable sort by morton_key.
void morton_order(std::vector<Point>& points, const CubeBounds& bounds);
void morton_sort(const std::filesystem::path& in, const std::filesystem::path& out,
                 const std::optional<CubeBounds>& bounds = std::nullopt);

enum class SyntheticKind { Uniform, Surface };

SyntheticKind parse_synthetic_kind(const std::string& name);

// Deterministic test clouds. Uniform fills [0,100]^3; Surface samples a
// terrain height field plus a sphere shell, so most octree cells stay empty.
std::vector<Point> make_synthetic(SyntheticKind kind, std::size_t count, std::uint64_t seed);

}  // namespace lodstream
