#include "lodstream/io.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

#include "lodstream/error.hpp"

namespace lodstream {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDirectAlign = 4096;

template <class T>
T load_le(const std::byte* src) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<U>(static_cast<U>(std::to_integer<std::uint8_t>(src[i])) << (8 * i));
  }
  return std::bit_cast<T>(value);
}

template <class T>
void store_le(std::byte* dst, T v) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                               std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  const U value = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<std::byte>((value >> (8 * i)) & 0xFF);
  }
}

void encode_sim(const Point& p, std::byte* dst) {
  store_le(dst + 0, p.x);
  store_le(dst + 4, p.y);
  store_le(dst + 8, p.z);
  dst[12] = std::byte{p.r};
  dst[13] = std::byte{p.g};
  dst[14] = std::byte{p.b};
  dst[15] = std::byte{p.a};
}

Point decode_sim(const std::byte* src) {
  Point p;
  p.x = load_le<float>(src + 0);
  p.y = load_le<float>(src + 4);
  p.z = load_le<float>(src + 8);
  p.r = std::to_integer<std::uint8_t>(src[12]);
  p.g = std::to_integer<std::uint8_t>(src[13]);
  p.b = std::to_integer<std::uint8_t>(src[14]);
  p.a = std::to_integer<std::uint8_t>(src[15]);
  return p;
}

std::string errno_text() { return std::strerror(errno); }

struct AlignedFree {
  void operator()(std::byte* p) const { std::free(p); }
};

// Positional reads that bypass the page cache via O_DIRECT when the
// filesystem allows it, otherwise plain reads followed by a cache drop hint.
class RawFile {
 public:
  explicit RawFile(const fs::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_DIRECT);
    direct_ = fd_ >= 0;
    if (fd_ < 0) {
      fd_ = ::open(path.c_str(), O_RDONLY);
    }
    if (fd_ < 0) {
      throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + errno_text());
    }
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      throw Error(ErrorCode::IoError, "cannot stat " + path.string() + ": " + errno_text());
    }
    size_ = static_cast<std::uint64_t>(st.st_size);
    if (!direct_) {
      static std::once_flag warned;
      std::call_once(warned, [&] {
        std::cerr << "warning: unbuffered reads unavailable for " << path.string()
                  << "; throughput figures may include page-cache effects\n";
      });
    }
  }
  ~RawFile() {
    if (fd_ >= 0) {
      ::close(fd_);
    }
  }
  RawFile(const RawFile&) = delete;
  RawFile& operator=(const RawFile&) = delete;

  std::uint64_t size() const { return size_; }
  bool direct() const { return direct_; }

  void read_at(std::uint64_t offset, std::span<std::byte> out) const {
    if (out.empty()) {
      return;
    }
    if (offset + out.size() > size_) {
      throw Error(ErrorCode::Truncated, path_.string() + " ends before byte " + std::to_string(offset + out.size()));
    }
    if (!direct_) {
      read_fully(offset, out.data(), out.size());
      ::posix_fadvise(fd_, static_cast<off_t>(offset), static_cast<off_t>(out.size()), POSIX_FADV_DONTNEED);
      return;
    }
    const std::uint64_t begin = offset & ~std::uint64_t{kDirectAlign - 1};
    const std::uint64_t end = (offset + out.size() + kDirectAlign - 1) & ~std::uint64_t{kDirectAlign - 1};
    const std::size_t length = static_cast<std::size_t>(end - begin);
    std::unique_ptr<std::byte, AlignedFree> buffer(static_cast<std::byte*>(std::aligned_alloc(kDirectAlign, length)));
    if (!buffer) {
      throw Error(ErrorCode::IoError, "out of memory for a read buffer of " + std::to_string(length) + " bytes");
    }
    const std::size_t needed = static_cast<std::size_t>(offset + out.size() - begin);
    std::size_t got = 0;
    while (got < needed) {
      const ssize_t n = ::pread(fd_, buffer.get() + got, length - got, static_cast<off_t>(begin + got));
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw Error(ErrorCode::IoError, "read failed on " + path_.string() + ": " + errno_text());
      }
      if (n == 0) {
        break;
      }
      got += static_cast<std::size_t>(n);
    }
    if (got < needed) {
      throw Error(ErrorCode::Truncated, "short read on " + path_.string());
    }
    std::memcpy(out.data(), buffer.get() + (offset - begin), out.size());
  }

 private:
  void read_fully(std::uint64_t offset, std::byte* dst, std::size_t size) const {
    std::size_t got = 0;
    while (got < size) {
      const ssize_t n = ::pread(fd_, dst + got, size - got, static_cast<off_t>(offset + got));
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw Error(ErrorCode::IoError, "read failed on " + path_.string() + ": " + errno_text());
      }
      if (n == 0) {
        throw Error(ErrorCode::Truncated, "short read on " + path_.string());
      }
      got += static_cast<std::size_t>(n);
    }
  }

  fs::path path_;
  int fd_ = -1;
  bool direct_ = false;
  std::uint64_t size_ = 0;
};

class SimFile final : public PointFile {
 public:
  explicit SimFile(const fs::path& path) : raw_(path) {
    if (raw_.size() % sizeof(Point) != 0) {
      throw Error(ErrorCode::Truncated, path.string() + " has " + std::to_string(raw_.size()) +
                                            " bytes, not a multiple of the 16-byte record size");
    }
  }

  std::uint64_t point_count() const override { return raw_.size() / sizeof(Point); }
  std::uint64_t file_bytes() const override { return raw_.size(); }
  bool unbuffered() const override { return raw_.direct(); }

  void read(std::uint64_t first, std::uint64_t count, std::vector<Point>& out) const override {
    std::vector<std::byte> bytes(static_cast<std::size_t>(count * sizeof(Point)));
    raw_.read_at(first * sizeof(Point), bytes);
    out.reserve(out.size() + count);
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(decode_sim(bytes.data() + i * sizeof(Point)));
    }
  }

 private:
  RawFile raw_;
};

class LasFile final : public PointFile {
 public:
  explicit LasFile(const fs::path& path) : header_(las_open(path)), raw_(path) {
    rgb_offset_ = *las_rgb_offset(header_.point_format);
    // Colors are nominally 16-bit but many writers store 8-bit values.
    const std::uint64_t probe = std::min<std::uint64_t>(header_.point_count, 1024);
    std::vector<std::byte> bytes(static_cast<std::size_t>(probe * header_.record_length));
    raw_.read_at(header_.data_offset, bytes);
    for (std::uint64_t i = 0; i < probe && !color16_; ++i) {
      const std::byte* rec = bytes.data() + i * header_.record_length + rgb_offset_;
      for (int c = 0; c < 3; ++c) {
        if (load_le<std::uint16_t>(rec + 2 * c) > 255) {
          color16_ = true;
        }
      }
    }
  }

  std::uint64_t point_count() const override { return header_.point_count; }
  std::uint64_t file_bytes() const override { return raw_.size(); }
  bool unbuffered() const override { return raw_.direct(); }

  void read(std::uint64_t first, std::uint64_t count, std::vector<Point>& out) const override {
    const std::size_t stride = header_.record_length;
    std::vector<std::byte> bytes(static_cast<std::size_t>(count * stride));
    raw_.read_at(header_.data_offset + first * stride, bytes);
    out.reserve(out.size() + count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::byte* rec = bytes.data() + i * stride;
      Point p;
      p.x = static_cast<float>(load_le<std::int32_t>(rec + 0) * header_.scale[0] + header_.offset[0]);
      p.y = static_cast<float>(load_le<std::int32_t>(rec + 4) * header_.scale[1] + header_.offset[1]);
      p.z = static_cast<float>(load_le<std::int32_t>(rec + 8) * header_.scale[2] + header_.offset[2]);
      const std::byte* rgb = rec + rgb_offset_;
      const int shift = color16_ ? 8 : 0;
      p.r = static_cast<std::uint8_t>(load_le<std::uint16_t>(rgb + 0) >> shift);
      p.g = static_cast<std::uint8_t>(load_le<std::uint16_t>(rgb + 2) >> shift);
      p.b = static_cast<std::uint8_t>(load_le<std::uint16_t>(rgb + 4) >> shift);
      p.a = 255;
      out.push_back(p);
    }
  }

 private:
  LasHeaderInfo header_;
  RawFile raw_;
  std::size_t rgb_offset_ = 0;
  bool color16_ = false;
};

class MemoryPointFile final : public PointFile {
 public:
  explicit MemoryPointFile(std::vector<Point> points) : points_(std::move(points)) {}

  std::uint64_t point_count() const override { return points_.size(); }
  std::uint64_t file_bytes() const override { return points_.size() * sizeof(Point); }
  void read(std::uint64_t first, std::uint64_t count, std::vector<Point>& out) const override {
    out.insert(out.end(), points_.begin() + static_cast<std::ptrdiff_t>(first),
               points_.begin() + static_cast<std::ptrdiff_t>(first + count));
  }

 private:
  std::vector<Point> points_;
};

// Largest float not below lo / smallest float not above hi.
float float_at_least(double lo) {
  float f = static_cast<float>(lo);
  if (f < lo) {
    f = std::nextafter(f, std::numeric_limits<float>::infinity());
  }
  return f;
}

float float_at_most(double hi) {
  float f = static_cast<float>(hi);
  if (f > hi) {
    f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  }
  return f;
}

}  // namespace

FileFormat detect_format(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".sim") {
    return FileFormat::Sim;
  }
  if (ext == ".las") {
    return FileFormat::Las;
  }
  if (ext == ".laz") {
    throw Error(ErrorCode::UnsupportedFormat,
                path.string() + ": LAZ is not supported; decompress to LAS first (e.g. `laszip -i in.laz -o out.las`)");
  }
  throw Error(ErrorCode::UnsupportedFormat, path.string() + ": unknown extension, expected .sim or .las");
}

void sim_write(const fs::path& path, std::span<const Point> points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot create " + path.string());
  }
  constexpr std::size_t kBlock = 1 << 16;
  std::vector<std::byte> buffer(kBlock * sizeof(Point));
  for (std::size_t start = 0; start < points.size(); start += kBlock) {
    const std::size_t n = std::min(kBlock, points.size() - start);
    for (std::size_t i = 0; i < n; ++i) {
      encode_sim(points[start + i], buffer.data() + i * sizeof(Point));
    }
    out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(n * sizeof(Point)));
  }
  if (!out) {
    throw Error(ErrorCode::IoError, "write failed on " + path.string());
  }
}

std::vector<Point> sim_read_all(const fs::path& path) {
  const auto file = open_sim(path);
  std::vector<Point> points;
  file->read(0, file->point_count(), points);
  return points;
}

std::optional<std::size_t> las_rgb_offset(std::uint8_t point_format) {
  switch (point_format) {
    case 2: return 20;
    case 3: return 28;
    case 7:
    case 8: return 30;
    default: return std::nullopt;
  }
}

LasHeaderInfo las_open(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  std::array<std::byte, 375> h{};
  in.read(reinterpret_cast<char*>(h.data()), h.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < 4 || std::memcmp(h.data(), "LASF", 4) != 0) {
    throw Error(ErrorCode::BadMagic, path.string() + " does not start with LASF");
  }
  if (got < 227) {
    throw Error(ErrorCode::Truncated, path.string() + ": LAS header is only " + std::to_string(got) + " bytes");
  }

  LasHeaderInfo info;
  info.version_major = load_le<std::uint8_t>(&h[24]);
  info.version_minor = load_le<std::uint8_t>(&h[25]);
  info.data_offset = load_le<std::uint32_t>(&h[96]);
  const std::uint8_t raw_format = load_le<std::uint8_t>(&h[104]);
  info.record_length = load_le<std::uint16_t>(&h[105]);
  info.point_count = load_le<std::uint32_t>(&h[107]);
  for (int axis = 0; axis < 3; ++axis) {
    info.scale[axis] = load_le<double>(&h[131 + 8 * axis]);
    info.offset[axis] = load_le<double>(&h[155 + 8 * axis]);
    info.max[axis] = load_le<double>(&h[179 + 16 * axis]);
    info.min[axis] = load_le<double>(&h[187 + 16 * axis]);
  }
  if (info.version_minor >= 4 && got >= 255) {
    const auto count64 = load_le<std::uint64_t>(&h[247]);
    if (count64 != 0) {
      info.point_count = count64;
    }
  }

  if (raw_format & 0xC0) {
    throw Error(ErrorCode::UnsupportedFormat,
                path.string() + ": compressed (LAZ) point data is not supported; decompress to LAS first");
  }
  info.point_format = raw_format;
  static constexpr std::array<std::uint16_t, 11> kMinLength{20, 28, 26, 34, 57, 63, 30, 36, 38, 59, 67};
  const auto rgb = las_rgb_offset(info.point_format);
  if (!rgb) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": point format " +
                                                  std::to_string(info.point_format) +
                                                  " has no RGB; formats 2, 3, 7 and 8 are supported");
  }
  if (info.record_length < kMinLength[info.point_format]) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": record length " +
                                                  std::to_string(info.record_length) + " is too short for format " +
                                                  std::to_string(info.point_format));
  }
  const std::uint64_t file_size = fs::file_size(path);
  if (info.data_offset + info.point_count * info.record_length > file_size) {
    throw Error(ErrorCode::Truncated, path.string() + ": header announces " + std::to_string(info.point_count) +
                                          " points but the file is too short");
  }
  return info;
}

std::unique_ptr<PointFile> open_sim(const fs::path& path) { return std::make_unique<SimFile>(path); }
std::unique_ptr<PointFile> open_las(const fs::path& path) { return std::make_unique<LasFile>(path); }

std::unique_ptr<PointFile> open_point_file(const fs::path& path) {
  return detect_format(path) == FileFormat::Las ? open_las(path) : open_sim(path);
}

std::unique_ptr<PointFile> memory_point_file(std::vector<Point> points) {
  return std::make_unique<MemoryPointFile>(std::move(points));
}

CubeBounds bounds_of(std::span<const Point> points) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf};
  Vec3 hi{-inf, -inf, -inf};
  std::size_t finite = 0;
  for (const Point& p : points) {
    if (!p.finite()) {
      continue;
    }
    ++finite;
    const Vec3 v{p.x, p.y, p.z};
    for (int axis = 0; axis < 3; ++axis) {
      lo[axis] = std::min(lo[axis], v[axis]);
      hi[axis] = std::max(hi[axis], v[axis]);
    }
  }
  if (finite == 0) {
    throw Error(ErrorCode::EmptyFile, "no finite points to bound");
  }
  return CubeBounds::cubify(lo, hi);
}

CubeBounds discover_bounds(const PointFile& file) {
  if (file.point_count() == 0) {
    throw Error(ErrorCode::EmptyFile, "point file is empty");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf};
  Vec3 hi{-inf, -inf, -inf};
  constexpr std::uint64_t kStep = 1 << 20;
  std::vector<Point> buffer;
  for (std::uint64_t first = 0; first < file.point_count(); first += kStep) {
    buffer.clear();
    file.read(first, std::min(kStep, file.point_count() - first), buffer);
    for (const Point& p : buffer) {
      if (!p.finite()) {
        continue;
      }
      const Vec3 v{p.x, p.y, p.z};
      for (int axis = 0; axis < 3; ++axis) {
        lo[axis] = std::min(lo[axis], v[axis]);
        hi[axis] = std::max(hi[axis], v[axis]);
      }
    }
  }
  if (lo[0] > hi[0]) {
    throw Error(ErrorCode::EmptyFile, "point file has no finite points");
  }
  return CubeBounds::cubify(lo, hi);
}

CubeBounds discover_bounds(const fs::path& path) {
  if (detect_format(path) == FileFormat::Las) {
    const LasHeaderInfo info = las_open(path);
    if (info.point_count == 0) {
      throw Error(ErrorCode::EmptyFile, path.string() + " holds no points");
    }
    return info.bounds();
  }
  return discover_bounds(*open_sim(path));
}

std::size_t sanitize(std::vector<Point>& points, const std::optional<CubeBounds>& bounds) {
  const std::size_t rejected = std::erase_if(points, [](const Point& p) { return !p.finite(); });
  if (bounds) {
    const Vec3 hi = bounds->max();
    const std::array<float, 3> lo_f{float_at_least(bounds->min[0]), float_at_least(bounds->min[1]),
                                    float_at_least(bounds->min[2])};
    const std::array<float, 3> hi_f{float_at_most(hi[0]), float_at_most(hi[1]), float_at_most(hi[2])};
    for (Point& p : points) {
      p.x = std::clamp(p.x, lo_f[0], hi_f[0]);
      p.y = std::clamp(p.y, lo_f[1], hi_f[1]);
      p.z = std::clamp(p.z, lo_f[2], hi_f[2]);
    }
  }
  return rejected;
}

BatchSource::BatchSource(std::shared_ptr<const PointFile> file, std::size_t batch_size,
                         std::optional<CubeBounds> clamp_to)
    : file_(std::move(file)), batch_size_(batch_size == 0 ? 1 : batch_size), clamp_to_(clamp_to) {}

std::optional<Batch> BatchSource::read_batch() {
  while (cursor_ < file_->point_count()) {
    const std::uint64_t count = std::min<std::uint64_t>(batch_size_, file_->point_count() - cursor_);
    Batch batch;
    file_->read(cursor_, count, batch.points);
    cursor_ += count;
    rejected_ += sanitize(batch.points, clamp_to_);
    if (batch.points.empty()) {
      continue;
    }
    batch.source_offset = emitted_;
    emitted_ += batch.points.size();
    return batch;
  }
  return std::nullopt;
}

BatchReader::BatchReader(std::shared_ptr<const PointFile> file, BatchQueue& queue, ReaderOptions options)
    : file_(std::move(file)), queue_(queue), options_(options) {
  if (options_.batch_size == 0) {
    options_.batch_size = 1;
  }
  batch_count_ = (file_->point_count() + options_.batch_size - 1) / options_.batch_size;
  started_ = std::chrono::steady_clock::now();
  const unsigned workers = std::max(1u, options_.workers);
  if (batch_count_ == 0) {
    queue_.close();
    return;
  }
  auto active = std::make_shared<std::atomic<unsigned>>(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads_.emplace_back([this, active] {
      try {
        run_worker();
      } catch (...) {
        {
          std::lock_guard lock(error_mutex_);
          if (!error_) {
            error_ = std::current_exception();
          }
        }
        stop();
      }
      if (active->fetch_sub(1) == 1) {
        queue_.close();
      }
    });
  }
}

BatchReader::~BatchReader() {
  stop();
  join();
}

void BatchReader::join() {
  for (std::thread& t : threads_) {
    if (t.joinable()) {
      t.join();
    }
  }
}

void BatchReader::stop() {
  stop_.store(true);
  queue_.close();
  std::lock_guard lock(turn_mutex_);
  turn_cv_.notify_all();
}

void BatchReader::rethrow_if_failed() const {
  std::lock_guard lock(error_mutex_);
  if (error_) {
    std::rethrow_exception(error_);
  }
}

void BatchReader::run_worker() {
  for (;;) {
    if (stop_.load()) {
      return;
    }
    const std::uint64_t index = next_batch_.fetch_add(1);
    if (index >= batch_count_) {
      return;
    }
    const std::uint64_t first = index * options_.batch_size;
    const std::uint64_t count = std::min<std::uint64_t>(options_.batch_size, file_->point_count() - first);
    Batch batch;
    file_->read(first, count, batch.points);
    rejected_ += sanitize(batch.points, options_.clamp_to);

    std::unique_lock lock(turn_mutex_);
    turn_cv_.wait(lock, [&] { return next_to_push_ == index || stop_.load(); });
    if (stop_.load()) {
      return;
    }
    if (!batch.points.empty()) {
      batch.source_offset = emitted_;
      emitted_ += batch.points.size();
      if (options_.throttle_pps > 0.0) {
        const auto due = started_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(static_cast<double>(emitted_) /
                                                                      options_.throttle_pps));
        std::this_thread::sleep_until(due);
      }
      if (!queue_.push(std::move(batch))) {
        return;
      }
    }
    ++next_to_push_;
    turn_cv_.notify_all();
  }
}

std::uint64_t morton_interleave(std::uint32_t qx, std::uint32_t qy, std::uint32_t qz) {
  auto spread = [](std::uint32_t v) {
    std::uint64_t x = v & 0x1FFFFFu;
    x = (x | x << 32) & 0x001F00000000FFFFull;
    x = (x | x << 16) & 0x001F0000FF0000FFull;
    x = (x | x << 8) & 0x100F00F00F00F00Full;
    x = (x | x << 4) & 0x10C30C30C30C30C3ull;
    x = (x | x << 2) & 0x1249249249249249ull;
    return x;
  };
  return spread(qx) | (spread(qy) << 1) | (spread(qz) << 2);
}

std::uint64_t morton_key(const Point& p, const CubeBounds& bounds, unsigned bits_per_axis) {
  const std::uint32_t cells = 1u << std::min(bits_per_axis, kMortonBits);
  auto q = [&](double v, double lo) -> std::uint32_t {
    const double c = std::floor(cells * (v - lo) / bounds.size);
    if (!(c > 0.0)) {
      return 0;
    }
    return c >= cells - 1 ? cells - 1 : static_cast<std::uint32_t>(c);
  };
  return morton_interleave(q(p.x, bounds.min[0]), q(p.y, bounds.min[1]), q(p.z, bounds.min[2]));
}

void morton_order(std::vector<Point>& points, const CubeBounds& bounds) {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    keyed[i] = {morton_key(points[i], bounds), static_cast<std::uint32_t>(i)};
  }
  // Sorting (key, original index) pairs is a stable sort by key.
  std::sort(keyed.begin(), keyed.end());
  std::vector<Point> sorted(points.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    sorted[i] = points[keyed[i].second];
  }
  points = std::move(sorted);
}

void morton_sort(const fs::path& in, const fs::path& out, const std::optional<CubeBounds>& bounds) {
  std::vector<Point> points = sim_read_all(in);
  const CubeBounds cube = bounds ? *bounds : (points.empty() ? CubeBounds{} : bounds_of(points));
  morton_order(points, cube);
  sim_write(out, points);
}

}  // namespace lodstream
