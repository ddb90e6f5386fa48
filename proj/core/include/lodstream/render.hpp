#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lodstream/octree.hpp"

namespace lodstream {

inline constexpr double kDefaultLodThresholdPx = 128.0;
inline constexpr double kInfinitePx = std::numeric_limits<double>::infinity();

// Pinhole camera. View space has x to the right, y up and z as the distance
// along the viewing direction.
struct Camera {
  Vec3 position{0.0, 0.0, -1.0};
  Vec3 target{0.0, 0.0, 0.0};
  Vec3 up{0.0, 1.0, 0.0};
  double vertical_fov_deg = 60.0;
  double near = 0.1;
  double far = 10'000.0;
  std::uint32_t width = 800;
  std::uint32_t height = 600;

  // Throws Error{InvalidArgument} for degenerate parameters.
  void validate() const;
};

struct PixelSample {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  float depth = 0.0f;
};

class Projector {
 public:
  explicit Projector(const Camera& camera);

  const Camera& camera() const { return camera_; }
  Vec3 to_view(const Vec3& world) const;
  // Pixel coordinates (not floored) of a view-space position with z > 0.
  std::array<double, 2> to_pixel(const Vec3& view) const;
  // Pixel hit for a sample inside the viewport with depth in (near, far).
  std::optional<PixelSample> project(const Point& p) const;

  // Conservative: false only if all 8 corners lie outside one frustum plane.
  bool intersects(const CubeBounds& bounds) const;
  // Larger side of the pixel-space bounding rectangle of the 8 corners;
  // kInfinitePx when a corner is at or behind the near plane.
  double screen_size(const CubeBounds& bounds) const;

 private:
  Camera camera_;
  Vec3 right_{};
  Vec3 up_{};
  Vec3 forward_{};
  double tan_half_y_ = 1.0;
  double tan_half_x_ = 1.0;
};

double screen_size(const CubeBounds& bounds, const Camera& camera);

// Looks at the cube center from above and in front, with z up, far enough
// that the whole cube fits the vertical field of view.
Camera overview_camera(const CubeBounds& bounds, std::uint32_t width = 800, std::uint32_t height = 600);

/// Per-pixel (depth, color) words combined with an atomic 64-bit minimum.
/// Depth sits in the high half as raw float bits, which order like the floats
/// for positive values; equal depths resolve to the lower color.
class Framebuffer {
 public:
  static constexpr std::uint64_t kBackground = ~std::uint64_t{0};

  Framebuffer(std::uint32_t width, std::uint32_t height);

  static std::uint64_t pack(float depth, std::uint32_t rgba);

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::span<const std::uint64_t> cells() const { return cells_; }

  std::uint64_t at(std::uint32_t x, std::uint32_t y) const { return cells_[std::size_t{y} * width_ + x]; }
  bool is_background(std::uint32_t x, std::uint32_t y) const { return at(x, y) == kBackground; }
  std::uint32_t color_at(std::uint32_t x, std::uint32_t y) const { return static_cast<std::uint32_t>(at(x, y)); }

  // Safe to call concurrently.
  void combine(std::uint32_t x, std::uint32_t y, std::uint64_t value);
  void overwrite(std::uint32_t x, std::uint32_t y, std::uint64_t value) { cells_[std::size_t{y} * width_ + x] = value; }

  std::size_t covered_pixels() const;

  friend bool operator==(const Framebuffer&, const Framebuffer&) = default;

 private:
  std::uint32_t width_;
  std::uint32_t height_;
  std::vector<std::uint64_t> cells_;
};

struct VisibleSet {
  std::vector<const Node*> nodes;
};

VisibleSet select_visible(const Octree& tree, const Camera& camera, double threshold_px = kDefaultLodThresholdPx);

struct RenderStats {
  std::size_t nodes = 0;
  std::uint64_t points = 0;
  std::uint64_t voxels = 0;
  // Samples read while walking chunk lists.
  std::uint64_t samples_processed = 0;
  double duration_ms = 0.0;
};

Framebuffer rasterize(const VisibleSet& visible, const Camera& camera, RenderStats* stats = nullptr);
Framebuffer brute_force_render(std::span<const Point> points, const Camera& camera);

// Draws visible node boxes as 1-pixel wireframes on top of the image.
// Returns the number of pixels written.
std::size_t draw_node_boxes(Framebuffer& fb, const VisibleSet& visible, const Camera& camera);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
};

// Binary PPM (P6), top row first.
void write_image(const Framebuffer& fb, const std::filesystem::path& path, Rgb background = {});
std::vector<std::uint8_t> encode_ppm(const Framebuffer& fb, Rgb background = {});

}  // namespace lodstream
