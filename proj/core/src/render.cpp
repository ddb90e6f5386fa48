#include "lodstream/render.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "lodstream/error.hpp"

namespace lodstream {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double length(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalize(const Vec3& a) {
  const double len = length(a);
  return {a[0] / len, a[1] / len, a[2] / len};
}

std::array<Vec3, 8> corners(const CubeBounds& b) {
  std::array<Vec3, 8> out{};
  for (int i = 0; i < 8; ++i) {
    out[i] = {b.min[0] + (i & 1 ? b.size : 0.0), b.min[1] + (i & 2 ? b.size : 0.0),
              b.min[2] + (i & 4 ? b.size : 0.0)};
  }
  return out;
}

}  // namespace

void Camera::validate() const {
  if (!(near > 0.0) || !(far > near)) {
    throw Error(ErrorCode::InvalidArgument, "camera needs 0 < near < far");
  }
  if (!(vertical_fov_deg > 0.0) || !(vertical_fov_deg < 180.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera field of view must be in (0, 180) degrees");
  }
  if (width == 0 || height == 0) {
    throw Error(ErrorCode::InvalidArgument, "viewport must be at least 1x1");
  }
  const Vec3 forward = sub(target, position);
  if (!(length(forward) > 0.0) || !(length(cross(forward, up)) > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera target must differ from position and not be parallel to up");
  }
}

Projector::Projector(const Camera& camera) : camera_(camera) {
  camera.validate();
  forward_ = normalize(sub(camera.target, camera.position));
  right_ = normalize(cross(forward_, camera.up));
  up_ = cross(right_, forward_);
  tan_half_y_ = std::tan(camera.vertical_fov_deg * std::numbers::pi / 360.0);
  tan_half_x_ = tan_half_y_ * static_cast<double>(camera.width) / static_cast<double>(camera.height);
}

Vec3 Projector::to_view(const Vec3& world) const {
  const Vec3 d = sub(world, camera_.position);
  return {dot(d, right_), dot(d, up_), dot(d, forward_)};
}

std::array<double, 2> Projector::to_pixel(const Vec3& v) const {
  const double ndc_x = v[0] / (v[2] * tan_half_x_);
  const double ndc_y = v[1] / (v[2] * tan_half_y_);
  return {(0.5 + 0.5 * ndc_x) * camera_.width, (0.5 - 0.5 * ndc_y) * camera_.height};
}

std::optional<PixelSample> Projector::project(const Point& p) const {
  const Vec3 v = to_view({p.x, p.y, p.z});
  if (!(v[2] > camera_.near && v[2] < camera_.far)) {
    return std::nullopt;
  }
  const auto [px, py] = to_pixel(v);
  if (!(px >= 0.0 && px < camera_.width && py >= 0.0 && py < camera_.height)) {
    return std::nullopt;
  }
  return PixelSample{static_cast<std::uint32_t>(px), static_cast<std::uint32_t>(py), static_cast<float>(v[2])};
}

bool Projector::intersects(const CubeBounds& bounds) const {
  std::array<Vec3, 8> view{};
  const auto world = corners(bounds);
  for (int i = 0; i < 8; ++i) {
    view[i] = to_view(world[i]);
  }
  // The margin only shrinks for boxes nested inside this one, so a child is
  // never kept when its parent was culled.
  double magnitude = camera_.far;
  for (int axis = 0; axis < 3; ++axis) {
    magnitude = std::max(magnitude, std::abs(camera_.position[axis]) + camera_.far);
  }
  for (const Vec3& corner : world) {
    for (double c : corner) {
      magnitude = std::max(magnitude, std::abs(c));
    }
  }
  const double eps = 1e-9 * magnitude;
  auto all_outside = [&](auto&& distance) {
    return std::all_of(view.begin(), view.end(), [&](const Vec3& v) { return distance(v) > eps; });
  };
  return !(all_outside([&](const Vec3& v) { return camera_.near - v[2]; }) ||
           all_outside([&](const Vec3& v) { return v[2] - camera_.far; }) ||
           all_outside([&](const Vec3& v) { return v[0] - v[2] * tan_half_x_; }) ||
           all_outside([&](const Vec3& v) { return -v[0] - v[2] * tan_half_x_; }) ||
           all_outside([&](const Vec3& v) { return v[1] - v[2] * tan_half_y_; }) ||
           all_outside([&](const Vec3& v) { return -v[1] - v[2] * tan_half_y_; }));
}

double Projector::screen_size(const CubeBounds& bounds) const {
  double lo_x = kInfinitePx, lo_y = kInfinitePx, hi_x = -kInfinitePx, hi_y = -kInfinitePx;
  for (const Vec3& corner : corners(bounds)) {
    const Vec3 v = to_view(corner);
    if (v[2] <= camera_.near) {
      return kInfinitePx;
    }
    const auto [px, py] = to_pixel(v);
    lo_x = std::min(lo_x, px);
    hi_x = std::max(hi_x, px);
    lo_y = std::min(lo_y, py);
    hi_y = std::max(hi_y, py);
  }
  return std::max(hi_x - lo_x, hi_y - lo_y);
}

double screen_size(const CubeBounds& bounds, const Camera& camera) { return Projector(camera).screen_size(bounds); }

Camera overview_camera(const CubeBounds& bounds, std::uint32_t width, std::uint32_t height) {
  Camera camera;
  camera.width = width;
  camera.height = height;
  camera.up = {0.0, 0.0, 1.0};
  camera.target = bounds.center();
  // Distance at which the bounding sphere fits the vertical field of view.
  const double radius = bounds.size * std::sqrt(3.0) * 0.5;
  const double distance = 1.1 * radius / std::sin(camera.vertical_fov_deg * std::numbers::pi / 360.0);
  const Vec3 dir = normalize({0.0, -2.0, 1.0});
  for (int axis = 0; axis < 3; ++axis) {
    camera.position[axis] = camera.target[axis] + distance * dir[axis];
  }
  camera.near = std::max(1e-6, (distance - radius) * 0.5);
  camera.far = distance + 2.0 * radius;
  return camera;
}

Framebuffer::Framebuffer(std::uint32_t width, std::uint32_t height)
    : width_(width), height_(height), cells_(std::size_t{width} * height, kBackground) {}

std::uint64_t Framebuffer::pack(float depth, std::uint32_t rgba) {
  return (std::uint64_t{std::bit_cast<std::uint32_t>(depth)} << 32) | rgba;
}

void Framebuffer::combine(std::uint32_t x, std::uint32_t y, std::uint64_t value) {
  std::atomic_ref<std::uint64_t> cell(cells_[std::size_t{y} * width_ + x]);
  std::uint64_t current = cell.load(std::memory_order_relaxed);
  while (value < current && !cell.compare_exchange_weak(current, value, std::memory_order_relaxed)) {
  }
}

std::size_t Framebuffer::covered_pixels() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](std::uint64_t c) { return c != kBackground; }));
}

VisibleSet select_visible(const Octree& tree, const Camera& camera, double threshold_px) {
  VisibleSet visible;
  const Node* root = tree.root();
  if (root == nullptr) {
    return visible;
  }
  const Projector projector(camera);
  std::vector<const Node*> stack{root};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    if (!projector.intersects(node->bounds)) {
      continue;
    }
    if (node->is_inner() && projector.screen_size(node->bounds) > threshold_px) {
      for (auto it = node->children.rbegin(); it != node->children.rend(); ++it) {
        stack.push_back(*it);
      }
      continue;
    }
    visible.nodes.push_back(node);
  }
  return visible;
}

Framebuffer rasterize(const VisibleSet& visible, const Camera& camera, RenderStats* stats) {
  const auto started = std::chrono::steady_clock::now();
  const Projector projector(camera);
  Framebuffer fb(camera.width, camera.height);

  // One task per chunk, so large nodes spread across workers.
  struct ChunkTask {
    const Chunk* chunk;
    std::uint32_t count;
  };
  std::vector<ChunkTask> tasks;
  RenderStats local;
  local.nodes = visible.nodes.size();
  for (const Node* node : visible.nodes) {
    (node->is_leaf() ? local.points : local.voxels) += node->count;
    std::uint32_t remaining = node->count;
    for (const Chunk* chunk = node->chunk_head; chunk != nullptr && remaining > 0; chunk = chunk->next) {
      const std::uint32_t n = std::min(remaining, chunk->capacity);
      tasks.push_back({chunk, n});
      remaining -= n;
    }
  }

  std::atomic<std::uint64_t> processed{0};
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, tasks.size()), [&](const tbb::blocked_range<std::size_t>& range) {
    std::uint64_t seen = 0;
    for (std::size_t t = range.begin(); t != range.end(); ++t) {
      for (const Point& p : tasks[t].chunk->slots().first(tasks[t].count)) {
        if (const auto hit = projector.project(p)) {
          fb.combine(hit->x, hit->y, Framebuffer::pack(hit->depth, p.rgba()));
        }
      }
      seen += tasks[t].count;
    }
    processed.fetch_add(seen, std::memory_order_relaxed);
  });

  if (stats != nullptr) {
    local.samples_processed = processed.load();
    local.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    *stats = local;
  }
  return fb;
}

Framebuffer brute_force_render(std::span<const Point> points, const Camera& camera) {
  const Projector projector(camera);
  Framebuffer fb(camera.width, camera.height);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, points.size(), 16384),
                    [&](const tbb::blocked_range<std::size_t>& range) {
                      for (std::size_t i = range.begin(); i != range.end(); ++i) {
                        if (const auto hit = projector.project(points[i])) {
                          fb.combine(hit->x, hit->y, Framebuffer::pack(hit->depth, points[i].rgba()));
                        }
                      }
                    });
  return fb;
}

std::size_t draw_node_boxes(Framebuffer& fb, const VisibleSet& visible, const Camera& camera) {
  static constexpr std::array<std::uint32_t, 8> kPalette{0xFF0000FFu, 0xFF00FF00u, 0xFFFF0000u, 0xFF00FFFFu,
                                                         0xFFFF00FFu, 0xFFFFFF00u, 0xFF0080FFu, 0xFFFFFFFFu};
  const Projector projector(camera);
  std::size_t written = 0;
  for (const Node* node : visible.nodes) {
    const std::uint64_t value = Framebuffer::pack(0.0f, kPalette[node->level % kPalette.size()]);
    const auto world = corners(node->bounds);
    for (int i = 0; i < 8; ++i) {
      for (int bit = 1; bit < 8; bit <<= 1) {
        if (i & bit) {
          continue;
        }
        Vec3 a = projector.to_view(world[i]);
        Vec3 b = projector.to_view(world[i | bit]);
        const double near = camera.near;
        if (a[2] < near && b[2] < near) {
          continue;
        }
        if (a[2] < near || b[2] < near) {
          Vec3& behind = a[2] < near ? a : b;
          const Vec3& front = a[2] < near ? b : a;
          const double t = (near - behind[2]) / (front[2] - behind[2]);
          for (int axis = 0; axis < 3; ++axis) {
            behind[axis] += t * (front[axis] - behind[axis]);
          }
          behind[2] = near;
        }
        const auto pa = projector.to_pixel(a);
        const auto pb = projector.to_pixel(b);
        const double steps = std::ceil(std::max(std::abs(pb[0] - pa[0]), std::abs(pb[1] - pa[1])));
        if (!(steps < 1e6)) {
          continue;
        }
        for (double s = 0.0; s <= steps; s += 1.0) {
          const double t = steps > 0.0 ? s / steps : 0.0;
          const double x = std::floor(pa[0] + t * (pb[0] - pa[0]));
          const double y = std::floor(pa[1] + t * (pb[1] - pa[1]));
          if (x < 0.0 || y < 0.0 || x >= fb.width() || y >= fb.height()) {
            continue;
          }
          const auto px = static_cast<std::uint32_t>(x);
          const auto py = static_cast<std::uint32_t>(y);
          if (fb.at(px, py) != value) {
            fb.overwrite(px, py, value);
            ++written;
          }
        }
      }
    }
  }
  return written;
}

std::vector<std::uint8_t> encode_ppm(const Framebuffer& fb, Rgb background) {
  const std::string header = "P6\n" + std::to_string(fb.width()) + " " + std::to_string(fb.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + std::size_t{3} * fb.width() * fb.height());
  for (std::uint64_t cell : fb.cells()) {
    if (cell == Framebuffer::kBackground) {
      out.insert(out.end(), {background.r, background.g, background.b});
    } else {
      out.insert(out.end(), {static_cast<std::uint8_t>(cell), static_cast<std::uint8_t>(cell >> 8),
                             static_cast<std::uint8_t>(cell >> 16)});
    }
  }
  return out;
}

void write_image(const Framebuffer& fb, const std::filesystem::path& path, Rgb background) {
  const std::vector<std::uint8_t> bytes = encode_ppm(fb, background);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
}

}  // namespace lodstream
