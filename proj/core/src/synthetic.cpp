#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lodstream/error.hpp"
#include "lodstream/io.hpp"

namespace lodstream {

namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

}  // namespace

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "uniform") {
    return SyntheticKind::Uniform;
  }
  if (name == "surface") {
    return SyntheticKind::Surface;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown synthetic kind '" + name + "', expected uniform or surface");
}

std::vector<Point> make_synthetic(SyntheticKind kind, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point> points;
  points.reserve(count);

  for (std::size_t i = 0; i < count; ++i) {
    Point p;
    if (kind == SyntheticKind::Uniform) {
      const double x = 100.0 * unit(rng);
      const double y = 100.0 * unit(rng);
      const double z = 100.0 * unit(rng);
      p.x = static_cast<float>(x);
      p.y = static_cast<float>(y);
      p.z = static_cast<float>(z);
      p.r = to_u8(x * 2.55);
      p.g = to_u8(y * 2.55);
      p.b = to_u8(z * 2.55);
    } else if (unit(rng) < 0.7) {
      // Rolling terrain.
      const double x = 100.0 * unit(rng);
      const double y = 100.0 * unit(rng);
      const double z = 20.0 + 8.0 * std::sin(x / 9.0) * std::cos(y / 7.0) + 0.05 * unit(rng);
      p.x = static_cast<float>(x);
      p.y = static_cast<float>(y);
      p.z = static_cast<float>(z);
      p.r = to_u8(60.0 + 6.0 * (z - 12.0));
      p.g = to_u8(110.0 + 5.0 * (z - 12.0));
      p.b = 50;
    } else {
      // Sphere shell floating above the terrain.
      const double u = 2.0 * unit(rng) - 1.0;
      const double phi = 2.0 * std::numbers::pi * unit(rng);
      const double s = std::sqrt(1.0 - u * u);
      const double nx = s * std::cos(phi);
      const double ny = s * std::sin(phi);
      p.x = static_cast<float>(50.0 + 20.0 * nx);
      p.y = static_cast<float>(50.0 + 20.0 * ny);
      p.z = static_cast<float>(55.0 + 20.0 * u);
      p.r = to_u8(180.0 + 70.0 * nx);
      p.g = to_u8(60.0 + 50.0 * ny);
      p.b = to_u8(90.0 + 80.0 * u);
    }
    p.a = 255;
    points.push_back(p);
  }
  return points;
}

}  // namespace lodstream
