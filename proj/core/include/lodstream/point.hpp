#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace lodstream {

// Full-precision sample, also the on-disk SIM record and the chunk slot layout.
// Voxels reuse this record with coordinates quantized to a cell center.
struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  std::uint8_t a = 255;

  // Color as r | g<<8 | b<<16 | a<<24, i.e. the in-memory byte order.
  std::uint32_t rgba() const {
    return std::uint32_t{r} | (std::uint32_t{g} << 8) | (std::uint32_t{b} << 16) |
           (std::uint32_t{a} << 24);
  }
  void set_rgba(std::uint32_t c) {
    r = static_cast<std::uint8_t>(c);
    g = static_cast<std::uint8_t>(c >> 8);
    b = static_cast<std::uint8_t>(c >> 16);
    a = static_cast<std::uint8_t>(c >> 24);
  }

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

static_assert(sizeof(Point) == 16, "Point must match the 16-byte SIM record");

// Bitwise equality; distinguishes -0.0f from 0.0f on purpose.
inline bool same_bits(const Point& a, const Point& b) { return std::memcmp(&a, &b, sizeof(Point)) == 0; }

inline bool bitwise_less(const Point& a, const Point& b) { return std::memcmp(&a, &b, sizeof(Point)) < 0; }

}  // namespace lodstream
