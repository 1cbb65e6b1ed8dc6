#pragma once

#include <cmath>
#include <optional>

namespace modkit {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

/// Parameter t in [0,1] along [p,q] of the first intersection with `wall`,
/// or nullopt if the segments do not cross. Collinear overlap reports t=0.
inline std::optional<double> segment_intersection(const Vec2& p, const Vec2& q,
                                                  const Segment& wall) {
  const Vec2 r = q - p;
  const Vec2 s = wall.b - wall.a;
  const double denom = r.cross(s);
  const Vec2 pa = wall.a - p;
  if (std::abs(denom) < 1e-15) {
    if (std::abs(pa.cross(r)) > 1e-12) return std::nullopt;
    // Collinear: treat any overlap as an immediate hit.
    const double rr = r.dot(r);
    if (rr < 1e-30) return std::nullopt;
    const double t0 = pa.dot(r) / rr;
    const double t1 = (wall.b - p).dot(r) / rr;
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    if (hi < 0.0 || lo > 1.0) return std::nullopt;
    return std::max(0.0, lo);
  }
  const double t = pa.cross(s) / denom;
  const double u = pa.cross(r) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

/// True if the open segment [p,q] crosses any wall in the range.
template <typename Walls>
bool segment_blocked(const Vec2& p, const Vec2& q, const Walls& walls) {
  for (const auto& w : walls)
    if (segment_intersection(p, q, w)) return true;
  return false;
}

}  // namespace modkit
