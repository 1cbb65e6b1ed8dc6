#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "modkit/errors.hpp"
#include "modkit/geometry.hpp"

namespace modkit {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Wrap an angle to [0, 2*pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;  // fmod residue can round up to 2*pi exactly
  return r;
}

/// Allocentric 2D grid geometry. Row 0 is the cell row at origin_y,
/// column 0 at origin_x; rows advance along +y, columns along +x.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 0.30;
  int width = 1;
  int height = 1;

  bool operator==(const GridSpec&) const = default;

  std::size_t num_cells() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool contains(double x, double y) const {
    const double cx = (x - origin_x) / cell_size;
    const double cy = (y - origin_y) / cell_size;
    return cx >= 0.0 && cy >= 0.0 && std::floor(cx) < width && std::floor(cy) < height;
  }
  void validate() const {
    if (!(cell_size > 0.0)) throw ConfigError("grid.cell_size", "must be > 0");
    if (width < 1) throw ConfigError("grid.width", "must be >= 1");
    if (height < 1) throw ConfigError("grid.height", "must be >= 1");
  }
};

struct CellIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CellIndex&) const = default;
};

/// Floor-based world-to-cell mapping; throws OutOfBounds outside the grid.
CellIndex world_to_cell(const GridSpec& spec, double x, double y);

/// Center of a cell in world coordinates.
inline Vec2 cell_center(const GridSpec& spec, int row, int col) {
  return {spec.origin_x + (col + 0.5) * spec.cell_size,
          spec.origin_y + (row + 0.5) * spec.cell_size};
}

/// Orientation bin for an angle: bins uniformly partition [0, 2*pi).
/// Total on all finite reals; the wrap seam is clamped into the last bin.
inline int bin_of(double alpha, int bins) {
  int b = static_cast<int>(std::floor(wrap_angle(alpha) * bins / kTwoPi));
  if (b >= bins) b = bins - 1;
  if (b < 0) b = 0;
  return b;
}

/// Timestamped world-frame observation of one moving agent.
struct Detection {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double alpha = 0.0;   // motion direction, wrapped to [0, 2*pi)
  int agent_id = -1;    // -1: unknown / discarded identity
};

/// 7-DoF stamped robot pose (position + unit quaternion).
struct PoseStamped {
  double t = 0.0;
  double x = 0.0, y = 0.0, z = 0.0;
  double qx = 0.0, qy = 0.0, qz = 0.0, qw = 1.0;

  double yaw() const {
    return std::atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz));
  }
  double quat_norm() const { return std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw); }
};

inline PoseStamped pose_from_yaw(double t, double x, double y, double yaw) {
  PoseStamped p;
  p.t = t;
  p.x = x;
  p.y = y;
  p.qz = std::sin(0.5 * yaw);
  p.qw = std::cos(0.5 * yaw);
  return p;
}

/// Scalar field over a grid, row-major.
struct FloatMap {
  GridSpec spec;
  std::vector<double> v;

  FloatMap() = default;
  explicit FloatMap(const GridSpec& s, double fill = 0.0)
      : spec(s), v(s.num_cells(), fill) {}

  double& at(int row, int col) { return v[static_cast<std::size_t>(row) * spec.width + col]; }
  double at(int row, int col) const { return v[static_cast<std::size_t>(row) * spec.width + col]; }

  bool operator==(const FloatMap&) const = default;
};

/// Boolean field over a grid, row-major.
struct BoolMap {
  GridSpec spec;
  std::vector<std::uint8_t> v;

  BoolMap() = default;
  explicit BoolMap(const GridSpec& s, bool fill = false)
      : spec(s), v(s.num_cells(), fill ? 1 : 0) {}

  bool at(int row, int col) const {
    return v[static_cast<std::size_t>(row) * spec.width + col] != 0;
  }
  void set(int row, int col, bool val) {
    v[static_cast<std::size_t>(row) * spec.width + col] = val ? 1 : 0;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : v) n += b != 0;
    return n;
  }

  bool operator==(const BoolMap&) const = default;
};

/// Per-cell orientation-count histograms over a grid.
class HistogramGrid {
 public:
  HistogramGrid() = default;
  HistogramGrid(const GridSpec& spec, int bins);

  const GridSpec& spec() const { return spec_; }
  int bins() const { return bins_; }

  std::uint32_t count(int row, int col, int bin) const { return counts_[index(row, col, bin)]; }
  std::uint32_t& count(int row, int col, int bin) { return counts_[index(row, col, bin)]; }
  std::span<const std::uint32_t> cell_counts(int row, int col) const {
    return {counts_.data() + index(row, col, 0), static_cast<std::size_t>(bins_)};
  }

  /// Accumulate one detection; returns the number skipped (0 or 1).
  /// Out-of-bounds detections are counted and skipped, never fatal.
  std::size_t accumulate(const Detection& d);

  /// Accumulate a batch; returns the skipped-detection tally.
  std::size_t accumulate(std::span<const Detection> ds);

  std::uint64_t total() const;

  bool operator==(const HistogramGrid&) const = default;

  const std::vector<std::uint32_t>& raw() const { return counts_; }

 private:
  std::size_t index(int row, int col, int bin) const {
    return (static_cast<std::size_t>(row) * spec_.width + col) * bins_ + bin;
  }

  GridSpec spec_;
  int bins_ = 8;
  std::vector<std::uint32_t> counts_;
};

/// Element-wise sum of two histogram grids; throws SpecMismatch unless
/// the grids share spec and bin count.
HistogramGrid merge(const HistogramGrid& a, const HistogramGrid& b);

}  // namespace modkit
