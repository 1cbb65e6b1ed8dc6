#pragma once

#include <utility>
#include <vector>

#include "modkit/mod.hpp"
#include "modkit/sim.hpp"

namespace modkit {

/// Cone field-of-view about the robot heading, optionally occluded by walls.
struct FovSpec {
  double half_angle = 0.7853981633974483;  // 45 degrees
  double max_range = 8.0;                  // m
  bool occlusion = true;

  void validate() const {
    if (!(half_angle > 0.0) || half_angle > 3.14159265358979323846 + 1e-12)
      throw ConfigError("fov.half_angle", "must be in (0, pi]");
    if (!(max_range > 0.0)) throw ConfigError("fov.max_range", "must be > 0");
  }
};

using VisibilityMap = BoolMap;

/// A cell is visible iff its center lies within range, within the cone
/// about the robot yaw, and (with occlusion) no wall blocks the sight line.
VisibilityMap visibility_mask(const PoseStamped& pose, const FovSpec& fov, const GridSpec& spec,
                              const std::vector<Segment>& walls);

std::vector<CellIndex> visible_cells(const PoseStamped& pose, const FovSpec& fov,
                                     const GridSpec& spec, const std::vector<Segment>& walls);

/// Keep a detection iff its cell is visible from the robot pose
/// interpolated at the detection timestamp. Detections outside the grid
/// have no cell and are dropped.
std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         const RobotPath& poses, const FovSpec& fov,
                                         const GridSpec& spec,
                                         const std::vector<Segment>& walls);

/// FOV-limited observation-accumulation baseline: build the MoD from
/// FOV-filtered detections over [t0, t0 + horizon). The visibility map is
/// the union of visible cells over all pose samples in the window; cells
/// never observed come back invalid in every descriptor.
std::pair<DescriptorMaps, VisibilityMap> local_stefmap(std::span<const Detection> detections,
                                                       const RobotPath& poses,
                                                       const FovSpec& fov,
                                                       const std::vector<Segment>& walls,
                                                       double t0, double horizon,
                                                       const GridSpec& spec,
                                                       const ModParams& params);

/// Zero out and invalidate everything outside the visibility map.
DescriptorMaps crop_local(const DescriptorMaps& maps, const VisibilityMap& vis);

}  // namespace modkit
