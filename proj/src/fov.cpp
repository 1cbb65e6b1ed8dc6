#include "modkit/fov.hpp"

#include <cmath>

namespace modkit {

namespace {

// Signed smallest difference between two angles, in (-pi, pi].
double angle_diff(double a, double b) {
  double d = wrap_angle(a - b);
  if (d > 3.14159265358979323846) d -= kTwoPi;
  return d;
}

bool cell_visible(const PoseStamped& pose, double yaw, const FovSpec& fov, const GridSpec& spec,
                  const std::vector<Segment>& walls, int row, int col) {
  const Vec2 center = cell_center(spec, row, col);
  const Vec2 to_cell = center - Vec2{pose.x, pose.y};
  const double dist = to_cell.norm();
  if (dist > fov.max_range) return false;
  if (dist > 1e-12) {
    const double bearing = std::atan2(to_cell.y, to_cell.x);
    if (std::abs(angle_diff(bearing, yaw)) > fov.half_angle) return false;
  }
  if (fov.occlusion && segment_blocked(Vec2{pose.x, pose.y}, center, walls)) return false;
  return true;
}

}  // namespace

VisibilityMap visibility_mask(const PoseStamped& pose, const FovSpec& fov, const GridSpec& spec,
                              const std::vector<Segment>& walls) {
  fov.validate();
  VisibilityMap vis(spec);
  const double yaw = pose.yaw();
  const int n = spec.height * spec.width;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const int r = i / spec.width, c = i % spec.width;
    if (cell_visible(pose, yaw, fov, spec, walls, r, c)) vis.v[i] = 1;
  }
  return vis;
}

std::vector<CellIndex> visible_cells(const PoseStamped& pose, const FovSpec& fov,
                                     const GridSpec& spec,
                                     const std::vector<Segment>& walls) {
  const VisibilityMap vis = visibility_mask(pose, fov, spec, walls);
  std::vector<CellIndex> out;
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c)
      if (vis.at(r, c)) out.push_back({r, c});
  return out;
}

std::vector<Detection> filter_detections(std::span<const Detection> detections,
                                         const RobotPath& poses, const FovSpec& fov,
                                         const GridSpec& spec,
                                         const std::vector<Segment>& walls) {
  fov.validate();
  std::vector<Detection> out;
  for (const Detection& d : detections) {
    const PoseStamped pose = interpolate_pose(poses, d.t);  // throws TimeOutOfRange
    if (!spec.contains(d.x, d.y)) continue;
    const CellIndex cell = world_to_cell(spec, d.x, d.y);
    if (cell_visible(pose, pose.yaw(), fov, spec, walls, cell.row, cell.col))
      out.push_back(d);
  }
  return out;
}

std::pair<DescriptorMaps, VisibilityMap> local_stefmap(std::span<const Detection> detections,
                                                       const RobotPath& poses,
                                                       const FovSpec& fov,
                                                       const std::vector<Segment>& walls,
                                                       double t0, double horizon,
                                                       const GridSpec& spec,
                                                       const ModParams& params) {
  std::vector<Detection> window;
  for (const Detection& d : detections)
    if (d.t >= t0 && d.t < t0 + horizon) window.push_back(d);
  const std::vector<Detection> seen = filter_detections(window, poses, fov, spec, walls);

  VisibilityMap vis(spec);
  for (const PoseStamped& p : poses.poses) {
    if (p.t < t0 || p.t >= t0 + horizon) continue;
    const VisibilityMap m = visibility_mask(p, fov, spec, walls);
    for (std::size_t i = 0; i < vis.v.size(); ++i) vis.v[i] |= m.v[i];
  }

  DescriptorMaps maps = build_mod(seen, t0, horizon, spec, params);
  return {crop_local(maps, vis), vis};
}

DescriptorMaps crop_local(const DescriptorMaps& maps, const VisibilityMap& vis) {
  if (maps.spec != vis.spec) throw SpecMismatch("crop_local: spec mismatch");
  DescriptorMaps out = maps;
  for (std::size_t i = 0; i < vis.v.size(); ++i) {
    if (vis.v[i]) continue;
    out.flow.v[i] = 0.0;
    out.dir_cos.v[i] = 0.0;
    out.dir_sin.v[i] = 0.0;
    out.entropy.v[i] = 0.0;
    out.dir_valid.v[i] = 0;
    out.flow_valid.v[i] = 0;
  }
  return out;
}

}  // namespace modkit
