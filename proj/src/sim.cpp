#include "modkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modkit {

namespace {

constexpr double kMinDisplacement = 1e-4;  // m; below this no detection is emitted
constexpr double kWallBackoff = 1e-6;      // m; stop short of the hit point

Vec2 clip_against_walls(const Vec2& from, const Vec2& to, const std::vector<Segment>& walls) {
  double t_hit = std::numeric_limits<double>::infinity();
  for (const Segment& w : walls) {
    if (auto t = segment_intersection(from, to, w)) t_hit = std::min(t_hit, *t);
  }
  if (!std::isfinite(t_hit)) return to;
  const Vec2 d = to - from;
  const double len = d.norm();
  if (len < 1e-15) return from;
  const double t_back = std::max(0.0, t_hit - kWallBackoff / len);
  return from + d * t_back;
}

void advance_target(AgentState& a, const AgentSpec& spec) {
  const std::size_t n = spec.waypoints.size();
  switch (spec.pattern) {
    case MotionPattern::waypoint_loop:
      a.target = (a.target + 1) % n;
      break;
    case MotionPattern::l_path:
      if (a.step_dir > 0 && a.target + 1 >= n) a.step_dir = -1;
      else if (a.step_dir < 0 && a.target == 0) a.step_dir = 1;
      a.target = a.target + a.step_dir;
      break;
    case MotionPattern::queue_then_go:
      a.target = (a.target + 1) % n;
      a.dwell_left = spec.dwell_time;
      break;
  }
}

}  // namespace

void validate_scene(const Scene& scene) {
  for (std::size_t i = 0; i < scene.walls.size(); ++i) {
    const Segment& w = scene.walls[i];
    if (!std::isfinite(w.a.x) || !std::isfinite(w.a.y) || !std::isfinite(w.b.x) ||
        !std::isfinite(w.b.y))
      throw ConfigError("walls[" + std::to_string(i) + "]", "endpoints must be finite");
  }
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const AgentSpec& a = scene.agents[i];
    const std::string base = "agents[" + std::to_string(i) + "]";
    if (!(a.speed > 0.0)) throw ConfigError(base + ".speed", "must be > 0");
    if (a.waypoints.size() < 2) throw ConfigError(base + ".waypoints", "need at least 2");
    if (a.heading_noise_sigma < 0.0)
      throw ConfigError(base + ".heading_noise_sigma", "must be >= 0");
    if (a.dwell_time < 0.0) throw ConfigError(base + ".dwell_time", "must be >= 0");
    if (a.start_offset < 0.0) throw ConfigError(base + ".start_offset", "must be >= 0");
  }
}

void validate_robot_path(const RobotPath& path) {
  if (path.poses.empty()) throw ConfigError("poses", "robot path must be non-empty");
  for (std::size_t i = 0; i < path.poses.size(); ++i) {
    const PoseStamped& p = path.poses[i];
    const std::string base = "poses[" + std::to_string(i) + "]";
    if (std::abs(p.quat_norm() - 1.0) > 1e-6)
      throw ConfigError(base, "quaternion must have unit norm");
    if (i > 0 && !(p.t > path.poses[i - 1].t))
      throw ConfigError(base + ".t", "timestamps must strictly increase");
  }
}

PoseStamped interpolate_pose(const RobotPath& path, double t, bool clamp) {
  const auto& ps = path.poses;
  if (ps.empty()) throw TimeOutOfRange("empty robot path");
  if (t < ps.front().t || t > ps.back().t) {
    if (!clamp)
      throw TimeOutOfRange("time " + std::to_string(t) + " outside robot path span");
    PoseStamped p = t < ps.front().t ? ps.front() : ps.back();
    p.t = t;
    return p;
  }
  auto it = std::lower_bound(ps.begin(), ps.end(), t,
                             [](const PoseStamped& p, double tt) { return p.t < tt; });
  if (it == ps.begin()) return ps.front();
  const PoseStamped& b = *it;
  const PoseStamped& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);

  PoseStamped out;
  out.t = t;
  out.x = a.x + u * (b.x - a.x);
  out.y = a.y + u * (b.y - a.y);
  out.z = a.z + u * (b.z - a.z);

  // Quaternion slerp, shortest arc.
  double dot = a.qx * b.qx + a.qy * b.qy + a.qz * b.qz + a.qw * b.qw;
  double sx = b.qx, sy = b.qy, sz = b.qz, sw = b.qw;
  if (dot < 0.0) {
    dot = -dot;
    sx = -sx; sy = -sy; sz = -sz; sw = -sw;
  }
  double wa, wb;
  if (dot > 1.0 - 1e-10) {
    wa = 1.0 - u;
    wb = u;
  } else {
    const double theta = std::acos(std::min(1.0, dot));
    const double s = std::sin(theta);
    wa = std::sin((1.0 - u) * theta) / s;
    wb = std::sin(u * theta) / s;
  }
  out.qx = wa * a.qx + wb * sx;
  out.qy = wa * a.qy + wb * sy;
  out.qz = wa * a.qz + wb * sz;
  out.qw = wa * a.qw + wb * sw;
  const double n = out.quat_norm();
  out.qx /= n; out.qy /= n; out.qz /= n; out.qw /= n;
  return out;
}

SimState init_state(const Scene& scene) {
  SimState s;
  s.agents.resize(scene.agents.size());
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    s.agents[i].pos = scene.agents[i].waypoints.front();
    s.agents[i].target = 1;
  }
  return s;
}

void step(SimState& state, const Scene& scene, const SimConfig& cfg, double dt,
          std::mt19937_64& rng) {
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const AgentSpec& spec = scene.agents[i];
    AgentState& a = state.agents[i];
    if (state.t < spec.start_offset) continue;
    if (a.dwell_left > 0.0) {
      a.dwell_left = std::max(0.0, a.dwell_left - dt);
      continue;
    }
    const double move = spec.speed * dt;
    // Arrival tolerance widens to one step length for fast agents so the
    // goal cannot be orbited indefinitely.
    const double tol = std::max(cfg.arrival_tolerance, move);
    // The step budget carries through waypoints: a noise-free agent passes
    // exactly over each corner, which keeps loop traversal periodic.
    double budget = move;
    for (int guard = 0; budget > 1e-12 && guard < 16; ++guard) {
      const Vec2 goal = spec.waypoints[a.target];
      const Vec2 to_goal = goal - a.pos;
      const double dist = to_goal.norm();
      if (dist < 1e-12) {
        advance_target(a, spec);
        if (a.dwell_left > 0.0) break;
        continue;
      }
      double heading = std::atan2(to_goal.y, to_goal.x);
      if (spec.heading_noise_sigma > 0.0)
        heading += spec.heading_noise_sigma * unit_normal(rng);
      const double step_len = std::min(budget, dist);
      const Vec2 cand = a.pos + Vec2{std::cos(heading), std::sin(heading)} * step_len;
      const Vec2 clipped = clip_against_walls(a.pos, cand, scene.walls);
      const bool blocked = (clipped - cand).norm() > 1e-12;
      a.pos = clipped;
      budget -= step_len;
      const double remaining = (spec.waypoints[a.target] - a.pos).norm();
      // A noise-free unobstructed agent only advances by passing exactly
      // over the waypoint; the tolerance shortcut is reserved for noisy or
      // wall-blocked motion, where exact passage may never happen.
      if (remaining < 1e-9 ||
          (remaining <= tol && (spec.heading_noise_sigma > 0.0 || blocked))) {
        advance_target(a, spec);
        if (a.dwell_left > 0.0) break;
      } else {
        break;  // mid-segment: the step is spent
      }
    }
  }
  state.t += dt;
}

std::vector<Detection> emit_detections(const SimState& prev, const SimState& cur, double dt,
                                       bool associated, double gate) {
  std::vector<Detection> out;
  if (!associated) {
    for (std::size_t i = 0; i < cur.agents.size(); ++i) {
      const Vec2 d = cur.agents[i].pos - prev.agents[i].pos;
      if (d.norm() < kMinDisplacement) continue;
      out.push_back({cur.t, cur.agents[i].pos.x, cur.agents[i].pos.y,
                     wrap_angle(std::atan2(d.y, d.x)), static_cast<int>(i)});
    }
    return out;
  }

  // Greedy nearest-neighbor association between anonymous frames:
  // closest pair first, each point matched at most once, gated.
  struct Pair {
    double dist;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < prev.agents.size(); ++i)
    for (std::size_t j = 0; j < cur.agents.size(); ++j) {
      const double dist = (cur.agents[j].pos - prev.agents[i].pos).norm();
      if (dist <= gate) pairs.push_back({dist, i, j});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<bool> used_prev(prev.agents.size(), false), used_cur(cur.agents.size(), false);
  std::vector<Pair> matches;
  for (const Pair& p : pairs) {
    if (used_prev[p.i] || used_cur[p.j]) continue;
    used_prev[p.i] = used_cur[p.j] = true;
    matches.push_back(p);
  }
  std::sort(matches.begin(), matches.end(),
            [](const Pair& a, const Pair& b) { return a.j < b.j; });
  for (const Pair& m : matches) {
    const Vec2 d = cur.agents[m.j].pos - prev.agents[m.i].pos;
    if (d.norm() < kMinDisplacement) continue;
    out.push_back({cur.t, cur.agents[m.j].pos.x, cur.agents[m.j].pos.y,
                   wrap_angle(std::atan2(d.y, d.x)), -1});
  }
  (void)dt;
  return out;
}

std::vector<Detection> corrupt(std::span<const Detection> detections, const SensorNoise& noise) {
  if (noise.miss_rate < 0.0 || noise.miss_rate > 1.0)
    throw ConfigError("noise.miss_rate", "must be in [0, 1]");
  if (noise.position_sigma < 0.0) throw ConfigError("noise.position_sigma", "must be >= 0");
  if (noise.heading_sigma < 0.0) throw ConfigError("noise.heading_sigma", "must be >= 0");

  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::vector<Detection> out;
  out.reserve(detections.size());
  for (const Detection& d : detections) {
    if (noise.miss_rate > 0.0 && uniform(rng) < noise.miss_rate) continue;
    Detection c = d;
    if (noise.position_sigma > 0.0) {
      c.x += noise.position_sigma * unit_normal(rng);
      c.y += noise.position_sigma * unit_normal(rng);
    }
    if (noise.heading_sigma > 0.0)
      c.alpha = wrap_angle(c.alpha + noise.heading_sigma * unit_normal(rng));
    out.push_back(c);
  }
  return out;
}

Dataset run(const Scene& scene, const RobotPath& robot_path, double duration, double dt,
            const SensorNoise* noise, bool associated, double arrival_tolerance) {
  if (!(duration > 0.0)) throw ConfigError("duration", "must be > 0");
  if (!(dt > 0.0)) throw ConfigError("dt", "must be > 0");
  validate_scene(scene);
  validate_robot_path(robot_path);

  SimConfig cfg;
  cfg.dt = dt;
  cfg.arrival_tolerance = arrival_tolerance;
  cfg.associated_detections = associated;

  double max_speed = 0.0;
  for (const AgentSpec& a : scene.agents) max_speed = std::max(max_speed, a.speed);
  const double gate = 2.0 * max_speed * dt;

  Dataset ds;
  ds.scene = scene;
  ds.dt = dt;
  ds.duration = duration;
  ds.seed = scene.seed;
  ds.associated = associated;
  if (noise) ds.noise = *noise;

  std::mt19937_64 rng(scene.seed);
  SimState state = init_state(scene);
  const int steps = static_cast<int>(std::llround(duration / dt));
  for (int k = 0; k < steps; ++k) {
    const SimState prev = state;
    step(state, scene, cfg, dt, rng);
    auto dets = emit_detections(prev, state, dt, associated, gate);
    ds.detections.insert(ds.detections.end(), dets.begin(), dets.end());
    ds.poses.push_back(interpolate_pose(robot_path, state.t, /*clamp=*/true));
  }
  if (noise) ds.detections = corrupt(ds.detections, *noise);
  return ds;
}

}  // namespace modkit
