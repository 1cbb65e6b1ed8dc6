#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "modkit/grid.hpp"

namespace modkit {

enum class MotionPattern { waypoint_loop, l_path, queue_then_go };

/// Scripted agent: follows its waypoints at constant speed with optional
/// per-step heading noise. waypoint_loop cycles, l_path ping-pongs along
/// the waypoint chain, queue_then_go dwells at each waypoint on arrival.
struct AgentSpec {
  MotionPattern pattern = MotionPattern::waypoint_loop;
  std::vector<Vec2> waypoints;
  double speed = 1.0;                // m/s
  double heading_noise_sigma = 0.0;  // rad
  double dwell_time = 0.0;           // s, queue pattern
  double start_offset = 0.0;         // s before the agent activates
};

struct Scene {
  std::string name;
  std::vector<Segment> walls;
  std::vector<AgentSpec> agents;
  std::uint64_t seed = 0;
};

/// Timed pose sequence; position is interpolated linearly, orientation
/// spherically, between samples. Timestamps strictly increase.
struct RobotPath {
  std::vector<PoseStamped> poses;
};

PoseStamped interpolate_pose(const RobotPath& path, double t, bool clamp = false);

/// Detection-corruption model standing in for an imperfect detector.
struct SensorNoise {
  double position_sigma = 0.0;  // m
  double miss_rate = 0.0;       // drop probability per detection
  double heading_sigma = 0.0;   // rad
  std::uint64_t seed = 0;
};

struct AgentState {
  Vec2 pos;
  std::size_t target = 1;   // index of the current waypoint goal
  int step_dir = 1;         // +1 / -1 for ping-pong patterns
  double dwell_left = 0.0;  // remaining queue dwell
};

struct SimState {
  double t = 0.0;
  std::vector<AgentState> agents;
};

struct SimConfig {
  double dt = 0.1;
  double arrival_tolerance = 0.15;  // half the default grid cell
  bool associated_detections = false;
};

SimState init_state(const Scene& scene);

/// Advance every active agent by dt. Movement is clipped at wall
/// intersections; waypoint arrival advances the target per pattern.
void step(SimState& state, const Scene& scene, const SimConfig& cfg, double dt,
          std::mt19937_64& rng);

/// One detection per agent that moved at least 1e-4 m between states,
/// at its new position, direction from the displacement. In associated
/// mode identities are discarded and re-derived by greedy nearest-neighbor
/// matching gated at `gate` meters.
std::vector<Detection> emit_detections(const SimState& prev, const SimState& cur, double dt,
                                       bool associated, double gate);

/// Drop / perturb detections per the noise model.
std::vector<Detection> corrupt(std::span<const Detection> detections, const SensorNoise& noise);

struct Dataset {
  Scene scene;
  std::vector<Detection> detections;
  std::vector<PoseStamped> poses;
  double dt = 0.1;
  double duration = 0.0;
  std::uint64_t seed = 0;
  bool associated = false;
  SensorNoise noise;  // all-zero when the stream is exact
};

/// Fixed-step rollout. Identical (scene, seed, dt, duration) inputs
/// produce bit-identical datasets.
Dataset run(const Scene& scene, const RobotPath& robot_path, double duration, double dt,
            const SensorNoise* noise = nullptr, bool associated = false,
            double arrival_tolerance = 0.15);

void validate_scene(const Scene& scene);
void validate_robot_path(const RobotPath& path);

}  // namespace modkit
