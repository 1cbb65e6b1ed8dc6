#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "modkit/io.hpp"
#include "modkit/metrics.hpp"

using namespace modkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / ("modkit_io_test_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Scene tiny_scene() {
  Scene scene;
  scene.name = "tiny";
  scene.seed = 9;
  scene.walls.push_back({{0.0, 0.0}, {4.0, 0.0}});
  AgentSpec a;
  a.waypoints = {{0.5, 0.5}, {3.5, 0.5}, {3.5, 3.5}};
  a.speed = 0.75;
  a.heading_noise_sigma = 0.02;
  scene.agents.push_back(a);
  AgentSpec b;
  b.pattern = MotionPattern::queue_then_go;
  b.waypoints = {{1.0, 3.0}, {2.0, 3.0}, {3.0, 3.0}};
  b.speed = 0.5;
  b.dwell_time = 1.5;
  b.start_offset = 2.0;
  scene.agents.push_back(b);
  return scene;
}

DescriptorMaps sample_maps() {
  const GridSpec spec{0.0, 0.0, 0.30, 12, 9};
  std::vector<Detection> dets;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ux(0.0, 12 * 0.30), uy(0.0, 9 * 0.30),
      ua(0.0, kTwoPi);
  for (int i = 0; i < 300; ++i)
    dets.push_back({0.01 * i, ux(rng), uy(rng), ua(rng), i % 4});
  return build_mod(dets, 0.0, 10.0, spec, ModParams{});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MODKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("detections csv round-trips values and empty agent ids") {
  const fs::path dir = temp_dir();
  std::vector<Detection> dets = {{0.5, 1.25, -2.5, 0.75, 3},
                                 {1.0, 0.0625, 10.5, 6.0, -1},
                                 {1.5, -0.125, 0.25, 0.0, 0}};
  io::write_detections_csv(dir / "d.csv", dets);

  const std::string text = slurp(dir / "d.csv");
  CHECK(text.rfind("t,x,y,alpha,agent_id\n", 0) == 0);
  CHECK(text.find("1,0.0625,10.5,6,\n") != std::string::npos);  // unknown id left empty

  const std::vector<Detection> back = io::read_detections_csv(dir / "d.csv");
  REQUIRE(back.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(back[i].t == dets[i].t);
    CHECK(back[i].x == dets[i].x);
    CHECK(back[i].y == dets[i].y);
    CHECK(back[i].alpha == dets[i].alpha);
    CHECK(back[i].agent_id == dets[i].agent_id);
  }
}

TEST_CASE("detections csv write-read-write is byte stable at 9 digits") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Detection> dets;
  for (int i = 0; i < 200; ++i) dets.push_back({u(rng), u(rng), u(rng), u(rng), i % 7 - 1});
  io::write_detections_csv(dir / "a.csv", dets);
  io::write_detections_csv(dir / "b.csv", io::read_detections_csv(dir / "a.csv"));
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
}

TEST_CASE("detections csv rejects bad headers and malformed rows") {
  const fs::path dir = temp_dir();
  io::atomic_write(dir / "bad_header.csv", "time,x,y\n");
  CHECK_THROWS_AS(io::read_detections_csv(dir / "bad_header.csv"), IoError);
  io::atomic_write(dir / "bad_row.csv", "t,x,y,alpha,agent_id\n1,2,3\n");
  CHECK_THROWS_AS(io::read_detections_csv(dir / "bad_row.csv"), IoError);
  CHECK_THROWS_AS(io::read_detections_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("poses csv round-trips exactly representable values") {
  const fs::path dir = temp_dir();
  std::vector<PoseStamped> poses = {pose_from_yaw(0.0, 1.5, 2.5, 0.0),
                                    {2.0, -0.5, 3.25, 0.125, 0.0, 0.0, 0.5, 0.875}};
  io::write_poses_csv(dir / "p.csv", poses);
  CHECK(slurp(dir / "p.csv").rfind("t,x,y,z,qx,qy,qz,qw\n", 0) == 0);

  const std::vector<PoseStamped> back = io::read_poses_csv(dir / "p.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].t == 2.0);
  CHECK(back[1].z == 0.125);
  CHECK(back[1].qz == 0.5);
  CHECK(back[1].qw == 0.875);

  io::write_poses_csv(dir / "p2.csv", back);
  CHECK(slurp(dir / "p.csv") == slurp(dir / "p2.csv"));
}

TEST_CASE("scene json survives a save-load-save cycle") {
  const fs::path dir = temp_dir();
  const Scene scene = tiny_scene();
  io::save_scene(dir / "scene.json", scene);
  const Scene back = io::load_scene(dir / "scene.json");
  CHECK(back.name == scene.name);
  CHECK(back.seed == scene.seed);
  REQUIRE(back.agents.size() == 2);
  CHECK(back.agents[0].speed == scene.agents[0].speed);
  CHECK(back.agents[1].pattern == MotionPattern::queue_then_go);
  CHECK(back.agents[1].dwell_time == 1.5);
  CHECK(back.walls.size() == 1);

  io::save_scene(dir / "scene2.json", back);
  CHECK(slurp(dir / "scene.json") == slurp(dir / "scene2.json"));
}

TEST_CASE("scene validation failures name the offending field") {
  const fs::path dir = temp_dir();
  io::atomic_write(dir / "bad.json", R"({"agents": [{"waypoints": [[0,0],[1,0]], "speed": -1}]})");
  try {
    io::load_scene(dir / "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "agents[0].speed");
  }
  io::atomic_write(dir / "nospeed.json", R"({"agents": [{"waypoints": [[0,0],[1,0]]}]})");
  try {
    io::load_scene(dir / "nospeed.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "agents[0].speed");
  }
  io::atomic_write(dir / "garbage.json", "not json at all {");
  CHECK_THROWS_AS(io::load_scene(dir / "garbage.json"), ConfigError);
}

TEST_CASE("robot path json round-trips and validates timestamps") {
  const fs::path dir = temp_dir();
  RobotPath path;
  path.poses = {pose_from_yaw(0.0, 1.0, 1.0, 0.5), pose_from_yaw(5.0, 2.0, 1.0, 0.5)};
  io::save_robot_path(dir / "path.json", path);
  const RobotPath back = io::load_robot_path(dir / "path.json");
  REQUIRE(back.poses.size() == 2);
  CHECK(back.poses[1].t == 5.0);
  io::save_robot_path(dir / "path2.json", back);
  CHECK(slurp(dir / "path.json") == slurp(dir / "path2.json"));

  io::atomic_write(dir / "bad.json", R"({"poses": [[1,0,0,0,0,0,0,1],[1,0,0,0,0,0,0,1]]})");
  CHECK_THROWS_AS(io::load_robot_path(dir / "bad.json"), ConfigError);
}

TEST_CASE("dataset directory round-trips a simulated rollout") {
  const fs::path dir = temp_dir();
  const Scene scene = tiny_scene();
  RobotPath path;
  path.poses = {pose_from_yaw(0.0, 2.0, 2.0, 0.0), pose_from_yaw(100.0, 2.0, 2.0, 0.0)};
  const Dataset ds = run(scene, path, 20.0, 0.1);
  io::write_dataset(dir, ds);
  CHECK(fs::exists(dir / "scene.json"));
  CHECK(fs::exists(dir / "detections.csv"));
  CHECK(fs::exists(dir / "poses.csv"));
  CHECK(fs::exists(dir / "metadata.json"));

  const Dataset back = io::read_dataset(dir);
  CHECK(back.dt == ds.dt);
  CHECK(back.duration == ds.duration);
  CHECK(back.seed == ds.seed);
  CHECK(back.associated == ds.associated);
  CHECK(back.detections.size() == ds.detections.size());
  CHECK(back.poses.size() == ds.poses.size());
  CHECK(back.scene.agents.size() == ds.scene.agents.size());
}

TEST_CASE("grid file round-trips bit-exactly") {
  const fs::path dir = temp_dir();
  const GridSpec spec{-1.5, 2.25, 0.30, 7, 5};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-5.0F, 5.0F);
  std::vector<io::GridChannel> channels(3);
  channels[0].name = "a";
  channels[1].name = "second_channel";
  channels[2].name = "";
  for (auto& ch : channels) {
    ch.data.resize(spec.num_cells());
    for (float& x : ch.data) x = u(rng);
  }
  io::write_grid_file(dir / "g.modg", spec, channels);

  const std::string bytes = slurp(dir / "g.modg");
  CHECK(bytes.substr(0, 4) == "MODG");
  CHECK(bytes.size() == 4 + 2 + 8 + 24 + 2 +
                            3 * (1 + 4 * spec.num_cells()) + channels[0].name.size() +
                            channels[1].name.size());

  auto [spec2, back] = io::read_grid_file(dir / "g.modg");
  CHECK(spec2 == spec);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == channels[i].name);
    CHECK(back[i].data == channels[i].data);
  }
  io::write_grid_file(dir / "g2.modg", spec2, back);
  CHECK(slurp(dir / "g2.modg") == bytes);
}

TEST_CASE("grid file reader rejects corrupt inputs") {
  const fs::path dir = temp_dir();
  io::atomic_write(dir / "bad.modg", "GODM????");
  CHECK_THROWS_AS(io::read_grid_file(dir / "bad.modg"), IoError);

  const GridSpec spec{0.0, 0.0, 0.30, 3, 3};
  io::GridChannel ch{"x", std::vector<float>(9, 1.0F)};
  io::write_grid_file(dir / "ok.modg", spec, {ch});
  const std::string bytes = slurp(dir / "ok.modg");
  io::atomic_write(dir / "trunc.modg", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(io::read_grid_file(dir / "trunc.modg"), IoError);

  ch.data.resize(4);
  CHECK_THROWS_AS(io::write_grid_file(dir / "short.modg", spec, {ch}), ShapeMismatch);
}

TEST_CASE("descriptor maps reach a byte-stable fixed point after one save") {
  const fs::path dir = temp_dir();
  const DescriptorMaps maps = sample_maps();
  io::save_descriptor_maps(dir / "m.modg", maps);
  CHECK(fs::exists(dir / "m.modg.json"));

  const DescriptorMaps back = io::load_descriptor_maps(dir / "m.modg");
  CHECK(back.spec == maps.spec);
  CHECK(back.bins == maps.bins);
  CHECK(back.normalized == maps.normalized);
  CHECK(back.dir_valid == maps.dir_valid);
  CHECK(back.flow_valid == maps.flow_valid);
  // Values pass through f32 once; integer flow counts survive exactly.
  CHECK(back.flow == maps.flow);
  for (std::size_t i = 0; i < maps.entropy.v.size(); ++i)
    CHECK(back.entropy.v[i] == doctest::Approx(maps.entropy.v[i]).epsilon(1e-6));

  io::save_descriptor_maps(dir / "m2.modg", back);
  CHECK(slurp(dir / "m2.modg") == slurp(dir / "m.modg"));
  CHECK(io::load_descriptor_maps(dir / "m2.modg") == back);
}

TEST_CASE("model parameters round-trip through the grid container") {
  const fs::path dir = temp_dir();
  ModelParams params;
  params.randomize(21);
  io::save_model(dir / "model.modg", params);
  CHECK(fs::exists(dir / "model.modg.json"));

  const ModelParams once = io::load_model(dir / "model.modg");
  const std::vector<double> a = params.to_vector(), b = once.to_vector();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));

  io::save_model(dir / "model2.modg", once);
  CHECK(slurp(dir / "model2.modg") == slurp(dir / "model.modg"));
  CHECK(io::load_model(dir / "model2.modg").to_vector() == once.to_vector());

  const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "model.modg.json"));
  CHECK(manifest["num_params"] == params.num_params());
  CHECK(manifest["layers"].size() == 5);
}

TEST_CASE("metric report json carries scope, horizon, and every metric") {
  MetricReport r;
  r.scope = "local";
  r.horizon = 20.0;
  r.values["flow.mse"] = 0.125;
  r.values["direction.accuracy"] = 1.0;
  const nlohmann::json j = nlohmann::json::parse(io::metric_report_json(r));
  CHECK(j["version"] == 1);
  CHECK(j["scope"] == "local");
  CHECK(j["horizon"] == 20.0);
  CHECK(j["metrics"]["flow.mse"] == 0.125);
  CHECK(j["metrics"]["direction.accuracy"] == 1.0);

  const fs::path dir = temp_dir();
  io::save_metric_report(dir / "r.json", r);
  CHECK(slurp(dir / "r.json") == io::metric_report_json(r));
}

TEST_CASE("png rendering emits valid headers at the requested scale") {
  const fs::path dir = temp_dir();
  const DescriptorMaps maps = sample_maps();
  auto png_dims = [&](const fs::path& p) {
    const std::string bytes = slurp(p);
    REQUIRE(bytes.size() > 24);
    CHECK(bytes.substr(1, 3) == "PNG");
    auto be32 = [&](std::size_t off) {
      return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off])) << 24) |
             (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 1])) << 16) |
             (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 2])) << 8) |
             static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[off + 3]));
    };
    return std::pair<int, int>{static_cast<int>(be32(16)), static_cast<int>(be32(20))};
  };

  io::render_png(dir / "flow.png", maps, io::RenderLayer::flow);
  CHECK(png_dims(dir / "flow.png") == std::pair<int, int>{12, 9});
  io::render_png(dir / "dir.png", maps, io::RenderLayer::direction, 4);
  CHECK(png_dims(dir / "dir.png") == std::pair<int, int>{48, 36});
  io::render_png(dir / "entropy.png", maps, io::RenderLayer::entropy, 2);
  CHECK(png_dims(dir / "entropy.png") == std::pair<int, int>{24, 18});

  DescriptorMaps empty;
  empty.spec = maps.spec;
  empty.flow = FloatMap(maps.spec);
  empty.entropy = FloatMap(maps.spec);
  empty.dir_cos = FloatMap(maps.spec);
  empty.dir_sin = FloatMap(maps.spec);
  empty.dir_valid = BoolMap(maps.spec, false);
  empty.flow_valid = BoolMap(maps.spec, false);
  io::render_png(dir / "empty.png", empty, io::RenderLayer::direction);
  CHECK(png_dims(dir / "empty.png") == std::pair<int, int>{12, 9});

  CHECK_THROWS_AS(io::render_png(dir / "bad.png", maps, io::RenderLayer::flow, 0), ConfigError);
}

TEST_CASE("cli exit codes: success, validation failure, runtime failure") {
  const fs::path dir = temp_dir();
  const std::string scene = std::string(MODKIT_SCENES_DIR) + "/corridor_loop.json";
  const std::string path = std::string(MODKIT_PATHS_DIR) + "/static_center.json";

  const fs::path ds = dir / "ds";
  CHECK(run_cli("simulate " + scene + " " + path + " --out " + ds.string() +
                " --duration 20 --dt 0.1 --seed 3") == 0);
  CHECK(fs::exists(ds / "detections.csv"));

  // Same seed twice gives byte-identical detections.
  const fs::path ds2 = dir / "ds2";
  CHECK(run_cli("simulate " + scene + " " + path + " --out " + ds2.string() +
                " --duration 20 --dt 0.1 --seed 3") == 0);
  CHECK(slurp(ds / "detections.csv") == slurp(ds2 / "detections.csv"));

  // Validation error (bad scene) exits 1.
  io::atomic_write(dir / "bad_scene.json",
                   R"({"agents": [{"waypoints": [[0,0],[1,0]], "speed": -1}]})");
  CHECK(run_cli("simulate " + (dir / "bad_scene.json").string() + " " + path + " --out " +
                (dir / "nope").string()) == 1);

  // Runtime data error (window past dataset end) exits 2.
  CHECK(run_cli("build-mod " + ds.string() + " --out " + (dir / "m.modg").string() +
                " --t0 15 --horizon 10") == 2);

  // A valid build + self-evaluation exits 0 and reports zero error.
  CHECK(run_cli("build-mod " + ds.string() + " --out " + (dir / "m.modg").string() +
                " --t0 0 --horizon 10") == 0);
  CHECK(run_cli("evaluate --pred " + (dir / "m.modg").string() + " --gt " +
                (dir / "m.modg").string() + " --out " + (dir / "report.json").string()) == 0);
  const nlohmann::json report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["metrics"]["flow.mse"] == 0.0);
  CHECK(report["metrics"]["direction.accuracy"] == 1.0);

  CHECK(run_cli("no-such-command") == 1);
}
