// Command-line front end: simulation, map building, training, evaluation,
// the detector-gap study, and PNG rendering.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "json.hpp"
#include "modkit/io.hpp"

namespace {

using namespace modkit;

GridSpec grid_for_scene(const Scene& scene, double cell_size, double pad = 0.5) {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  auto include = [&](const Vec2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  };
  for (const Segment& w : scene.walls) {
    include(w.a);
    include(w.b);
  }
  for (const AgentSpec& a : scene.agents)
    for (const Vec2& wp : a.waypoints) include(wp);
  if (min_x > max_x) throw ConfigError("scene", "cannot derive grid extent from empty scene");
  GridSpec spec;
  spec.cell_size = cell_size;
  spec.origin_x = min_x - pad;
  spec.origin_y = min_y - pad;
  spec.width = std::max(1, static_cast<int>(std::ceil((max_x - min_x + 2 * pad) / cell_size)));
  spec.height = std::max(1, static_cast<int>(std::ceil((max_y - min_y + 2 * pad) / cell_size)));
  return spec;
}

struct GridFlags {
  double cell_size = 0.30;
  double origin_x = 0.0, origin_y = 0.0;
  int width = 0, height = 0;  // 0: derive from the scene

  GridSpec resolve(const Scene& scene) const {
    if (width > 0 && height > 0)
      return GridSpec{origin_x, origin_y, cell_size, width, height};
    return grid_for_scene(scene, cell_size);
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--cell-size", cell_size, "Grid cell size in meters");
    cmd->add_option("--origin-x", origin_x, "Grid origin x (with --width/--height)");
    cmd->add_option("--origin-y", origin_y, "Grid origin y (with --width/--height)");
    cmd->add_option("--width", width, "Grid width in cells (0: fit to scene)");
    cmd->add_option("--height", height, "Grid height in cells (0: fit to scene)");
  }
};

struct FovFlags {
  double half_angle_deg = 45.0;
  double range = 8.0;
  bool no_occlusion = false;

  FovSpec resolve() const {
    FovSpec fov;
    fov.half_angle = half_angle_deg * kTwoPi / 360.0;
    fov.max_range = range;
    fov.occlusion = !no_occlusion;
    return fov;
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--fov-half-angle", half_angle_deg, "FOV half angle in degrees");
    cmd->add_option("--fov-range", range, "FOV max range in meters");
    cmd->add_flag("--fov-no-occlusion", no_occlusion, "Disable wall occlusion");
  }
};

int cmd_simulate(const std::string& scene_path, const std::string& path_path,
                 const std::string& out_dir, double duration, double dt, long long seed,
                 bool associated, const SensorNoise& noise, bool use_noise) {
  Scene scene = io::load_scene(scene_path);
  if (seed >= 0) scene.seed = static_cast<std::uint64_t>(seed);
  const RobotPath robot_path = io::load_robot_path(path_path);
  const Dataset ds =
      run(scene, robot_path, duration, dt, use_noise ? &noise : nullptr, associated);
  io::write_dataset(out_dir, ds);
  std::cout << "{\"detections\": " << ds.detections.size()
            << ", \"poses\": " << ds.poses.size() << ", \"dir\": \"" << out_dir << "\"}\n";
  return 0;
}

int cmd_build_mod(const std::string& dataset_dir, const std::string& out_path, double t0,
                  double horizon, int bins, double kappa, double epsilon, bool normalize,
                  double flow_scale, bool local, const GridFlags& grid_flags,
                  const FovFlags& fov_flags) {
  const Dataset ds = io::read_dataset(dataset_dir);
  if (t0 + horizon > ds.duration + 1e-9)
    throw InsufficientData("window [" + std::to_string(t0) + ", " +
                           std::to_string(t0 + horizon) + ") extends past dataset end " +
                           std::to_string(ds.duration));
  const GridSpec spec = grid_flags.resolve(ds.scene);
  ModParams params;
  params.bins = bins;
  params.kappa = kappa;
  params.epsilon = epsilon;
  params.normalize = normalize;
  params.flow_scale = flow_scale;

  if (local) {
    RobotPath path{ds.poses};
    auto [maps, vis] = local_stefmap(ds.detections, path, fov_flags.resolve(), ds.scene.walls,
                                     t0, horizon, spec, params);
    io::save_descriptor_maps(out_path, maps);
    // Keep the visibility alongside so evaluate --scope local can mask.
    io::GridChannel vis_ch{"visibility", {}};
    vis_ch.data.reserve(vis.v.size());
    for (auto b : vis.v) vis_ch.data.push_back(b ? 1.0F : 0.0F);
    io::write_grid_file(out_path + ".vis", spec, {vis_ch});
  } else {
    io::save_descriptor_maps(out_path, build_mod(ds.detections, t0, horizon, spec, params));
  }
  std::cout << "{\"out\": \"" << out_path << "\"}\n";
  return 0;
}

int cmd_train(const std::vector<std::string>& dataset_dirs, const std::string& out_path,
              TrainConfig train_cfg, const LossConfig& loss_cfg, const GridFlags& grid_flags,
              const FovFlags& fov_flags, double stride, int bins, double kappa) {
  std::vector<WindowSample> windows;
  GridSpec spec;
  ModParams params;
  params.bins = bins;
  params.kappa = kappa;
  const FovSpec fov = fov_flags.resolve();
  for (std::size_t i = 0; i < dataset_dirs.size(); ++i) {
    const Dataset ds = io::read_dataset(dataset_dirs[i]);
    if (i == 0) spec = grid_flags.resolve(ds.scene);
    auto w = make_windows(ds, spec, params, fov, train_cfg.input_window, train_cfg.horizon,
                          stride);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                   std::make_move_iterator(w.end()));
  }
  std::vector<DescriptorMaps> gts;
  gts.reserve(windows.size());
  for (const auto& w : windows) gts.push_back(w.gt);
  const double flow_scale = positive_flow_percentile(gts, 99.0);
  std::vector<TrainSample> samples;
  samples.reserve(windows.size());
  for (const auto& w : windows) samples.push_back(finalize_sample(w, flow_scale, loss_cfg));

  ModelParams init;
  init.randomize(train_cfg.seed);
  const TrainResult result = train(samples, train_cfg, loss_cfg, init);
  io::save_model(out_path, result.params);

  std::string curve = "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", e, result.loss_curve[e]);
    curve += buf;
  }
  io::atomic_write(out_path + ".losscurve.csv", curve);

  nlohmann::json j;
  j["model"] = out_path;
  j["samples"] = samples.size();
  j["flow_scale"] = flow_scale;
  j["final_loss"] = result.loss_curve.back();
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path,
                 const std::string& scope, const std::string& mask_path, double horizon,
                 const std::string& out_path) {
  const DescriptorMaps pred = io::load_descriptor_maps(pred_path);
  const DescriptorMaps gt = io::load_descriptor_maps(gt_path);
  BoolMap mask;
  const BoolMap* mask_ptr = nullptr;
  if (!mask_path.empty()) {
    auto [spec, channels] = io::read_grid_file(mask_path);
    mask = BoolMap(spec);
    for (const auto& ch : channels)
      if (ch.name == "visibility")
        for (std::size_t i = 0; i < ch.data.size(); ++i) mask.v[i] = ch.data[i] != 0.0F;
    mask_ptr = &mask;
  }
  const MetricReport report = evaluate_maps(pred, gt, mask_ptr, scope, horizon);
  const std::string text = io::metric_report_json(report);
  if (!out_path.empty()) io::atomic_write(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_detector_gap(const std::string& dataset_dir, double t0, double horizon, int bins,
                     double kappa, const SensorNoise& noise, const GridFlags& grid_flags,
                     const std::string& out_path) {
  const Dataset ds = io::read_dataset(dataset_dir);
  const GridSpec spec = grid_flags.resolve(ds.scene);
  ModParams params;
  params.bins = bins;
  params.kappa = kappa;
  const double h = horizon > 0 ? horizon : ds.duration;
  const DescriptorMaps exact = build_mod(ds.detections, t0, h, spec, params);
  const auto corrupted_dets = corrupt(ds.detections, noise);
  const DescriptorMaps noisy = build_mod(corrupted_dets, t0, h, spec, params);

  // Direction compared as an angle-offset magnitude field so the
  // distributional metrics apply; cells invalid in a map contribute zero.
  auto direction_field = [](const DescriptorMaps& m) {
    FloatMap f(m.spec);
    for (std::size_t i = 0; i < f.v.size(); ++i)
      if (m.dir_valid.v[i])
        f.v[i] = 1.0 + wrap_angle(std::atan2(m.dir_sin.v[i], m.dir_cos.v[i]));
    return f;
  };

  nlohmann::json j;
  j["version"] = 1;
  j["flow"]["js"] = js_divergence(exact.flow, noisy.flow);
  j["flow"]["bhattacharyya"] = bhattacharyya(exact.flow, noisy.flow);
  j["entropy"]["js"] = js_divergence(exact.entropy, noisy.entropy);
  j["entropy"]["bhattacharyya"] = bhattacharyya(exact.entropy, noisy.entropy);
  const FloatMap dir_a = direction_field(exact), dir_b = direction_field(noisy);
  j["direction"]["js"] = js_divergence(dir_a, dir_b);
  j["direction"]["bhattacharyya"] = bhattacharyya(dir_a, dir_b);
  j["direction"]["angular_similarity"] = angular_similarity(exact, noisy);

  const std::string text = j.dump(2) + "\n";
  if (!out_path.empty()) io::atomic_write(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_render(const std::string& grid_path, const std::string& layer,
               const std::string& out_path, int scale) {
  const DescriptorMaps maps = io::load_descriptor_maps(grid_path);
  io::RenderLayer l;
  if (layer == "flow") l = io::RenderLayer::flow;
  else if (layer == "entropy") l = io::RenderLayer::entropy;
  else if (layer == "direction") l = io::RenderLayer::direction;
  else throw ConfigError("--layer", "must be flow, entropy or direction");
  io::render_png(out_path, maps, l, scale);
  std::cout << "{\"out\": \"" << out_path << "\"}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maps-of-Dynamics toolkit"};
  app.require_subcommand(1);

  // simulate ---------------------------------------------------------------
  std::string scene_path, path_path, out_dir = "dataset";
  double duration = 60.0, dt = 0.1;
  long long seed = -1;
  bool associated = false;
  SensorNoise sim_noise;
  bool use_noise = false;
  auto* simulate = app.add_subcommand("simulate", "Run the crowd simulator");
  simulate->add_option("scene", scene_path, "Scene JSON")->required();
  simulate->add_option("robot_path", path_path, "Robot path JSON")->required();
  simulate->add_option("--out", out_dir, "Output dataset directory");
  simulate->add_option("--duration", duration, "Seconds to simulate");
  simulate->add_option("--dt", dt, "Step size in seconds");
  simulate->add_option("--seed", seed, "Override the scene seed");
  simulate->add_flag("--associated", associated, "Nearest-neighbor association mode");
  simulate->add_option("--noise-pos", sim_noise.position_sigma, "Position noise sigma (m)");
  simulate->add_option("--noise-miss", sim_noise.miss_rate, "Miss rate in [0,1]");
  simulate->add_option("--noise-heading", sim_noise.heading_sigma, "Heading noise sigma (rad)");
  simulate->add_option("--noise-seed", sim_noise.seed, "Corruption RNG seed");
  simulate->add_flag("--noise", use_noise, "Enable detection corruption");

  // build-mod --------------------------------------------------------------
  std::string bm_dataset, bm_out = "mod.modg";
  double bm_t0 = 0.0, bm_horizon = 10.0, bm_kappa = 1.5, bm_eps = 1e-12, bm_scale = 0.0;
  int bm_bins = 8;
  bool bm_normalize = false, bm_local = false;
  GridFlags bm_grid;
  FovFlags bm_fov;
  auto* build = app.add_subcommand("build-mod", "Build descriptor maps from a dataset");
  build->add_option("dataset", bm_dataset, "Dataset directory")->required();
  build->add_option("--out", bm_out, "Output grid file");
  build->add_option("--t0", bm_t0, "Window start (s)");
  build->add_option("--horizon", bm_horizon, "Window length T (s)");
  build->add_option("--bins", bm_bins, "Orientation bins");
  build->add_option("--kappa", bm_kappa, "Direction dominance factor");
  build->add_option("--epsilon", bm_eps, "Entropy log guard");
  build->add_flag("--normalize", bm_normalize, "Normalize flow/entropy to [0,1]");
  build->add_option("--flow-scale", bm_scale, "Flow normalizer (0: derive)");
  build->add_flag("--local", bm_local, "FOV-limited accumulation");
  bm_grid.add_to(build);
  bm_fov.add_to(build);

  // train ------------------------------------------------------------------
  std::vector<std::string> tr_datasets;
  std::string tr_out = "model.modg";
  TrainConfig tr_cfg;
  LossConfig tr_loss;
  GridFlags tr_grid;
  FovFlags tr_fov;
  double tr_stride = 2.0, tr_kappa = 1.5;
  int tr_bins = 8;
  bool tr_no_augment = false;
  auto* train_cmd = app.add_subcommand("train", "Train the map predictor");
  train_cmd->add_option("dataset", tr_datasets, "Dataset directories")->required();
  train_cmd->add_option("--out", tr_out, "Output model file");
  train_cmd->add_option("--horizon", tr_cfg.horizon, "Supervision horizon T (s)");
  train_cmd->add_option("--n", tr_cfg.input_window, "Input window n (s)");
  train_cmd->add_option("--stride", tr_stride, "Window stride (s)");
  train_cmd->add_option("--epochs", tr_cfg.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", tr_cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", tr_cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--weight-decay", tr_cfg.weight_decay, "Decoupled weight decay");
  train_cmd->add_option("--seed", tr_cfg.seed, "Training seed");
  train_cmd->add_option("--bins", tr_bins, "Orientation bins");
  train_cmd->add_option("--kappa", tr_kappa, "Direction dominance factor");
  train_cmd->add_flag("--no-augment", tr_no_augment, "Disable data augmentation");
  tr_grid.add_to(train_cmd);
  tr_fov.add_to(train_cmd);

  // evaluate ---------------------------------------------------------------
  std::string ev_pred, ev_gt, ev_scope = "global", ev_mask, ev_out;
  double ev_horizon = 0.0;
  auto* evaluate = app.add_subcommand("evaluate", "Compare predicted and ground-truth maps");
  evaluate->add_option("--pred", ev_pred, "Predicted maps grid file")->required();
  evaluate->add_option("--gt", ev_gt, "Ground-truth maps grid file")->required();
  evaluate->add_option("--scope", ev_scope, "local or global")
      ->check(CLI::IsMember({"local", "global"}));
  evaluate->add_option("--mask", ev_mask, "Visibility grid file (local scope)");
  evaluate->add_option("--horizon", ev_horizon, "Horizon tag for the report");
  evaluate->add_option("--out", ev_out, "Also write the report here");

  // detector-gap -----------------------------------------------------------
  std::string dg_dataset, dg_out;
  double dg_t0 = 0.0, dg_horizon = 0.0, dg_kappa = 1.5;
  int dg_bins = 8;
  SensorNoise dg_noise{0.3, 0.5, 0.3, 7};
  GridFlags dg_grid;
  auto* gap = app.add_subcommand("detector-gap", "Exact-vs-corrupted MoD comparison");
  gap->add_option("dataset", dg_dataset, "Dataset directory (exact detections)")->required();
  gap->add_option("--t0", dg_t0, "Window start (s)");
  gap->add_option("--horizon", dg_horizon, "Window length (0: whole dataset)");
  gap->add_option("--bins", dg_bins, "Orientation bins");
  gap->add_option("--kappa", dg_kappa, "Direction dominance factor");
  gap->add_option("--noise-pos", dg_noise.position_sigma, "Position noise sigma (m)");
  gap->add_option("--noise-miss", dg_noise.miss_rate, "Miss rate in [0,1]");
  gap->add_option("--noise-heading", dg_noise.heading_sigma, "Heading noise sigma (rad)");
  gap->add_option("--noise-seed", dg_noise.seed, "Corruption RNG seed");
  gap->add_option("--out", dg_out, "Also write the report here");
  dg_grid.add_to(gap);

  // render -----------------------------------------------------------------
  std::string rn_grid, rn_layer = "flow", rn_out = "map.png";
  int rn_scale = 8;
  auto* render = app.add_subcommand("render", "Render a map layer to PNG");
  render->add_option("grid", rn_grid, "Grid file")->required();
  render->add_option("--layer", rn_layer, "flow, entropy or direction");
  render->add_option("--out", rn_out, "Output PNG path");
  render->add_option("--scale", rn_scale, "Pixels per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed())
      return cmd_simulate(scene_path, path_path, out_dir, duration, dt, seed, associated,
                          sim_noise, use_noise);
    if (build->parsed())
      return cmd_build_mod(bm_dataset, bm_out, bm_t0, bm_horizon, bm_bins, bm_kappa, bm_eps,
                           bm_normalize, bm_scale, bm_local, bm_grid, bm_fov);
    if (train_cmd->parsed()) {
      tr_cfg.use_augmentation = !tr_no_augment;
      return cmd_train(tr_datasets, tr_out, tr_cfg, tr_loss, tr_grid, tr_fov, tr_stride,
                       tr_bins, tr_kappa);
    }
    if (evaluate->parsed())
      return cmd_evaluate(ev_pred, ev_gt, ev_scope, ev_mask, ev_horizon, ev_out);
    if (gap->parsed())
      return cmd_detector_gap(dg_dataset, dg_t0, dg_horizon, dg_bins, dg_kappa, dg_noise,
                              dg_grid, dg_out);
    if (render->parsed()) return cmd_render(rn_grid, rn_layer, rn_out, rn_scale);
  } catch (const ConfigError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ModError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
