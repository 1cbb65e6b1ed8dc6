#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "modkit/metrics.hpp"
#include "modkit/mod.hpp"
#include "modkit/model.hpp"
#include "modkit/sim.hpp"

namespace modkit::io {

namespace fs = std::filesystem;

// --- CSV streams -----------------------------------------------------------
// Detections: header "t,x,y,alpha,agent_id", 9 significant digits,
// agent_id left empty when the identity is unknown.
// Poses: header "t,x,y,z,qx,qy,qz,qw".

void write_detections_csv(const fs::path& path, std::span<const Detection> detections);
std::vector<Detection> read_detections_csv(const fs::path& path);

void write_poses_csv(const fs::path& path, std::span<const PoseStamped> poses);
std::vector<PoseStamped> read_poses_csv(const fs::path& path);

// --- JSON configuration ----------------------------------------------------

Scene load_scene(const fs::path& path);
void save_scene(const fs::path& path, const Scene& scene);

RobotPath load_robot_path(const fs::path& path);
void save_robot_path(const fs::path& path, const RobotPath& path_data);

// --- Dataset directory -----------------------------------------------------
// scene.json + detections.csv + poses.csv + metadata.json

void write_dataset(const fs::path& dir, const Dataset& dataset);
Dataset read_dataset(const fs::path& dir);

// --- Binary grid container -------------------------------------------------
// magic "MODG", u16 version = 1, u32 width, u32 height, f64 origin_x,
// f64 origin_y, f64 cell_size, u16 channel_count, then per channel:
// u8 name length + name bytes + width*height little-endian f32, row-major.

struct GridChannel {
  std::string name;
  std::vector<float> data;
};

void write_grid_file(const fs::path& path, const GridSpec& spec,
                     const std::vector<GridChannel>& channels);
std::pair<GridSpec, std::vector<GridChannel>> read_grid_file(const fs::path& path);

/// Descriptor maps as a grid file (channels flow, dir_cos, dir_sin,
/// entropy, dir_valid, flow_valid) plus a JSON sidecar at <path>.json
/// carrying bins / normalization metadata.
void save_descriptor_maps(const fs::path& path, const DescriptorMaps& maps);
DescriptorMaps load_descriptor_maps(const fs::path& path);

// --- Model parameters ------------------------------------------------------
// Grid container with a single 1 x num_params "params" channel and a
// manifest JSON sidecar describing the layer layout.

void save_model(const fs::path& path, const ModelParams& params);
ModelParams load_model(const fs::path& path);

// --- Reports ---------------------------------------------------------------

std::string metric_report_json(const MetricReport& report);
void save_metric_report(const fs::path& path, const MetricReport& report);

// --- Rendering -------------------------------------------------------------

enum class RenderLayer { flow, entropy, direction };

/// Rasterize one descriptor layer to an RGB PNG, `scale` pixels per cell.
/// Scalar layers use a sequential colormap; the direction layer encodes
/// angle as hue with saturation 0 on invalid cells.
void render_png(const fs::path& path, const DescriptorMaps& maps, RenderLayer layer,
                int scale = 1);

/// Write bytes atomically (temp file + rename).
void atomic_write(const fs::path& path, const std::string& bytes);

}  // namespace modkit::io
