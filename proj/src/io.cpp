#include "modkit/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace modkit::io {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

double require_number(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw ConfigError(path + "." + key, "missing or not a number");
  return j[key].get<double>();
}

double number_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

void atomic_write(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

// --- CSV -------------------------------------------------------------------

void write_detections_csv(const fs::path& path, std::span<const Detection> detections) {
  std::string out = "t,x,y,alpha,agent_id\n";
  for (const Detection& d : detections) {
    out += fmt_double(d.t) + "," + fmt_double(d.x) + "," + fmt_double(d.y) + "," +
           fmt_double(d.alpha) + ",";
    if (d.agent_id >= 0) out += std::to_string(d.agent_id);
    out += "\n";
  }
  atomic_write(path, out);
}

std::vector<Detection> read_detections_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "t,x,y,alpha,agent_id")
    throw IoError(path.string() + ": bad detections header");
  std::vector<Detection> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    Detection d;
    d.t = std::stod(f[0]);
    d.x = std::stod(f[1]);
    d.y = std::stod(f[2]);
    d.alpha = std::stod(f[3]);
    d.agent_id = f[4].empty() ? -1 : std::stoi(f[4]);
    out.push_back(d);
  }
  return out;
}

void write_poses_csv(const fs::path& path, std::span<const PoseStamped> poses) {
  std::string out = "t,x,y,z,qx,qy,qz,qw\n";
  for (const PoseStamped& p : poses) {
    out += fmt_double(p.t) + "," + fmt_double(p.x) + "," + fmt_double(p.y) + "," +
           fmt_double(p.z) + "," + fmt_double(p.qx) + "," + fmt_double(p.qy) + "," +
           fmt_double(p.qz) + "," + fmt_double(p.qw) + "\n";
  }
  atomic_write(path, out);
}

std::vector<PoseStamped> read_poses_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "t,x,y,z,qx,qy,qz,qw")
    throw IoError(path.string() + ": bad poses header");
  std::vector<PoseStamped> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw IoError(path.string() + ": malformed row '" + line + "'");
    out.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                   std::stod(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7])});
  }
  return out;
}

// --- Scene / robot path JSON ----------------------------------------------

Scene load_scene(const fs::path& path) {
  const json j = parse_json_file(path);
  Scene scene;
  scene.name = j.value("name", "");
  scene.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("walls")) {
    if (!j["walls"].is_array()) throw ConfigError("walls", "must be an array");
    for (std::size_t i = 0; i < j["walls"].size(); ++i) {
      const auto& w = j["walls"][i];
      if (!w.is_array() || w.size() != 4)
        throw ConfigError("walls[" + std::to_string(i) + "]", "expected [x1, y1, x2, y2]");
      scene.walls.push_back({{w[0].get<double>(), w[1].get<double>()},
                             {w[2].get<double>(), w[3].get<double>()}});
    }
  }
  if (!j.contains("agents") || !j["agents"].is_array())
    throw ConfigError("agents", "missing or not an array");
  for (std::size_t i = 0; i < j["agents"].size(); ++i) {
    const auto& a = j["agents"][i];
    const std::string base = "agents[" + std::to_string(i) + "]";
    AgentSpec spec;
    const std::string pattern = a.value("pattern", "waypoint_loop");
    if (pattern == "waypoint_loop") spec.pattern = MotionPattern::waypoint_loop;
    else if (pattern == "l_path") spec.pattern = MotionPattern::l_path;
    else if (pattern == "queue_then_go") spec.pattern = MotionPattern::queue_then_go;
    else throw ConfigError(base + ".pattern", "unknown pattern '" + pattern + "'");
    if (!a.contains("waypoints") || !a["waypoints"].is_array())
      throw ConfigError(base + ".waypoints", "missing or not an array");
    for (std::size_t k = 0; k < a["waypoints"].size(); ++k) {
      const auto& wp = a["waypoints"][k];
      if (!wp.is_array() || wp.size() != 2)
        throw ConfigError(base + ".waypoints[" + std::to_string(k) + "]", "expected [x, y]");
      spec.waypoints.push_back({wp[0].get<double>(), wp[1].get<double>()});
    }
    spec.speed = require_number(a, base, "speed");
    spec.heading_noise_sigma = number_or(a, "heading_noise_sigma", 0.0);
    spec.dwell_time = number_or(a, "dwell_time", 0.0);
    spec.start_offset = number_or(a, "start_offset", 0.0);
    scene.agents.push_back(std::move(spec));
  }
  validate_scene(scene);
  return scene;
}

void save_scene(const fs::path& path, const Scene& scene) {
  json j;
  j["version"] = 1;
  j["name"] = scene.name;
  j["seed"] = scene.seed;
  j["walls"] = json::array();
  for (const Segment& w : scene.walls) j["walls"].push_back({w.a.x, w.a.y, w.b.x, w.b.y});
  j["agents"] = json::array();
  for (const AgentSpec& a : scene.agents) {
    json ja;
    switch (a.pattern) {
      case MotionPattern::waypoint_loop: ja["pattern"] = "waypoint_loop"; break;
      case MotionPattern::l_path: ja["pattern"] = "l_path"; break;
      case MotionPattern::queue_then_go: ja["pattern"] = "queue_then_go"; break;
    }
    ja["waypoints"] = json::array();
    for (const Vec2& wp : a.waypoints) ja["waypoints"].push_back({wp.x, wp.y});
    ja["speed"] = a.speed;
    ja["heading_noise_sigma"] = a.heading_noise_sigma;
    ja["dwell_time"] = a.dwell_time;
    ja["start_offset"] = a.start_offset;
    j["agents"].push_back(std::move(ja));
  }
  atomic_write(path, j.dump(2) + "\n");
}

RobotPath load_robot_path(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.contains("poses") || !j["poses"].is_array())
    throw ConfigError("poses", "missing or not an array");
  RobotPath rp;
  for (std::size_t i = 0; i < j["poses"].size(); ++i) {
    const auto& p = j["poses"][i];
    if (!p.is_array() || p.size() != 8)
      throw ConfigError("poses[" + std::to_string(i) + "]",
                        "expected [t, x, y, z, qx, qy, qz, qw]");
    rp.poses.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                        p[3].get<double>(), p[4].get<double>(), p[5].get<double>(),
                        p[6].get<double>(), p[7].get<double>()});
  }
  validate_robot_path(rp);
  return rp;
}

void save_robot_path(const fs::path& path, const RobotPath& path_data) {
  json j;
  j["version"] = 1;
  j["poses"] = json::array();
  for (const PoseStamped& p : path_data.poses)
    j["poses"].push_back({p.t, p.x, p.y, p.z, p.qx, p.qy, p.qz, p.qw});
  atomic_write(path, j.dump(2) + "\n");
}

// --- Dataset directory -----------------------------------------------------

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  save_scene(dir / "scene.json", dataset.scene);
  write_detections_csv(dir / "detections.csv", dataset.detections);
  write_poses_csv(dir / "poses.csv", dataset.poses);
  json meta;
  meta["version"] = 1;
  meta["seed"] = dataset.seed;
  meta["dt"] = dataset.dt;
  meta["duration"] = dataset.duration;
  meta["associated"] = dataset.associated;
  meta["scene"] = "scene.json";
  meta["detections"] = "detections.csv";
  meta["poses"] = "poses.csv";
  meta["noise"] = {{"position_sigma", dataset.noise.position_sigma},
                   {"miss_rate", dataset.noise.miss_rate},
                   {"heading_sigma", dataset.noise.heading_sigma},
                   {"seed", dataset.noise.seed}};
  atomic_write(dir / "metadata.json", meta.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const json meta = parse_json_file(dir / "metadata.json");
  if (meta.value("version", 0) != 1)
    throw ConfigError("metadata.version", "unsupported dataset version");
  Dataset ds;
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.dt = require_number(meta, "metadata", "dt");
  ds.duration = require_number(meta, "metadata", "duration");
  ds.associated = meta.value("associated", false);
  if (meta.contains("noise")) {
    const auto& n = meta["noise"];
    ds.noise.position_sigma = n.value("position_sigma", 0.0);
    ds.noise.miss_rate = n.value("miss_rate", 0.0);
    ds.noise.heading_sigma = n.value("heading_sigma", 0.0);
    ds.noise.seed = n.value("seed", std::uint64_t{0});
  }
  ds.scene = load_scene(dir / meta.value("scene", "scene.json"));
  ds.detections = read_detections_csv(dir / meta.value("detections", "detections.csv"));
  ds.poses = read_poses_csv(dir / meta.value("poses", "poses.csv"));
  return ds;
}

// --- Binary grid container -------------------------------------------------

namespace {

template <typename T>
void append_raw(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(const std::string& bytes, std::size_t& off) {
  if (off + sizeof(T) > bytes.size()) throw IoError("grid file truncated");
  T value;
  std::memcpy(&value, bytes.data() + off, sizeof(T));
  off += sizeof(T);
  return value;
}

}  // namespace

void write_grid_file(const fs::path& path, const GridSpec& spec,
                     const std::vector<GridChannel>& channels) {
  std::string out = "MODG";
  append_raw<std::uint16_t>(out, 1);
  append_raw<std::uint32_t>(out, static_cast<std::uint32_t>(spec.width));
  append_raw<std::uint32_t>(out, static_cast<std::uint32_t>(spec.height));
  append_raw<double>(out, spec.origin_x);
  append_raw<double>(out, spec.origin_y);
  append_raw<double>(out, spec.cell_size);
  append_raw<std::uint16_t>(out, static_cast<std::uint16_t>(channels.size()));
  for (const GridChannel& ch : channels) {
    if (ch.data.size() != spec.num_cells())
      throw ShapeMismatch("grid file channel '" + ch.name + "' has wrong size");
    if (ch.name.size() > 255) throw IoError("channel name too long");
    append_raw<std::uint8_t>(out, static_cast<std::uint8_t>(ch.name.size()));
    out += ch.name;
    out.append(reinterpret_cast<const char*>(ch.data.data()), ch.data.size() * sizeof(float));
  }
  atomic_write(path, out);
}

std::pair<GridSpec, std::vector<GridChannel>> read_grid_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MODG")
    throw IoError(path.string() + ": bad magic");
  std::size_t off = 4;
  const auto version = read_raw<std::uint16_t>(bytes, off);
  if (version != 1) throw IoError(path.string() + ": unsupported version");
  GridSpec spec;
  spec.width = static_cast<int>(read_raw<std::uint32_t>(bytes, off));
  spec.height = static_cast<int>(read_raw<std::uint32_t>(bytes, off));
  spec.origin_x = read_raw<double>(bytes, off);
  spec.origin_y = read_raw<double>(bytes, off);
  spec.cell_size = read_raw<double>(bytes, off);
  const auto nch = read_raw<std::uint16_t>(bytes, off);
  std::vector<GridChannel> channels(nch);
  for (GridChannel& ch : channels) {
    const auto name_len = read_raw<std::uint8_t>(bytes, off);
    if (off + name_len > bytes.size()) throw IoError("grid file truncated");
    ch.name = bytes.substr(off, name_len);
    off += name_len;
    ch.data.resize(spec.num_cells());
    const std::size_t nbytes = ch.data.size() * sizeof(float);
    if (off + nbytes > bytes.size()) throw IoError("grid file truncated");
    std::memcpy(ch.data.data(), bytes.data() + off, nbytes);
    off += nbytes;
  }
  return {spec, std::move(channels)};
}

namespace {

GridChannel to_channel(const std::string& name, const std::vector<double>& v) {
  GridChannel ch{name, {}};
  ch.data.assign(v.begin(), v.end());
  return ch;
}

GridChannel to_channel(const std::string& name, const std::vector<std::uint8_t>& v) {
  GridChannel ch{name, {}};
  ch.data.reserve(v.size());
  for (auto b : v) ch.data.push_back(b ? 1.0F : 0.0F);
  return ch;
}

}  // namespace

void save_descriptor_maps(const fs::path& path, const DescriptorMaps& maps) {
  write_grid_file(path, maps.spec,
                  {to_channel("flow", maps.flow.v), to_channel("dir_cos", maps.dir_cos.v),
                   to_channel("dir_sin", maps.dir_sin.v), to_channel("entropy", maps.entropy.v),
                   to_channel("dir_valid", maps.dir_valid.v),
                   to_channel("flow_valid", maps.flow_valid.v)});
  json side;
  side["version"] = 1;
  side["bins"] = maps.bins;
  side["normalized"] = maps.normalized;
  side["flow_scale"] = maps.flow_scale;
  atomic_write(path.string() + ".json", side.dump(2) + "\n");
}

DescriptorMaps load_descriptor_maps(const fs::path& path) {
  auto [spec, channels] = read_grid_file(path);
  DescriptorMaps maps;
  maps.spec = spec;
  maps.flow = FloatMap(spec);
  maps.dir_cos = FloatMap(spec);
  maps.dir_sin = FloatMap(spec);
  maps.entropy = FloatMap(spec);
  maps.dir_valid = BoolMap(spec);
  maps.flow_valid = BoolMap(spec);
  for (const GridChannel& ch : channels) {
    auto copy_to = [&ch](std::vector<double>& dst) {
      dst.assign(ch.data.begin(), ch.data.end());
    };
    if (ch.name == "flow") copy_to(maps.flow.v);
    else if (ch.name == "dir_cos") copy_to(maps.dir_cos.v);
    else if (ch.name == "dir_sin") copy_to(maps.dir_sin.v);
    else if (ch.name == "entropy") copy_to(maps.entropy.v);
    else if (ch.name == "dir_valid")
      for (std::size_t i = 0; i < ch.data.size(); ++i) maps.dir_valid.v[i] = ch.data[i] != 0.0F;
    else if (ch.name == "flow_valid")
      for (std::size_t i = 0; i < ch.data.size(); ++i) maps.flow_valid.v[i] = ch.data[i] != 0.0F;
  }
  const fs::path side_path = path.string() + ".json";
  if (fs::exists(side_path)) {
    const json side = parse_json_file(side_path);
    maps.bins = side.value("bins", 8);
    maps.normalized = side.value("normalized", false);
    maps.flow_scale = side.value("flow_scale", 0.0);
  }
  return maps;
}

// --- Model parameters ------------------------------------------------------

void save_model(const fs::path& path, const ModelParams& params) {
  const std::vector<double> flat = params.to_vector();
  GridSpec spec;
  spec.width = static_cast<int>(flat.size());
  spec.height = 1;
  spec.cell_size = 1.0;
  GridChannel ch{"params", {}};
  ch.data.assign(flat.begin(), flat.end());
  write_grid_file(path, spec, {ch});

  json manifest;
  manifest["version"] = 1;
  manifest["num_params"] = flat.size();
  manifest["layers"] = json::array();
  for (const auto& [name, L] :
       std::initializer_list<std::pair<const char*, const ConvLayer*>>{
           {"conv1", &params.conv1},
           {"conv2", &params.conv2},
           {"head_flow", &params.head_flow},
           {"head_entropy", &params.head_entropy},
           {"head_dir", &params.head_dir}}) {
    manifest["layers"].push_back(
        {{"name", name}, {"in", L->in_ch}, {"out", L->out_ch}, {"ksize", L->ksize}});
  }
  atomic_write(path.string() + ".json", manifest.dump(2) + "\n");
}

ModelParams load_model(const fs::path& path) {
  auto [spec, channels] = read_grid_file(path);
  ModelParams params;
  for (const GridChannel& ch : channels) {
    if (ch.name != "params") continue;
    if (ch.data.size() != params.num_params())
      throw IoError(path.string() + ": parameter count mismatch");
    std::vector<double> flat(ch.data.begin(), ch.data.end());
    params.from_vector(flat);
    return params;
  }
  throw IoError(path.string() + ": no params channel");
}

// --- Reports ---------------------------------------------------------------

std::string metric_report_json(const MetricReport& report) {
  json j;
  j["version"] = 1;
  j["scope"] = report.scope;
  j["horizon"] = report.horizon;
  j["metrics"] = json::object();
  for (const auto& [name, value] : report.values) j["metrics"][name] = value;
  return j.dump(2) + "\n";
}

void save_metric_report(const fs::path& path, const MetricReport& report) {
  atomic_write(path, metric_report_json(report));
}

// --- PNG rendering ---------------------------------------------------------

namespace {

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

void append_chunk(std::string& out, const char type[5], const std::string& data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out += type;
  out += data;
  const auto crc =
      crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start), 4 + data.size());
  append_be32(out, static_cast<std::uint32_t>(crc));
}

void write_png(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int r = 0; r < height; ++r) {
    raw.push_back('\0');  // filter type 0
    raw.append(reinterpret_cast<const char*>(rgb.data() + static_cast<std::size_t>(r) * width * 3),
               static_cast<std::size_t>(width) * 3);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(comp_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &comp_len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                9) != Z_OK)
    throw IoError("png compression failed");
  compressed.resize(comp_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  append_be32(ihdr, static_cast<std::uint32_t>(width));
  append_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += '\x08';  // bit depth
  ihdr += '\x02';  // RGB
  ihdr += std::string(3, '\0');
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", "");
  atomic_write(path, out);
}

struct Rgb {
  std::uint8_t r, g, b;
};

// Perceptually-ordered sequential colormap (viridis-like stops).
Rgb scalar_color(double t) {
  static constexpr double stops[7][3] = {{68, 1, 84},    {72, 40, 120},  {62, 74, 137},
                                         {49, 104, 142}, {38, 130, 142}, {83, 197, 105},
                                         {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 6.0;
  const int k = std::min(5, static_cast<int>(t));
  const double u = t - k;
  return {static_cast<std::uint8_t>(stops[k][0] + u * (stops[k + 1][0] - stops[k][0])),
          static_cast<std::uint8_t>(stops[k][1] + u * (stops[k + 1][1] - stops[k][1])),
          static_cast<std::uint8_t>(stops[k][2] + u * (stops[k + 1][2] - stops[k][2]))};
}

Rgb hsv_color(double hue_rad, double sat, double val) {
  const double h = wrap_angle(hue_rad) / kTwoPi * 6.0;
  const int k = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = val * (1 - sat);
  const double q = val * (1 - sat * f);
  const double t = val * (1 - sat * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (k) {
    case 0: r = val; g = t; b = p; break;
    case 1: r = q; g = val; b = p; break;
    case 2: r = p; g = val; b = t; break;
    case 3: r = p; g = q; b = val; break;
    case 4: r = t; g = p; b = val; break;
    default: r = val; g = p; b = q; break;
  }
  return {static_cast<std::uint8_t>(r * 255), static_cast<std::uint8_t>(g * 255),
          static_cast<std::uint8_t>(b * 255)};
}

}  // namespace

void render_png(const fs::path& path, const DescriptorMaps& maps, RenderLayer layer, int scale) {
  if (scale < 1) throw ConfigError("scale", "must be >= 1");
  const int w = maps.spec.width * scale, h = maps.spec.height * scale;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);

  double max_val = 0.0;
  const FloatMap* scalar = layer == RenderLayer::flow ? &maps.flow : &maps.entropy;
  if (layer != RenderLayer::direction)
    for (double v : scalar->v) max_val = std::max(max_val, v);
  if (max_val <= 0.0) max_val = 1.0;

  for (int py = 0; py < h; ++py) {
    // Row 0 of the grid is at the image bottom (y grows upward in the world).
    const int row = maps.spec.height - 1 - py / scale;
    for (int px = 0; px < w; ++px) {
      const int col = px / scale;
      Rgb color{};
      if (layer == RenderLayer::direction) {
        if (maps.dir_valid.at(row, col)) {
          const double angle =
              std::atan2(maps.dir_sin.at(row, col), maps.dir_cos.at(row, col));
          color = hsv_color(angle, 1.0, 1.0);
        } else {
          color = {235, 235, 235};  // saturation 0: no valid direction
        }
      } else {
        color = scalar_color(scalar->at(row, col) / max_val);
      }
      const std::size_t i = (static_cast<std::size_t>(py) * w + px) * 3;
      rgb[i] = color.r;
      rgb[i + 1] = color.g;
      rgb[i + 2] = color.b;
    }
  }
  write_png(path, w, h, rgb);
}

}  // namespace modkit::io
