#include "modkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace modkit {

namespace {

using Planes = std::vector<std::vector<double>>;  // [channel] -> H*W, row-major

Planes planes_from_features(const FeatureTensor& f) {
  const std::size_t n = f.spec.num_cells();
  Planes p(FeatureTensor::kChannels, std::vector<double>(n));
  for (int ch = 0; ch < FeatureTensor::kChannels; ++ch)
    std::copy_n(f.v.begin() + static_cast<std::size_t>(ch) * n, n, p[ch].begin());
  return p;
}

Planes conv_forward(const ConvLayer& L, const Planes& in, int H, int W) {
  const int pad = L.ksize / 2;
  Planes out(L.out_ch, std::vector<double>(static_cast<std::size_t>(H) * W));
#pragma omp parallel for schedule(static)
  for (int o = 0; o < L.out_ch; ++o) {
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        double acc = L.b[o];
        for (int i = 0; i < L.in_ch; ++i) {
          for (int kr = 0; kr < L.ksize; ++kr) {
            const int rr = r + kr - pad;
            if (rr < 0 || rr >= H) continue;
            for (int kc = 0; kc < L.ksize; ++kc) {
              const int cc = c + kc - pad;
              if (cc < 0 || cc >= W) continue;
              acc += L.w[((static_cast<std::size_t>(o) * L.in_ch + i) * L.ksize + kr) * L.ksize +
                         kc] *
                     in[i][static_cast<std::size_t>(rr) * W + cc];
            }
          }
        }
        out[o][static_cast<std::size_t>(r) * W + c] = acc;
      }
    }
  }
  return out;
}

void conv_backward(const ConvLayer& L, const Planes& in, const Planes& dout, int H, int W,
                   std::vector<double>& dw, std::vector<double>& db, Planes* din) {
  const int pad = L.ksize / 2;
  dw.assign(L.w.size(), 0.0);
  db.assign(L.b.size(), 0.0);
  if (din) din->assign(L.in_ch, std::vector<double>(static_cast<std::size_t>(H) * W, 0.0));
  for (int o = 0; o < L.out_ch; ++o) {
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const double g = dout[o][static_cast<std::size_t>(r) * W + c];
        if (g == 0.0) continue;
        db[o] += g;
        for (int i = 0; i < L.in_ch; ++i) {
          for (int kr = 0; kr < L.ksize; ++kr) {
            const int rr = r + kr - pad;
            if (rr < 0 || rr >= H) continue;
            for (int kc = 0; kc < L.ksize; ++kc) {
              const int cc = c + kc - pad;
              if (cc < 0 || cc >= W) continue;
              const std::size_t wi =
                  ((static_cast<std::size_t>(o) * L.in_ch + i) * L.ksize + kr) * L.ksize + kc;
              dw[wi] += g * in[i][static_cast<std::size_t>(rr) * W + cc];
              if (din) (*din)[i][static_cast<std::size_t>(rr) * W + cc] += g * L.w[wi];
            }
          }
        }
      }
    }
  }
}

void leaky_inplace(Planes& p) {
  for (auto& plane : p)
    for (double& x : plane)
      if (x < 0.0) x *= ModelParams::kLeakySlope;
}

// Gradient through the leaky rectifier given the pre-activation values.
void leaky_backward(const Planes& pre, Planes& grad) {
  for (std::size_t ch = 0; ch < pre.size(); ++ch)
    for (std::size_t i = 0; i < pre[ch].size(); ++i)
      if (pre[ch][i] < 0.0) grad[ch][i] *= ModelParams::kLeakySlope;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardCache {
  Planes input;
  Planes pre1, act1;
  Planes pre2, act2;
  Planes z_flow, z_entropy, z_dir;
  Prediction pred;
};

ForwardCache forward_cached(const ModelParams& params, const FeatureTensor& features,
                            DropoutState* dropout) {
  const int H = features.spec.height, W = features.spec.width;
  ForwardCache cache;
  cache.input = planes_from_features(features);
  if (dropout && dropout->input_dropout > 0.0) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double keep = 1.0 - dropout->input_dropout;
    for (auto& plane : cache.input)
      for (double& x : plane) x = uniform(dropout->rng) < keep ? x / keep : 0.0;
  }
  cache.pre1 = conv_forward(params.conv1, cache.input, H, W);
  cache.act1 = cache.pre1;
  leaky_inplace(cache.act1);
  cache.pre2 = conv_forward(params.conv2, cache.act1, H, W);
  cache.act2 = cache.pre2;
  leaky_inplace(cache.act2);
  cache.z_flow = conv_forward(params.head_flow, cache.act2, H, W);
  cache.z_entropy = conv_forward(params.head_entropy, cache.act2, H, W);
  cache.z_dir = conv_forward(params.head_dir, cache.act2, H, W);

  cache.pred.flow = FloatMap(features.spec);
  cache.pred.entropy = FloatMap(features.spec);
  cache.pred.dir_cos = FloatMap(features.spec);
  cache.pred.dir_sin = FloatMap(features.spec);
  for (std::size_t i = 0; i < features.spec.num_cells(); ++i) {
    cache.pred.flow.v[i] = sigmoid(cache.z_flow[0][i]);
    cache.pred.entropy.v[i] = sigmoid(cache.z_entropy[0][i]);
    cache.pred.dir_cos.v[i] = std::tanh(cache.z_dir[0][i]);
    cache.pred.dir_sin.v[i] = std::tanh(cache.z_dir[1][i]);
  }
  return cache;
}

}  // namespace

FeatureTensor featurize(const DescriptorMaps& local, const VisibilityMap& vis,
                        const PoseStamped& pose) {
  if (local.spec != vis.spec) throw SpecMismatch("featurize: spec mismatch");
  FeatureTensor f(local.spec);
  for (int r = 0; r < local.spec.height; ++r) {
    for (int c = 0; c < local.spec.width; ++c) {
      const bool seen = vis.at(r, c);
      f.at(0, r, c) = seen ? local.flow.at(r, c) : 0.0;
      f.at(1, r, c) = seen ? local.dir_cos.at(r, c) : 0.0;
      f.at(2, r, c) = seen ? local.dir_sin.at(r, c) : 0.0;
      f.at(3, r, c) = seen ? local.entropy.at(r, c) : 0.0;
      f.at(4, r, c) = seen ? 1.0 : 0.0;
    }
  }
  write_pose_channels(f, pose);
  return f;
}

void write_pose_channels(FeatureTensor& f, const PoseStamped& pose) {
  const GridSpec& spec = f.spec;
  const double cx = (pose.x - spec.origin_x) / spec.cell_size - 0.5;
  const double cy = (pose.y - spec.origin_y) / spec.cell_size - 0.5;
  const double inv_two_sigma2 =
      1.0 / (2.0 * FeatureTensor::kPoseBlobSigma * FeatureTensor::kPoseBlobSigma);
  const double yaw = pose.yaw();
  const double cyaw = std::cos(yaw), syaw = std::sin(yaw);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const double dr = r - cy, dc = c - cx;
      f.at(5, r, c) = std::exp(-(dr * dr + dc * dc) * inv_two_sigma2);
      f.at(6, r, c) = cyaw;
      f.at(7, r, c) = syaw;
    }
  }
}

std::size_t ModelParams::num_params() const {
  return conv1.num_params() + conv2.num_params() + head_flow.num_params() +
         head_entropy.num_params() + head_dir.num_params();
}

std::vector<double> ModelParams::to_vector() const {
  std::vector<double> flat;
  flat.reserve(num_params());
  for (const ConvLayer* L : {&conv1, &conv2, &head_flow, &head_entropy, &head_dir}) {
    flat.insert(flat.end(), L->w.begin(), L->w.end());
    flat.insert(flat.end(), L->b.begin(), L->b.end());
  }
  return flat;
}

void ModelParams::from_vector(const std::vector<double>& flat) {
  if (flat.size() != num_params()) throw ShapeMismatch("ModelParams::from_vector: size mismatch");
  std::size_t off = 0;
  for (ConvLayer* L : {&conv1, &conv2, &head_flow, &head_entropy, &head_dir}) {
    std::copy_n(flat.begin() + off, L->w.size(), L->w.begin());
    off += L->w.size();
    std::copy_n(flat.begin() + off, L->b.size(), L->b.begin());
    off += L->b.size();
  }
}

void ModelParams::randomize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  for (ConvLayer* L : {&conv1, &conv2, &head_flow, &head_entropy, &head_dir}) {
    const double scale = std::sqrt(2.0 / (L->in_ch * L->ksize * L->ksize));
    for (double& w : L->w) w = scale * unit_normal(rng);
    std::fill(L->b.begin(), L->b.end(), 0.0);
  }
}

DescriptorMaps Prediction::to_descriptor_maps(int bins) const {
  DescriptorMaps m;
  m.spec = flow.spec;
  m.bins = bins;
  m.normalized = true;
  m.flow = flow;
  m.entropy = entropy;
  m.dir_cos = dir_cos;
  m.dir_sin = dir_sin;
  m.flow_valid = BoolMap(m.spec, true);
  m.dir_valid = BoolMap(m.spec, true);
  return m;
}

Prediction forward(const ModelParams& params, const FeatureTensor& features,
                   DropoutState* dropout) {
  return forward_cached(params, features, dropout).pred;
}

double min_abs_preactivation(const ModelParams& params, const FeatureTensor& features) {
  const ForwardCache cache = forward_cached(params, features, nullptr);
  double margin = std::numeric_limits<double>::infinity();
  for (const Planes* p : {&cache.pre1, &cache.pre2})
    for (const auto& plane : *p)
      for (double x : plane) margin = std::min(margin, std::abs(x));
  return margin;
}

BackwardResult backward(const ModelParams& params, const FeatureTensor& features,
                        const DescriptorMaps& gt, const FloatMap& weights,
                        const LossConfig& cfg) {
  const int H = features.spec.height, W = features.spec.width;
  ForwardCache cache = forward_cached(params, features, nullptr);
  const Prediction& pred = cache.pred;

  // Direction loss weights: dir-invalid cells carry the background weight
  // and a (0,0) target. Capped by the supplied weight so a zeroed weight
  // map still silences every term.
  FloatMap w_dir = weights;
  for (std::size_t i = 0; i < w_dir.v.size(); ++i)
    if (!gt.dir_valid.v[i]) w_dir.v[i] = std::min(weights.v[i], cfg.w_bg);

  const LossResult l_flow = flow_loss(pred.flow, gt.flow, weights, cfg);
  const LossResult l_entropy = entropy_loss(pred.entropy, gt.entropy, weights, cfg);
  const LossResult2 l_dir =
      direction_loss(pred.dir_cos, pred.dir_sin, gt.dir_cos, gt.dir_sin, w_dir, cfg);

  BackwardResult out;
  out.loss_flow = l_flow.value;
  out.loss_entropy = l_entropy.value;
  out.loss_direction = l_dir.value;
  out.loss = l_flow.value + l_entropy.value + l_dir.value;

  const std::size_t n = features.spec.num_cells();
  Planes dz_flow(1, std::vector<double>(n)), dz_entropy(1, std::vector<double>(n));
  Planes dz_dir(2, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double yf = pred.flow.v[i];
    const double ye = pred.entropy.v[i];
    const double yc = pred.dir_cos.v[i];
    const double ys = pred.dir_sin.v[i];
    dz_flow[0][i] = l_flow.grad.v[i] * yf * (1.0 - yf);
    dz_entropy[0][i] = l_entropy.grad.v[i] * ye * (1.0 - ye);
    dz_dir[0][i] = l_dir.grad_cos.v[i] * (1.0 - yc * yc);
    dz_dir[1][i] = l_dir.grad_sin.v[i] * (1.0 - ys * ys);
  }

  std::vector<double> dw_hf, db_hf, dw_he, db_he, dw_hd, db_hd;
  Planes dact2_f, dact2_e, dact2_d;
  conv_backward(params.head_flow, cache.act2, dz_flow, H, W, dw_hf, db_hf, &dact2_f);
  conv_backward(params.head_entropy, cache.act2, dz_entropy, H, W, dw_he, db_he, &dact2_e);
  conv_backward(params.head_dir, cache.act2, dz_dir, H, W, dw_hd, db_hd, &dact2_d);

  Planes dact2 = dact2_f;
  for (std::size_t ch = 0; ch < dact2.size(); ++ch)
    for (std::size_t i = 0; i < dact2[ch].size(); ++i)
      dact2[ch][i] += dact2_e[ch][i] + dact2_d[ch][i];

  leaky_backward(cache.pre2, dact2);
  std::vector<double> dw2, db2;
  Planes dact1;
  conv_backward(params.conv2, cache.act1, dact2, H, W, dw2, db2, &dact1);

  leaky_backward(cache.pre1, dact1);
  std::vector<double> dw1, db1;
  conv_backward(params.conv1, cache.input, dact1, H, W, dw1, db1, nullptr);

  out.grad.reserve(params.num_params());
  for (const auto* pair :
       {&dw1, &db1, &dw2, &db2, &dw_hf, &db_hf, &dw_he, &db_he, &dw_hd, &db_hd})
    out.grad.insert(out.grad.end(), pair->begin(), pair->end());
  return out;
}

void TrainConfig::validate() const {
  if (!(input_window < horizon))
    throw ConfigError("input_window", "must be smaller than the horizon");
  for (auto [name, rate] : {std::pair<const char*, double>{"pose_dropout", pose_dropout},
                            {"input_dropout", input_dropout},
                            {"feature_dropout", feature_dropout}})
    if (rate < 0.0 || rate > 1.0) throw ConfigError(name, "must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
}

void augment(FeatureTensor& features, PoseStamped& pose, const TrainConfig& cfg,
             std::mt19937_64& rng) {
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t n = features.spec.num_cells();

  if (cfg.feature_noise_sigma > 0.0) {
    for (int ch = 0; ch < FeatureTensor::kObsChannels; ++ch)
      for (std::size_t i = 0; i < n; ++i)
        features.v[ch * n + i] *= 1.0 + cfg.feature_noise_sigma * unit_normal(rng);
  }
  if (cfg.feature_dropout > 0.0) {
    for (int ch = 0; ch < FeatureTensor::kObsChannels; ++ch)
      for (std::size_t i = 0; i < n; ++i)
        if (uniform(rng) < cfg.feature_dropout) features.v[ch * n + i] = 0.0;
  }
  if (cfg.pose_jitter_xy > 0.0 || cfg.pose_jitter_rot > 0.0) {
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    pose.x += cfg.pose_jitter_xy * sym(rng);
    pose.y += cfg.pose_jitter_xy * sym(rng);
    const double dyaw = cfg.pose_jitter_rot * sym(rng);
    const double yaw = pose.yaw() + dyaw;
    pose.qx = pose.qy = 0.0;
    pose.qz = std::sin(0.5 * yaw);
    pose.qw = std::cos(0.5 * yaw);
    write_pose_channels(features, pose);
  }
  if (cfg.pose_dropout > 0.0 && uniform(rng) < cfg.pose_dropout) {
    for (int ch = FeatureTensor::kObsChannels; ch < FeatureTensor::kChannels; ++ch)
      std::fill_n(features.v.begin() + static_cast<std::size_t>(ch) * n, n, 0.0);
  }
}

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, ModelParams init) {
  if (dataset.empty()) throw EmptyDataset("train: no samples");
  cfg.validate();

  TrainResult result;
  result.params = std::move(init);
  std::vector<double> theta = result.params.to_vector();
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batches_per_epoch =
      (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.epochs);
  std::size_t step_idx = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<double> grad(theta.size(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const TrainSample& s = dataset[order[k]];
        FeatureTensor features = s.features;
        PoseStamped pose = s.pose;
        if (cfg.use_augmentation) augment(features, pose, cfg, rng);
        if (cfg.input_dropout > 0.0) {
          std::uniform_real_distribution<double> uniform(0.0, 1.0);
          const double keep = 1.0 - cfg.input_dropout;
          for (double& x : features.v) x = uniform(rng) < keep ? x / keep : 0.0;
        }
        const BackwardResult b = backward(result.params, features, s.gt, s.weights, loss_cfg);
        epoch_loss += b.loss;
        ++epoch_count;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += b.grad[i];
      }
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      const double lr =
          cfg.learning_rate * (1.0 - static_cast<double>(step_idx) / total_steps);
      ++step_idx;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_idx));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_idx));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i] * inv_batch;
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr * (mhat / (std::sqrt(vhat) + kEps) + cfg.weight_decay * theta[i]);
      }
      result.params.from_vector(theta);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(epoch_count));
  }
  return result;
}

std::vector<WindowSample> make_windows(const Dataset& dataset, const GridSpec& spec,
                                       const ModParams& params, const FovSpec& fov,
                                       double input_window, double horizon, double stride) {
  if (!(stride > 0.0)) throw ConfigError("stride", "must be > 0");
  ModParams raw = params;
  raw.normalize = false;

  RobotPath path{dataset.poses};
  std::vector<WindowSample> out;
  for (double t0 = 0.0; t0 + input_window + horizon <= dataset.duration + 1e-9; t0 += stride) {
    WindowSample w;
    w.t0 = t0;
    auto [local, vis] = local_stefmap(dataset.detections, path, fov, dataset.scene.walls, t0,
                                      input_window, spec, raw);
    w.local = std::move(local);
    w.vis = std::move(vis);
    w.pose = interpolate_pose(path, t0 + input_window, /*clamp=*/true);
    w.gt = build_mod(dataset.detections, t0 + input_window, horizon, spec, raw);
    out.push_back(std::move(w));
  }
  if (out.empty())
    throw InsufficientData("make_windows: dataset shorter than input_window + horizon");
  return out;
}

TrainSample finalize_sample(const WindowSample& window, double flow_scale,
                            const LossConfig& cfg) {
  TrainSample s;
  DescriptorMaps local = window.local;
  normalize_maps(local, flow_scale);
  s.gt = window.gt;
  normalize_maps(s.gt, flow_scale);
  s.pose = window.pose;
  s.features = featurize(local, window.vis, window.pose);
  s.weights = weight_map(s.gt, cfg.w_valid, cfg.w_bg);
  return s;
}

}  // namespace modkit
