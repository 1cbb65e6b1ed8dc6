#pragma once

#include <random>
#include <vector>

#include "modkit/fov.hpp"
#include "modkit/losses.hpp"
#include "modkit/mod.hpp"

namespace modkit {

/// Rasterized model input: 5 observation channels from the FOV-limited
/// local MoD plus 3 pose channels (Gaussian bump at the robot cell and
/// broadcast heading cos/sin).
struct FeatureTensor {
  static constexpr int kChannels = 8;
  static constexpr int kObsChannels = 5;  // flow, dir_cos, dir_sin, entropy, visibility
  static constexpr double kPoseBlobSigma = 2.0;  // cells

  GridSpec spec;
  std::vector<double> v;  // channel-major, row-major within a channel

  FeatureTensor() = default;
  explicit FeatureTensor(const GridSpec& s)
      : spec(s), v(static_cast<std::size_t>(kChannels) * s.num_cells(), 0.0) {}

  double& at(int ch, int row, int col) {
    return v[(static_cast<std::size_t>(ch) * spec.height + row) * spec.width + col];
  }
  double at(int ch, int row, int col) const {
    return v[(static_cast<std::size_t>(ch) * spec.height + row) * spec.width + col];
  }
};

FeatureTensor featurize(const DescriptorMaps& local, const VisibilityMap& vis,
                        const PoseStamped& pose);

/// Overwrite the three pose channels from the given pose.
void write_pose_channels(FeatureTensor& features, const PoseStamped& pose);

/// Zero-padded square convolution layer (kernel 1 or 3).
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 1;
  std::vector<double> w;  // [out][in][kr][kc]
  std::vector<double> b;  // [out]

  ConvLayer() = default;
  ConvLayer(int in, int out, int k)
      : in_ch(in), out_ch(out), ksize(k),
        w(static_cast<std::size_t>(in) * out * k * k, 0.0), b(out, 0.0) {}

  std::size_t num_params() const { return w.size() + b.size(); }
};

/// Two 3x3 convolutions (8->16->16, leaky rectifier) followed by three
/// 1x1 heads: flow (sigmoid), entropy (sigmoid), direction (2 ch, tanh).
struct ModelParams {
  ConvLayer conv1{FeatureTensor::kChannels, 16, 3};
  ConvLayer conv2{16, 16, 3};
  ConvLayer head_flow{16, 1, 1};
  ConvLayer head_entropy{16, 1, 1};
  ConvLayer head_dir{16, 2, 1};

  static constexpr double kLeakySlope = 0.01;

  std::size_t num_params() const;
  std::vector<double> to_vector() const;
  void from_vector(const std::vector<double>& flat);
  void randomize(std::uint64_t seed);
};

struct Prediction {
  FloatMap flow;
  FloatMap entropy;
  FloatMap dir_cos;
  FloatMap dir_sin;

  DescriptorMaps to_descriptor_maps(int bins) const;
};

/// Optional training-mode input dropout; absent => deterministic inference.
struct DropoutState {
  std::mt19937_64 rng;
  double input_dropout = 0.2;
};

Prediction forward(const ModelParams& params, const FeatureTensor& features,
                   DropoutState* dropout = nullptr);

struct BackwardResult {
  double loss = 0.0;
  double loss_flow = 0.0;
  double loss_entropy = 0.0;
  double loss_direction = 0.0;
  std::vector<double> grad;  // aligned with ModelParams::to_vector()
};

/// Total loss (flow + direction + entropy composites, equal weights) and
/// its exact reverse-mode gradient with respect to every parameter.
BackwardResult backward(const ModelParams& params, const FeatureTensor& features,
                        const DescriptorMaps& gt, const FloatMap& weights,
                        const LossConfig& cfg);

/// Smallest |pre-activation| across both hidden layers. Finite-difference
/// gradient checks are only meaningful away from the rectifier kinks, so
/// harnesses skip instances where this margin is below the FD step scale.
double min_abs_preactivation(const ModelParams& params, const FeatureTensor& features);

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int epochs = 50;
  double pose_dropout = 0.3;
  double input_dropout = 0.2;
  double feature_noise_sigma = 0.1;  // multiplicative, observation channels
  double feature_dropout = 0.01;     // per-entry, observation channels
  double pose_jitter_xy = 0.2;       // m
  double pose_jitter_rot = 0.08726646259971647;  // 5 degrees
  double horizon = 10.0;  // T, seconds
  double input_window = 2.0;  // n, seconds; must satisfy n < T
  bool use_augmentation = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Training-time perturbations: multiplicative Gaussian noise and
/// per-entry dropout on observation channels, pose jitter with the pose
/// channels re-featurized, and full pose-channel dropout.
void augment(FeatureTensor& features, PoseStamped& pose, const TrainConfig& cfg,
             std::mt19937_64& rng);

struct TrainSample {
  FeatureTensor features;
  PoseStamped pose;
  DescriptorMaps gt;
  FloatMap weights;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_curve;  // per-epoch mean training loss
};

/// Mini-batch AdamW with linear (polynomial, power 1) learning-rate decay
/// to zero and seeded shuffling. Deterministic for a fixed config.
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, ModelParams init = {});

// ---------------------------------------------------------------------------
// Dataset windowing pipeline shared by the CLI and the evaluation harness.

struct WindowSample {
  double t0 = 0.0;
  DescriptorMaps local;  // un-normalized local MoD over [t0, t0+n)
  VisibilityMap vis;
  PoseStamped pose;      // robot pose at t0 + n
  DescriptorMaps gt;     // un-normalized global MoD over [t0+n, t0+n+T)
};

/// Slice a dataset into (input window, supervision window) pairs with the
/// given stride. Throws InsufficientData when no window fits.
std::vector<WindowSample> make_windows(const Dataset& dataset, const GridSpec& spec,
                                       const ModParams& params, const FovSpec& fov,
                                       double input_window, double horizon, double stride);

/// Normalize a window with the dataset flow scale and assemble the
/// training sample (features, normalized gt, weight map).
TrainSample finalize_sample(const WindowSample& window, double flow_scale,
                            const LossConfig& cfg);

}  // namespace modkit
