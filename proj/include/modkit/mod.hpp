#pragma once

#include <span>

#include "modkit/grid.hpp"

namespace modkit {

/// The three motion descriptors derived from a histogram grid:
/// per-cell flow magnitude, dominant direction (as cos/sin), and
/// directional entropy, plus their validity masks.
struct DescriptorMaps {
  GridSpec spec;
  int bins = 8;
  bool normalized = false;
  double flow_scale = 0.0;  // divisor used when normalized

  FloatMap flow;
  FloatMap dir_cos;
  FloatMap dir_sin;
  FloatMap entropy;
  BoolMap dir_valid;
  BoolMap flow_valid;

  bool operator==(const DescriptorMaps&) const = default;
};

struct ModParams {
  int bins = 8;
  double kappa = 1.5;       // dominance factor over the uniform level
  double epsilon = 1e-12;   // entropy log guard
  bool normalize = false;
  double flow_scale = 0.0;  // 0: derive from the data (max cell flow)
};

/// Per-cell total detection count: f_c = sum_b h_c(b).
FloatMap compute_flow(const HistogramGrid& hist);

/// Dominant direction per cell. The argmax bin (ties to the lowest index)
/// is reported only where its count exceeds kappa times the uniform level
/// f_c / B. Invalid and empty cells carry (0, 0).
void compute_direction(const HistogramGrid& hist, double kappa, FloatMap& dir_cos,
                       FloatMap& dir_sin, BoolMap& dir_valid);

/// Shannon entropy of each cell's orientation distribution (natural log).
/// Zero-count bins contribute exactly 0; occupied bins use log(p + eps).
/// Empty cells carry 0.
FloatMap compute_entropy(const HistogramGrid& hist, double epsilon = 1e-12);

/// All three descriptors from one histogram grid.
DescriptorMaps descriptors_from_histogram(const HistogramGrid& hist, const ModParams& p);

/// Scale flow into [0,1] by flow_scale (clipped) and entropy by ln(bins).
void normalize_maps(DescriptorMaps& maps, double flow_scale);

/// Accumulate detections with t in [t0, t0 + horizon) and derive the maps.
/// An empty window is not an error: all cells come back invalid.
DescriptorMaps build_mod(std::span<const Detection> detections, double t0, double horizon,
                         const GridSpec& spec, const ModParams& p);

/// Histogram accumulated over [t0, t0 + horizon); building block of build_mod.
HistogramGrid accumulate_window(std::span<const Detection> detections, double t0,
                                double horizon, const GridSpec& spec, int bins);

/// Per-cell loss weights: w_valid on motion-bearing cells, w_bg elsewhere.
FloatMap weight_map(const DescriptorMaps& maps, double w_valid, double w_bg);

/// q-th percentile (q in [0,100]) of the positive entries of the given
/// flow maps; used as the dataset flow normalizer. Returns 1 if no
/// positive entries exist.
double positive_flow_percentile(std::span<const DescriptorMaps> maps, double q);

}  // namespace modkit
