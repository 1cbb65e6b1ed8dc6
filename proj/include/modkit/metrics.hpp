#pragma once

#include <map>
#include <string>

#include "modkit/mod.hpp"

namespace modkit {

/// Named metric scalars for one (scope, horizon) evaluation.
struct MetricReport {
  std::map<std::string, double> values;
  std::string scope = "global";  // "local" or "global"
  double horizon = 0.0;          // seconds
};

double mse(const FloatMap& pred, const FloatMap& gt, const BoolMap* mask = nullptr);
double mae(const FloatMap& pred, const FloatMap& gt, const BoolMap* mask = nullptr);

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), valid
/// windows only, stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 1.
/// Inputs are expected in [0, 1]; the smaller map dimension must be >= 11.
double ssim(const FloatMap& pred, const FloatMap& gt);

/// Jensen-Shannon divergence between the maps normalized to cell
/// distributions, base-2 log so the result lies in [0, 1].
double js_divergence(const FloatMap& a, const FloatMap& b);

/// Bhattacharyya distance -ln sum_c sqrt(p q) over normalized maps; the
/// coefficient is clamped below by 1e-12 before the log.
double bhattacharyya(const FloatMap& a, const FloatMap& b);

/// Mean of (1 + cos dtheta) / 2 over jointly dir-valid cells.
double angular_similarity(const DescriptorMaps& d1, const DescriptorMaps& d2);

/// Discretized-direction classification accuracy and macro IoU over
/// jointly dir-valid cells; IoU averages over bins present in gt.
std::pair<double, double> direction_accuracy_iou(const DescriptorMaps& pred,
                                                 const DescriptorMaps& gt, int bins);

/// Full report comparing two descriptor map sets.
MetricReport evaluate_maps(const DescriptorMaps& pred, const DescriptorMaps& gt,
                           const BoolMap* mask, const std::string& scope, double horizon);

}  // namespace modkit
