#pragma once

#include <functional>
#include <vector>

#include "modkit/grid.hpp"

namespace modkit {

struct LossConfig {
  double beta = 0.1;         // Huber quadratic/linear transition
  double lambda_grad = 1.0;  // structural term weight
  double w_valid = 5.0;
  double w_bg = 0.95;
};

/// Loss value together with its exact gradient w.r.t. the prediction.
struct LossResult {
  double value = 0.0;
  FloatMap grad;
};

/// Two-channel variant for the direction losses.
struct LossResult2 {
  double value = 0.0;
  FloatMap grad_cos;
  FloatMap grad_sin;
};

/// Weighted Huber loss averaged over all cells (background included).
LossResult huber_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                      double beta);

/// Weighted squared mismatch of forward-difference spatial gradients.
/// The last column (x) and last row (y) contribute zero; the weight is
/// taken at the cell where the difference is anchored.
LossResult grad_struct_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights);

/// Weighted MSE on the cosine channel plus weighted MSE on the sine
/// channel, each averaged over all cells.
LossResult2 angle_loss(const FloatMap& pred_cos, const FloatMap& pred_sin,
                       const FloatMap& gt_cos, const FloatMap& gt_sin,
                       const FloatMap& weights);

/// Huber + lambda_grad * structural term.
LossResult flow_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                     const LossConfig& cfg);
LossResult entropy_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                        const LossConfig& cfg);

/// Angle loss + lambda_grad * (structural term on cos + on sin).
LossResult2 direction_loss(const FloatMap& pred_cos, const FloatMap& pred_sin,
                           const FloatMap& gt_cos, const FloatMap& gt_sin,
                           const FloatMap& weights, const LossConfig& cfg);

/// Central-difference check of an analytic gradient: perturbs every entry
/// of x by +-h and returns the max relative error against `analytic_grad`
/// with an absolute floor of 1e-8 in the denominator.
double finite_diff_check(const std::function<double(const std::vector<double>&)>& value_fn,
                         const std::vector<double>& x, const std::vector<double>& analytic_grad,
                         double h = 1e-4);

}  // namespace modkit
