#pragma once

#include "modkit/grid.hpp"
#include "modkit/mod.hpp"

namespace modkit::ref {

// Serial reference implementations of the parallel kernels. Written as
// straight-line brute force, independent of the OpenMP code paths; the
// test suites compare against them and the benchmark tool times both.

FloatMap compute_flow(const HistogramGrid& hist);
void compute_direction(const HistogramGrid& hist, double kappa, FloatMap& dir_cos,
                       FloatMap& dir_sin, BoolMap& dir_valid);
FloatMap compute_entropy(const HistogramGrid& hist, double epsilon = 1e-12);

double huber_value(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                   double beta);
double grad_struct_value(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights);
double angle_value(const FloatMap& pred_cos, const FloatMap& pred_sin, const FloatMap& gt_cos,
                   const FloatMap& gt_sin, const FloatMap& weights);

double ssim(const FloatMap& pred, const FloatMap& gt);

}  // namespace modkit::ref
