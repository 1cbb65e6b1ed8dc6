#include "modkit/losses.hpp"

#include <cmath>

namespace modkit {

namespace {

void require_same_shape(const FloatMap& a, const FloatMap& b, const char* what) {
  if (a.spec.width != b.spec.width || a.spec.height != b.spec.height)
    throw ShapeMismatch(std::string(what) + ": shape mismatch");
}

}  // namespace

LossResult huber_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                      double beta) {
  require_same_shape(pred, gt, "huber_loss");
  require_same_shape(pred, weights, "huber_loss");
  const std::size_t n = pred.v.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult out;
  out.grad = FloatMap(pred.spec);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double diff = gt.v[i] - pred.v[i];
    const double w = weights.v[i] * inv_n;
    if (std::abs(diff) <= beta) {
      // d/dpred of 0.5*(gt - pred)^2
      out.grad.v[i] = -w * diff;
    } else {
      out.grad.v[i] = -w * beta * (diff > 0.0 ? 1.0 : -1.0);
    }
  }
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = gt.v[i] - pred.v[i];
    const double l = std::abs(diff) <= beta ? 0.5 * diff * diff
                                            : beta * std::abs(diff) - 0.5 * beta * beta;
    value += weights.v[i] * l;
  }
  out.value = value * inv_n;
  return out;
}

LossResult grad_struct_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights) {
  require_same_shape(pred, gt, "grad_struct_loss");
  require_same_shape(pred, weights, "grad_struct_loss");
  const int w = pred.spec.width, h = pred.spec.height;
  if (w < 2 || h < 2) throw TooSmall("grad_struct_loss: need at least 2x2");
  const double inv_n = 1.0 / static_cast<double>(pred.v.size());

  LossResult out;
  out.grad = FloatMap(pred.spec);
  double value = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double wc = weights.at(r, c) * inv_n;
      if (c + 1 < w) {
        const double rx = (gt.at(r, c + 1) - gt.at(r, c)) - (pred.at(r, c + 1) - pred.at(r, c));
        value += wc * rx * rx;
        // d rx / d pred(r,c) = +1, d rx / d pred(r,c+1) = -1
        out.grad.at(r, c) += 2.0 * wc * rx;
        out.grad.at(r, c + 1) -= 2.0 * wc * rx;
      }
      if (r + 1 < h) {
        const double ry = (gt.at(r + 1, c) - gt.at(r, c)) - (pred.at(r + 1, c) - pred.at(r, c));
        value += wc * ry * ry;
        out.grad.at(r, c) += 2.0 * wc * ry;
        out.grad.at(r + 1, c) -= 2.0 * wc * ry;
      }
    }
  }
  out.value = value;
  return out;
}

LossResult2 angle_loss(const FloatMap& pred_cos, const FloatMap& pred_sin,
                       const FloatMap& gt_cos, const FloatMap& gt_sin,
                       const FloatMap& weights) {
  require_same_shape(pred_cos, gt_cos, "angle_loss");
  require_same_shape(pred_sin, gt_sin, "angle_loss");
  require_same_shape(pred_cos, weights, "angle_loss");
  const std::size_t n = pred_cos.v.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  LossResult2 out;
  out.grad_cos = FloatMap(pred_cos.spec);
  out.grad_sin = FloatMap(pred_sin.spec);
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.v[i] * inv_n;
    const double dc = pred_cos.v[i] - gt_cos.v[i];
    const double ds = pred_sin.v[i] - gt_sin.v[i];
    value += w * (dc * dc + ds * ds);
    out.grad_cos.v[i] = 2.0 * w * dc;
    out.grad_sin.v[i] = 2.0 * w * ds;
  }
  out.value = value;
  return out;
}

namespace {

LossResult huber_plus_grad(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                           const LossConfig& cfg) {
  LossResult h = huber_loss(pred, gt, weights, cfg.beta);
  if (cfg.lambda_grad == 0.0) return h;
  const LossResult g = grad_struct_loss(pred, gt, weights);
  h.value += cfg.lambda_grad * g.value;
  for (std::size_t i = 0; i < h.grad.v.size(); ++i)
    h.grad.v[i] += cfg.lambda_grad * g.grad.v[i];
  return h;
}

}  // namespace

LossResult flow_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                     const LossConfig& cfg) {
  return huber_plus_grad(pred, gt, weights, cfg);
}

LossResult entropy_loss(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                        const LossConfig& cfg) {
  return huber_plus_grad(pred, gt, weights, cfg);
}

LossResult2 direction_loss(const FloatMap& pred_cos, const FloatMap& pred_sin,
                           const FloatMap& gt_cos, const FloatMap& gt_sin,
                           const FloatMap& weights, const LossConfig& cfg) {
  LossResult2 out = angle_loss(pred_cos, pred_sin, gt_cos, gt_sin, weights);
  if (cfg.lambda_grad == 0.0) return out;
  const LossResult gc = grad_struct_loss(pred_cos, gt_cos, weights);
  const LossResult gs = grad_struct_loss(pred_sin, gt_sin, weights);
  out.value += cfg.lambda_grad * (gc.value + gs.value);
  for (std::size_t i = 0; i < out.grad_cos.v.size(); ++i) {
    out.grad_cos.v[i] += cfg.lambda_grad * gc.grad.v[i];
    out.grad_sin.v[i] += cfg.lambda_grad * gs.grad.v[i];
  }
  return out;
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& value_fn,
                         const std::vector<double>& x, const std::vector<double>& analytic_grad,
                         double h) {
  std::vector<double> pert = x;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pert[i] = x[i] + h;
    const double fp = value_fn(pert);
    pert[i] = x[i] - h;
    const double fm = value_fn(pert);
    pert[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic_grad[i]), 1e-8});
    max_rel = std::max(max_rel, std::abs(numeric - analytic_grad[i]) / denom);
  }
  return max_rel;
}

}  // namespace modkit
