#include "modkit/ref.hpp"

#include <cmath>

namespace modkit::ref {

FloatMap compute_flow(const HistogramGrid& hist) {
  FloatMap flow(hist.spec());
  for (int r = 0; r < hist.spec().height; ++r)
    for (int c = 0; c < hist.spec().width; ++c) {
      double f = 0.0;
      for (int b = 0; b < hist.bins(); ++b) f += hist.count(r, c, b);
      flow.at(r, c) = f;
    }
  return flow;
}

void compute_direction(const HistogramGrid& hist, double kappa, FloatMap& dir_cos,
                       FloatMap& dir_sin, BoolMap& dir_valid) {
  const GridSpec& spec = hist.spec();
  const int B = hist.bins();
  dir_cos = FloatMap(spec);
  dir_sin = FloatMap(spec);
  dir_valid = BoolMap(spec);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      double f = 0.0;
      for (int b = 0; b < B; ++b) f += hist.count(r, c, b);
      if (f <= 0.0) continue;
      int best = 0;
      for (int b = 1; b < B; ++b)
        if (hist.count(r, c, b) > hist.count(r, c, best)) best = b;
      if (hist.count(r, c, best) > kappa * f / B) {
        const double angle = kTwoPi * best / B;
        dir_cos.at(r, c) = std::cos(angle);
        dir_sin.at(r, c) = std::sin(angle);
        dir_valid.set(r, c, true);
      }
    }
  }
}

FloatMap compute_entropy(const HistogramGrid& hist, double epsilon) {
  const GridSpec& spec = hist.spec();
  FloatMap ent(spec);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      double f = 0.0;
      for (int b = 0; b < hist.bins(); ++b) f += hist.count(r, c, b);
      if (f <= 0.0) continue;
      double e = 0.0;
      for (int b = 0; b < hist.bins(); ++b) {
        if (hist.count(r, c, b) == 0) continue;
        const double p = hist.count(r, c, b) / f;
        e -= p * std::log(p + epsilon);
      }
      ent.at(r, c) = e < 0.0 ? 0.0 : e;
    }
  }
  return ent;
}

double huber_value(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights,
                   double beta) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double d = std::abs(gt.v[i] - pred.v[i]);
    total += weights.v[i] * (d <= beta ? 0.5 * d * d : beta * d - 0.5 * beta * beta);
  }
  return total / static_cast<double>(pred.v.size());
}

double grad_struct_value(const FloatMap& pred, const FloatMap& gt, const FloatMap& weights) {
  const int w = pred.spec.width, h = pred.spec.height;
  double total = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx_gt = c + 1 < w ? gt.at(r, c + 1) - gt.at(r, c) : 0.0;
      const double gx_pr = c + 1 < w ? pred.at(r, c + 1) - pred.at(r, c) : 0.0;
      const double gy_gt = r + 1 < h ? gt.at(r + 1, c) - gt.at(r, c) : 0.0;
      const double gy_pr = r + 1 < h ? pred.at(r + 1, c) - pred.at(r, c) : 0.0;
      const double rx = gx_gt - gx_pr, ry = gy_gt - gy_pr;
      total += weights.at(r, c) * (rx * rx + ry * ry);
    }
  }
  return total / static_cast<double>(pred.v.size());
}

double angle_value(const FloatMap& pred_cos, const FloatMap& pred_sin, const FloatMap& gt_cos,
                   const FloatMap& gt_sin, const FloatMap& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred_cos.v.size(); ++i) {
    const double dc = pred_cos.v[i] - gt_cos.v[i];
    const double ds = pred_sin.v[i] - gt_sin.v[i];
    total += weights.v[i] * (dc * dc + ds * ds);
  }
  return total / static_cast<double>(pred_cos.v.size());
}

double ssim(const FloatMap& pred, const FloatMap& gt) {
  const int w = pred.spec.width, h = pred.spec.height;
  constexpr int kWin = 11;
  std::vector<double> kernel(kWin * kWin);
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - 5, dj = j - 5;
      kernel[i * kWin + j] = std::exp(-(di * di + dj * dj) / 4.5);
      ksum += kernel[i * kWin + j];
    }
  for (double& k : kernel) k /= ksum;

  double total = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + kWin <= h; ++r0) {
    for (int c0 = 0; c0 + kWin <= w; ++c0) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double k = kernel[i * kWin + j];
          const double x = pred.at(r0 + i, c0 + j);
          const double y = gt.at(r0 + i, c0 + j);
          mx += k * x;
          my += k * y;
          mxx += k * x * x;
          myy += k * y * y;
          mxy += k * x * y;
        }
      const double c1 = 1e-4, c2 = 9e-4;
      total += ((2 * mx * my + c1) * (2 * (mxy - mx * my) + c2)) /
               ((mx * mx + my * my + c1) * ((mxx - mx * mx) + (myy - my * my) + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace modkit::ref
