#include "modkit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace modkit {

namespace {

void require_same_shape(const FloatMap& a, const FloatMap& b, const char* what) {
  if (a.spec.width != b.spec.width || a.spec.height != b.spec.height)
    throw ShapeMismatch(std::string(what) + ": shape mismatch");
}

std::vector<double> normalize_mass(const FloatMap& m, const char* what) {
  double total = 0.0;
  for (double x : m.v) total += x;
  if (!(total > 0.0)) throw ZeroMass(std::string(what) + ": map has no positive mass");
  std::vector<double> p(m.v.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = m.v[i] / total;
  return p;
}

}  // namespace

double mse(const FloatMap& pred, const FloatMap& gt, const BoolMap* mask) {
  require_same_shape(pred, gt, "mse");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    if (mask && !mask->v[i]) continue;
    const double d = pred.v[i] - gt.v[i];
    s += d * d;
    ++n;
  }
  if (n == 0) throw EmptyMask("mse: mask selects no cells");
  return s / static_cast<double>(n);
}

double mae(const FloatMap& pred, const FloatMap& gt, const BoolMap* mask) {
  require_same_shape(pred, gt, "mae");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    if (mask && !mask->v[i]) continue;
    s += std::abs(pred.v[i] - gt.v[i]);
    ++n;
  }
  if (n == 0) throw EmptyMask("mae: mask selects no cells");
  return s / static_cast<double>(n);
}

double ssim(const FloatMap& pred, const FloatMap& gt) {
  require_same_shape(pred, gt, "ssim");
  const int w = pred.spec.width, h = pred.spec.height;
  constexpr int kWin = 11;
  if (w < kWin || h < kWin) throw TooSmall("ssim: min dimension must be >= 11");

  // 11x11 Gaussian window, sigma 1.5, normalized.
  double kernel[kWin][kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - 5, dj = j - 5;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      ksum += kernel[i][j];
    }
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  constexpr double kC1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;
  const int out_h = h - kWin + 1, out_w = w - kWin + 1;
  std::vector<double> local(static_cast<std::size_t>(out_h) * out_w);
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < out_h * out_w; ++idx) {
    const int r0 = idx / out_w, c0 = idx % out_w;
    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        const double k = kernel[i][j];
        const double x = pred.at(r0 + i, c0 + j);
        const double y = gt.at(r0 + i, c0 + j);
        mx += k * x;
        my += k * y;
        mxx += k * x * x;
        myy += k * y * y;
        mxy += k * x * y;
      }
    const double vx = mxx - mx * mx;
    const double vy = myy - my * my;
    const double cxy = mxy - mx * my;
    local[idx] = ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
                 ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  }
  double s = 0.0;
  for (double v : local) s += v;
  return s / static_cast<double>(local.size());
}

double js_divergence(const FloatMap& a, const FloatMap& b) {
  require_same_shape(a, b, "js_divergence");
  const std::vector<double> p = normalize_mass(a, "js_divergence");
  const std::vector<double> q = normalize_mass(b, "js_divergence");
  const double inv_log2 = 1.0 / std::log(2.0);
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m) * inv_log2;
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m) * inv_log2;
  }
  return js;
}

double bhattacharyya(const FloatMap& a, const FloatMap& b) {
  require_same_shape(a, b, "bhattacharyya");
  const std::vector<double> p = normalize_mass(a, "bhattacharyya");
  const std::vector<double> q = normalize_mass(b, "bhattacharyya");
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
  return -std::log(std::max(bc, 1e-12));
}

double angular_similarity(const DescriptorMaps& d1, const DescriptorMaps& d2) {
  if (d1.spec != d2.spec) throw SpecMismatch("angular_similarity: spec mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d1.dir_valid.v.size(); ++i) {
    if (!d1.dir_valid.v[i] || !d2.dir_valid.v[i]) continue;
    const double a1 = std::atan2(d1.dir_sin.v[i], d1.dir_cos.v[i]);
    const double a2 = std::atan2(d2.dir_sin.v[i], d2.dir_cos.v[i]);
    s += 0.5 * (1.0 + std::cos(a1 - a2));
    ++n;
  }
  if (n == 0) throw NoOverlap("angular_similarity: no jointly dir-valid cells");
  return s / static_cast<double>(n);
}

std::pair<double, double> direction_accuracy_iou(const DescriptorMaps& pred,
                                                 const DescriptorMaps& gt, int bins) {
  if (pred.spec != gt.spec) throw SpecMismatch("direction_accuracy_iou: spec mismatch");
  std::vector<std::size_t> inter(bins, 0), uni(bins, 0), gt_count(bins, 0);
  std::size_t correct = 0, n = 0;
  for (std::size_t i = 0; i < gt.dir_valid.v.size(); ++i) {
    if (!pred.dir_valid.v[i] || !gt.dir_valid.v[i]) continue;
    const int bp = bin_of(std::atan2(pred.dir_sin.v[i], pred.dir_cos.v[i]), bins);
    const int bg = bin_of(std::atan2(gt.dir_sin.v[i], gt.dir_cos.v[i]), bins);
    ++n;
    ++gt_count[bg];
    if (bp == bg) {
      ++correct;
      ++inter[bg];
      ++uni[bg];
    } else {
      ++uni[bg];
      ++uni[bp];
    }
  }
  if (n == 0) throw NoOverlap("direction_accuracy_iou: no jointly dir-valid cells");
  double iou_sum = 0.0;
  int present = 0;
  for (int b = 0; b < bins; ++b) {
    if (gt_count[b] == 0) continue;
    ++present;
    iou_sum += static_cast<double>(inter[b]) / static_cast<double>(uni[b]);
  }
  return {static_cast<double>(correct) / static_cast<double>(n),
          present > 0 ? iou_sum / present : 0.0};
}

MetricReport evaluate_maps(const DescriptorMaps& pred, const DescriptorMaps& gt,
                           const BoolMap* mask, const std::string& scope, double horizon) {
  MetricReport r;
  r.scope = scope;
  r.horizon = horizon;
  if (mask && mask->count() == 0)
    throw NoOverlap("evaluate: visibility mask selects no cells");
  r.values["flow.mse"] = mse(pred.flow, gt.flow, mask);
  r.values["flow.mae"] = mae(pred.flow, gt.flow, mask);
  r.values["entropy.mse"] = mse(pred.entropy, gt.entropy, mask);
  r.values["entropy.mae"] = mae(pred.entropy, gt.entropy, mask);
  if (pred.spec.width >= 11 && pred.spec.height >= 11) {
    r.values["flow.ssim"] = ssim(pred.flow, gt.flow);
    r.values["entropy.ssim"] = ssim(pred.entropy, gt.entropy);
  }
  const auto [acc, iou] = direction_accuracy_iou(pred, gt, gt.bins);
  r.values["direction.accuracy"] = acc;
  r.values["direction.iou"] = iou;
  r.values["direction.angular_similarity"] = angular_similarity(pred, gt);
  return r;
}

}  // namespace modkit
