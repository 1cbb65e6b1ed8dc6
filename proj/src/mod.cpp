#include "modkit/mod.hpp"

#include <algorithm>
#include <cmath>

namespace modkit {

FloatMap compute_flow(const HistogramGrid& hist) {
  const GridSpec& spec = hist.spec();
  FloatMap flow(spec);
  const int n = spec.height * spec.width;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const int r = i / spec.width, c = i % spec.width;
    double f = 0.0;
    for (int b = 0; b < hist.bins(); ++b) f += hist.count(r, c, b);
    flow.v[i] = f;
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
  const int n = spec.height * spec.width;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const int r = i / spec.width, c = i % spec.width;
    std::uint64_t f = 0;
    int best = 0;
    std::uint32_t best_count = 0;
    for (int b = 0; b < B; ++b) {
      const std::uint32_t h = hist.count(r, c, b);
      f += h;
      if (h > best_count) {  // strict: ties stay at the lowest index
        best_count = h;
        best = b;
      }
    }
    if (f > 0 && static_cast<double>(best_count) > kappa * static_cast<double>(f) / B) {
      const double angle = kTwoPi * best / B;
      dir_cos.v[i] = std::cos(angle);
      dir_sin.v[i] = std::sin(angle);
      dir_valid.v[i] = 1;
    }
  }
}

FloatMap compute_entropy(const HistogramGrid& hist, double epsilon) {
  const GridSpec& spec = hist.spec();
  FloatMap ent(spec);
  const int B = hist.bins();
  const int n = spec.height * spec.width;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const int r = i / spec.width, c = i % spec.width;
    std::uint64_t f = 0;
    for (int b = 0; b < B; ++b) f += hist.count(r, c, b);
    if (f == 0) continue;
    double e = 0.0;
    for (int b = 0; b < B; ++b) {
      const std::uint32_t h = hist.count(r, c, b);
      if (h == 0) continue;
      const double p = static_cast<double>(h) / static_cast<double>(f);
      e -= p * std::log(p + epsilon);
    }
    // The eps guard can push a one-bin cell infinitesimally below zero.
    ent.v[i] = std::max(0.0, e);
  }
  return ent;
}

DescriptorMaps descriptors_from_histogram(const HistogramGrid& hist, const ModParams& p) {
  DescriptorMaps maps;
  maps.spec = hist.spec();
  maps.bins = hist.bins();
  maps.flow = compute_flow(hist);
  compute_direction(hist, p.kappa, maps.dir_cos, maps.dir_sin, maps.dir_valid);
  maps.entropy = compute_entropy(hist, p.epsilon);
  maps.flow_valid = BoolMap(maps.spec);
  for (std::size_t i = 0; i < maps.flow.v.size(); ++i)
    maps.flow_valid.v[i] = maps.flow.v[i] > 0.0 ? 1 : 0;
  if (p.normalize) {
    double scale = p.flow_scale;
    if (scale <= 0.0) {
      scale = *std::max_element(maps.flow.v.begin(), maps.flow.v.end());
      if (scale <= 0.0) scale = 1.0;
    }
    normalize_maps(maps, scale);
  }
  return maps;
}

void normalize_maps(DescriptorMaps& maps, double flow_scale) {
  if (maps.normalized) return;
  const double inv_log_b = 1.0 / std::log(static_cast<double>(maps.bins));
  for (std::size_t i = 0; i < maps.flow.v.size(); ++i) {
    maps.flow.v[i] = std::min(1.0, maps.flow.v[i] / flow_scale);
    maps.entropy.v[i] *= inv_log_b;
  }
  maps.normalized = true;
  maps.flow_scale = flow_scale;
}

HistogramGrid accumulate_window(std::span<const Detection> detections, double t0,
                                double horizon, const GridSpec& spec, int bins) {
  HistogramGrid hist(spec, bins);
  for (const Detection& d : detections) {
    if (d.t >= t0 && d.t < t0 + horizon) hist.accumulate(d);
  }
  return hist;
}

DescriptorMaps build_mod(std::span<const Detection> detections, double t0, double horizon,
                         const GridSpec& spec, const ModParams& p) {
  return descriptors_from_histogram(accumulate_window(detections, t0, horizon, spec, p.bins), p);
}

FloatMap weight_map(const DescriptorMaps& maps, double w_valid, double w_bg) {
  if (!(w_valid > 0.0) || !(w_bg > 0.0))
    throw ConfigError("weights", "w_valid and w_bg must be > 0");
  FloatMap w(maps.spec);
  for (std::size_t i = 0; i < w.v.size(); ++i)
    w.v[i] = maps.flow_valid.v[i] ? w_valid : w_bg;
  return w;
}

double positive_flow_percentile(std::span<const DescriptorMaps> maps, double q) {
  std::vector<double> vals;
  for (const auto& m : maps)
    for (double f : m.flow.v)
      if (f > 0.0) vals.push_back(f);
  if (vals.empty()) return 1.0;
  std::sort(vals.begin(), vals.end());
  const double pos = q / 100.0 * (vals.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, vals.size() - 1);
  const double frac = pos - lo;
  return vals[lo] * (1.0 - frac) + vals[hi] * frac;
}

}  // namespace modkit
