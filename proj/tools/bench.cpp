// Times the parallel per-cell kernels against the serial reference
// implementations on synthetic data and checks they agree.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "modkit/losses.hpp"
#include "modkit/metrics.hpp"
#include "modkit/mod.hpp"
#include "modkit/ref.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace modkit;
using clock_type = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& fn, int reps) {
  fn();  // warm-up
  const auto start = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = clock_type::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void report(const char* name, double parallel_ms, double serial_ms, double max_abs_diff) {
  std::printf("%-18s parallel %8.3f ms   serial %8.3f ms   speedup %5.2fx   max|diff| %.3g\n",
              name, parallel_ms, serial_ms, serial_ms / parallel_ms, max_abs_diff);
}

double max_diff(const FloatMap& a, const FloatMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace

int main() {
  const int side = 256;
  GridSpec spec{0.0, 0.0, 0.30, side, side};
  const int bins = 8;
  std::mt19937_64 rng(42);

  HistogramGrid hist(spec, bins);
  std::uniform_int_distribution<int> cell(0, side - 1), bin(0, bins - 1),
      n(0, 40);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int b = 0; b < bins; ++b) hist.count(r, c, b) = n(rng);

#ifdef _OPENMP
  std::printf("OpenMP threads: %d, grid %dx%d, %d bins\n", omp_get_max_threads(), side, side,
              bins);
#else
  std::printf("OpenMP not enabled, grid %dx%d, %d bins\n", side, side, bins);
#endif

  const int reps = 20;

  {
    FloatMap par, ser;
    const double tp = time_ms([&] { par = compute_flow(hist); }, reps);
    const double ts = time_ms([&] { ser = ref::compute_flow(hist); }, reps);
    report("flow", tp, ts, max_diff(par, ser));
  }
  {
    FloatMap pc, ps, sc, ss;
    BoolMap pv, sv;
    const double tp = time_ms([&] { compute_direction(hist, 1.5, pc, ps, pv); }, reps);
    const double ts = time_ms([&] { ref::compute_direction(hist, 1.5, sc, ss, sv); }, reps);
    report("direction", tp, ts, std::max(max_diff(pc, sc), max_diff(ps, ss)));
  }
  {
    FloatMap par, ser;
    const double tp = time_ms([&] { par = compute_entropy(hist); }, reps);
    const double ts = time_ms([&] { ser = ref::compute_entropy(hist); }, reps);
    report("entropy", tp, ts, max_diff(par, ser));
  }

  FloatMap pred(spec), gt(spec), w(spec, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : pred.v) x = u(rng);
  for (auto& x : gt.v) x = u(rng);

  {
    double vp = 0, vs = 0;
    const double tp = time_ms([&] { vp = huber_loss(pred, gt, w, 0.1).value; }, reps);
    const double ts = time_ms([&] { vs = ref::huber_value(pred, gt, w, 0.1); }, reps);
    report("huber", tp, ts, std::abs(vp - vs));
  }
  {
    double vp = 0, vs = 0;
    const double tp = time_ms([&] { vp = grad_struct_loss(pred, gt, w).value; }, reps);
    const double ts = time_ms([&] { vs = ref::grad_struct_value(pred, gt, w); }, reps);
    report("grad_struct", tp, ts, std::abs(vp - vs));
  }
  {
    double vp = 0, vs = 0;
    const double tp = time_ms([&] { vp = ssim(pred, gt); }, reps);
    const double ts = time_ms([&] { vs = ref::ssim(pred, gt); }, reps);
    report("ssim", tp, ts, std::abs(vp - vs));
  }
  return 0;
}
