#include <cmath>
#include <random>

#include "doctest.h"
#include "modkit/losses.hpp"
#include "modkit/ref.hpp"

using namespace modkit;

namespace {

FloatMap map_of(const GridSpec& spec, std::vector<double> v) {
  FloatMap m(spec);
  m.v = std::move(v);
  return m;
}

struct RandomInstance {
  FloatMap pred, gt, w;
};

RandomInstance random_instance(std::mt19937_64& rng, int side) {
  const GridSpec spec{0.0, 0.0, 0.30, side, side};
  RandomInstance r{FloatMap(spec), FloatMap(spec), FloatMap(spec)};
  std::uniform_real_distribution<double> u(-1.0, 1.0), uw(0.5, 5.0);
  for (auto& x : r.pred.v) x = u(rng);
  for (auto& x : r.gt.v) x = u(rng);
  for (auto& x : r.w.v) x = uw(rng);
  return r;
}

const GridSpec kOne{0.0, 0.0, 0.30, 1, 1};

}  // namespace

TEST_CASE("Huber spot values on the quadratic and linear branches") {
  const FloatMap w = map_of(kOne, {1.0});
  const FloatMap gt = map_of(kOne, {0.0});
  const auto quad = huber_loss(map_of(kOne, {0.05}), gt, w, 0.1);
  CHECK(std::abs(quad.value - 0.00125) < 1e-12);
  const auto lin = huber_loss(map_of(kOne, {0.2}), gt, w, 0.1);
  CHECK(std::abs(lin.value - 0.015) < 1e-12);
}

TEST_CASE("Huber of a perfect prediction is zero with zero gradient") {
  std::mt19937_64 rng(1);
  auto inst = random_instance(rng, 5);
  const auto r = huber_loss(inst.gt, inst.gt, inst.w, 0.1);
  CHECK(r.value == 0.0);
  for (double g : r.grad.v) CHECK(g == 0.0);
}

TEST_CASE("Huber is C1 at the branch point") {
  const FloatMap w = map_of(kOne, {1.0});
  const FloatMap gt = map_of(kOne, {0.0});
  const double beta = 0.1, h = 1e-7;
  const double below = (huber_loss(map_of(kOne, {beta}), gt, w, beta).value -
                        huber_loss(map_of(kOne, {beta - h}), gt, w, beta).value) / h;
  const double above = (huber_loss(map_of(kOne, {beta + h}), gt, w, beta).value -
                        huber_loss(map_of(kOne, {beta}), gt, w, beta).value) / h;
  CHECK(below == doctest::Approx(beta).epsilon(1e-5));
  CHECK(above == doctest::Approx(beta).epsilon(1e-5));
}

TEST_CASE("Huber value matches the serial reference") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    auto inst = random_instance(rng, 6);
    CHECK(huber_loss(inst.pred, inst.gt, inst.w, 0.1).value ==
          doctest::Approx(ref::huber_value(inst.pred, inst.gt, inst.w, 0.1)).epsilon(1e-14));
  }
}

TEST_CASE("structural loss vanishes for equal maps and for constant offsets") {
  std::mt19937_64 rng(3);
  auto inst = random_instance(rng, 5);
  CHECK(grad_struct_loss(inst.gt, inst.gt, inst.w).value == 0.0);

  const GridSpec spec{0.0, 0.0, 0.30, 4, 4};
  const FloatMap a(spec, 0.3), b(spec, 0.9), w(spec, 2.0);
  CHECK(grad_struct_loss(a, b, w).value == 0.0);
}

TEST_CASE("structural loss requires at least a 2x2 map") {
  const FloatMap tiny = map_of(kOne, {0.5});
  CHECK_THROWS_AS(grad_struct_loss(tiny, tiny, tiny), TooSmall);
}

TEST_CASE("shape mismatches are rejected") {
  const GridSpec other{0.0, 0.0, 0.30, 2, 3};
  CHECK_THROWS_AS(huber_loss(map_of(kOne, {0.1}), FloatMap(other), FloatMap(other), 0.1),
                  ShapeMismatch);
}

TEST_CASE("angle loss of antipodal unit directions is 4") {
  const FloatMap w = map_of(kOne, {1.0});
  const auto r = angle_loss(map_of(kOne, {-1.0}), map_of(kOne, {0.0}),
                            map_of(kOne, {1.0}), map_of(kOne, {0.0}), w);
  CHECK(r.value == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("composites reduce to Huber when lambda_grad is zero") {
  std::mt19937_64 rng(4);
  auto inst = random_instance(rng, 6);
  LossConfig cfg;
  cfg.lambda_grad = 0.0;
  CHECK(flow_loss(inst.pred, inst.gt, inst.w, cfg).value ==
        huber_loss(inst.pred, inst.gt, inst.w, cfg.beta).value);
}

TEST_CASE("composite values equal their component sums") {
  std::mt19937_64 rng(5);
  auto inst = random_instance(rng, 6);
  LossConfig cfg;
  const double expect = huber_loss(inst.pred, inst.gt, inst.w, cfg.beta).value +
                        cfg.lambda_grad * grad_struct_loss(inst.pred, inst.gt, inst.w).value;
  CHECK(std::abs(flow_loss(inst.pred, inst.gt, inst.w, cfg).value - expect) < 1e-12);

  auto cs = random_instance(rng, 6);
  const double dir_expect =
      angle_loss(inst.pred, cs.pred, inst.gt, cs.gt, inst.w).value +
      cfg.lambda_grad * (grad_struct_loss(inst.pred, inst.gt, inst.w).value +
                         grad_struct_loss(cs.pred, cs.gt, inst.w).value);
  CHECK(std::abs(direction_loss(inst.pred, cs.pred, inst.gt, cs.gt, inst.w, cfg).value -
                 dir_expect) < 1e-12);
}

TEST_CASE("losses scale linearly in the weight map") {
  std::mt19937_64 rng(6);
  auto inst = random_instance(rng, 5);
  FloatMap w3 = inst.w;
  for (auto& x : w3.v) x *= 3.0;
  LossConfig cfg;
  const auto base = flow_loss(inst.pred, inst.gt, inst.w, cfg);
  const auto scaled = flow_loss(inst.pred, inst.gt, w3, cfg);
  CHECK(scaled.value == doctest::Approx(3.0 * base.value).epsilon(1e-12));
  for (std::size_t i = 0; i < base.grad.v.size(); ++i)
    CHECK(scaled.grad.v[i] == doctest::Approx(3.0 * base.grad.v[i]).epsilon(1e-12));
}

TEST_CASE("losses are non-negative on random instances") {
  std::mt19937_64 rng(7);
  LossConfig cfg;
  for (int i = 0; i < 20; ++i) {
    auto a = random_instance(rng, 5);
    auto b = random_instance(rng, 5);
    CHECK(huber_loss(a.pred, a.gt, a.w, cfg.beta).value >= 0.0);
    CHECK(grad_struct_loss(a.pred, a.gt, a.w).value >= 0.0);
    CHECK(angle_loss(a.pred, b.pred, a.gt, b.gt, a.w).value >= 0.0);
    CHECK(flow_loss(a.pred, a.gt, a.w, cfg).value >= 0.0);
    CHECK(direction_loss(a.pred, b.pred, a.gt, b.gt, a.w, cfg).value >= 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(8);
  LossConfig cfg;
  for (int i = 0; i < 5; ++i) {
    auto inst = random_instance(rng, 4);
    const GridSpec spec = inst.pred.spec;

    auto check_single = [&](auto&& loss_fn) {
      const auto res = loss_fn(inst.pred);
      const double err = finite_diff_check(
          [&](const std::vector<double>& x) {
            FloatMap p(spec);
            p.v = x;
            return loss_fn(p).value;
          },
          inst.pred.v, res.grad.v);
      CHECK(err < 1e-4);
    };
    check_single([&](const FloatMap& p) { return huber_loss(p, inst.gt, inst.w, cfg.beta); });
    check_single([&](const FloatMap& p) { return grad_struct_loss(p, inst.gt, inst.w); });
    check_single([&](const FloatMap& p) { return flow_loss(p, inst.gt, inst.w, cfg); });

    // Two-channel losses: concatenate (cos, sin) into one flat vector.
    auto cs = random_instance(rng, 4);
    auto check_double = [&](auto&& loss_fn) {
      const LossResult2 res = loss_fn(inst.pred, cs.pred);
      std::vector<double> x = inst.pred.v;
      x.insert(x.end(), cs.pred.v.begin(), cs.pred.v.end());
      std::vector<double> g = res.grad_cos.v;
      g.insert(g.end(), res.grad_sin.v.begin(), res.grad_sin.v.end());
      const double err = finite_diff_check(
          [&](const std::vector<double>& xv) {
            FloatMap pc(spec), psin(spec);
            std::copy(xv.begin(), xv.begin() + pc.v.size(), pc.v.begin());
            std::copy(xv.begin() + pc.v.size(), xv.end(), psin.v.begin());
            return loss_fn(pc, psin).value;
          },
          x, g);
      CHECK(err < 1e-4);
    };
    check_double([&](const FloatMap& pc, const FloatMap& ps) {
      return angle_loss(pc, ps, inst.gt, cs.gt, inst.w);
    });
    check_double([&](const FloatMap& pc, const FloatMap& ps) {
      return direction_loss(pc, ps, inst.gt, cs.gt, inst.w, cfg);
    });
  }
}
