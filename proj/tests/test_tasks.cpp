#include <catch2/catch_amalgamated.hpp>

#include "lodo/rng.hpp"
#include "lodo/tasks.hpp"
#include "support/oracles.hpp"

using lodo::NoisyQuadraticBowl;
using lodo::RosenbrockTask;
using lodo::Vector;

// half trace of the geometric spectrum: 0.001 (r^100 - 1)/(r - 1) / 2 with
// r = 1000^(1/99)
static constexpr double kNewtonFloor = 7.411847253913421;

TEST_CASE("frozen bowl at its center gives zero loss and gradient") {
  auto bowl = NoisyQuadraticBowl::standard(1, 2);
  bowl.freeze_noise(true);
  const auto ev = bowl.evaluate(Vector(100, 0.0));
  CHECK(ev.loss == 0.0);
  for (double g : ev.grad) CHECK(g == 0.0);
}

TEST_CASE("newton reference equals the half trace of the spectrum") {
  const auto bowl = NoisyQuadraticBowl::standard(3, 4);
  CHECK(std::abs(bowl.newton_reference() - kNewtonFloor) < 1e-10);

  // flat spectrum: 100 unit eigenvalues
  const NoisyQuadraticBowl flat(100, 1.0, 1.0, 3, 4);
  CHECK(flat.newton_reference() == 50.0);

  // eigendecomposition oracle: sum of eigenvalues of the materialized H
  const auto eigs = oracles::jacobi_eigenvalues(*bowl.dense_hessian());
  double trace = 0.0;
  for (double e : eigs) trace += e;
  CHECK(0.5 * trace == Catch::Approx(bowl.newton_reference()).epsilon(1e-10));

  // the spectrum of H equals the requested diagonal
  const auto& d = bowl.eigenvalues();
  REQUIRE(eigs.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(std::abs(eigs[i] - d[i]) < 1e-9);
}

TEST_CASE("bowl gradient is H times the post-perturbation error") {
  auto bowl = NoisyQuadraticBowl::standard(5, 6);
  lodo::Rng rng(9);
  Vector x(100);
  for (auto& v : x) v = rng.normal();
  for (int step = 0; step < 5; ++step) {
    const auto ev = bowl.evaluate(x);
    Vector diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - bowl.center()[i];
    const Vector hx = bowl.dense_hessian()->matvec(diff);
    for (std::size_t i = 0; i < x.size(); ++i)
      REQUIRE(ev.grad[i] == Catch::Approx(hx[i]).margin(1e-12));
    REQUIRE(ev.loss == Catch::Approx(0.5 * lodo::dot(diff, hx)).epsilon(1e-12));
  }
}

TEST_CASE("bowl rejects mismatched input") {
  auto bowl = NoisyQuadraticBowl::standard(1, 1);
  CHECK_THROWS_AS(bowl.evaluate(Vector(99, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(NoisyQuadraticBowl(10, 0.0, 1.0, 1, 1), std::invalid_argument);
}

TEST_CASE("untended bowl loss grows linearly at the newton floor rate") {
  // With x held fixed at the origin the center performs a random walk, so
  // E[loss after t evaluations] = t * tr(H)/2. Estimate the slope from the
  // endpoint of each walk and average over seeds.
  const int kSeeds = 32;
  const long kEvals = 10000;
  const Vector x(100, 0.0);
  double slope_sum = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    NoisyQuadraticBowl bowl(100, 0.001, 1.0, 7, 1000 + static_cast<std::uint64_t>(s));
    double last = 0.0;
    for (long t = 0; t < kEvals; ++t) last = bowl.evaluate(x).loss;
    slope_sum += last / static_cast<double>(kEvals);
  }
  const double slope = slope_sum / kSeeds;
  CHECK(std::abs(slope - kNewtonFloor) < 0.10 * kNewtonFloor);
}

TEST_CASE("rosenbrock values and gradient") {
  RosenbrockTask task;
  CHECK(task.dim() == 2);
  const Vector init = task.initial_point();
  CHECK(init[0] == -0.5);
  CHECK(init[1] == 2.0);

  CHECK(RosenbrockTask::eval_at(1.0, 1.0).loss == 0.0);
  CHECK(RosenbrockTask::eval_at(1.0, 1.0).grad[0] == 0.0);
  CHECK(RosenbrockTask::eval_at(1.0, 1.0).grad[1] == 0.0);
  // 0.01 * 1.5^2 + (0.25 - 2)^2 = 0.0225 + 3.0625
  CHECK(task.evaluate(init).loss == Catch::Approx(3.085).epsilon(1e-12));

  lodo::Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const double x = 4.0 * rng.uniform() - 2.0;
    const double y = 4.0 * rng.uniform() - 2.0;
    const auto ev = RosenbrockTask::eval_at(x, y);
    auto f = [](const Vector& p) { return RosenbrockTask::eval_at(p[0], p[1]).loss; };
    for (std::size_t i = 0; i < 2; ++i) {
      const double fd = oracles::central_difference(f, {x, y}, i, 1e-5);
      const double denom = std::max({std::abs(fd), std::abs(ev.grad[i]), 1e-30});
      REQUIRE(std::abs(fd - ev.grad[i]) <= 1e-7 * denom + 1e-9);
    }
  }
}
