#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lodo/optimizers.hpp"
#include "lodo/tasks.hpp"

using namespace lodo;

namespace {

// Task with a scripted gradient stream, for exercising update rules.
class ScriptedTask : public Task {
 public:
  ScriptedTask(int n, std::vector<TaskEval> script) : n_(n), script_(std::move(script)) {}
  int dim() const override { return n_; }
  Vector initial_point() const override { return Vector(static_cast<std::size_t>(n_), 0.0); }
  TaskEval evaluate(const Vector&) override {
    const auto& ev = script_[std::min(idx_, script_.size() - 1)];
    ++idx_;
    return ev;
  }

 private:
  int n_;
  std::vector<TaskEval> script_;
  std::size_t idx_ = 0;
};

// Deterministic quadratic 1/2 ||x||^2.
class SphereTask : public Task {
 public:
  explicit SphereTask(Vector x0) : x0_(std::move(x0)) {}
  int dim() const override { return static_cast<int>(x0_.size()); }
  Vector initial_point() const override { return x0_; }
  TaskEval evaluate(const Vector& x) override {
    TaskEval ev;
    ev.grad = x;
    ev.loss = 0.5 * dot(x, x);
    return ev;
  }

 private:
  Vector x0_;
};

// Records every gradient a wrapped task hands out.
class RecordingTask : public Task {
 public:
  explicit RecordingTask(Task& inner) : inner_(inner) {}
  int dim() const override { return inner_.dim(); }
  Vector initial_point() const override { return inner_.initial_point(); }
  TaskEval evaluate(const Vector& x) override {
    TaskEval ev = inner_.evaluate(x);
    grads.push_back(ev.grad);
    return ev;
  }
  std::vector<Vector> grads;

 private:
  Task& inner_;
};

}  // namespace

TEST_CASE("adam baseline: one step against a hand unroll") {
  ScriptedTask task(2, {TaskEval{1.0, {1.0, 0.0}}});
  AdamOptimizer adam(AdamSettings{0.1, 0.9, 0.999, 1e-8}, {0.0, 0.0});
  adam.step(task);
  // independent unroll of bias-corrected Adam for a single gradient (1, 0)
  const double m1 = (1.0 - 0.9) * 1.0;
  const double v1 = (1.0 - 0.999) * 1.0;
  const double mhat = m1 / (1.0 - 0.9);
  const double vhat = v1 / (1.0 - 0.999);
  const double expected = -0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(adam.point()[0] == Catch::Approx(expected).epsilon(1e-14));
  CHECK(adam.point()[1] == 0.0);
}

TEST_CASE("zero gradients leave every baseline in place") {
  const std::vector<std::string> names = {"adam", "momentum", "rmsprop", "yogi"};
  for (const auto& name : names) {
    ScriptedTask task(3, {TaskEval{0.0, {0.0, 0.0, 0.0}}});
    auto opt = make_optimizer({name, {}}, {1.0, -2.0, 3.0}, 1);
    for (int t = 0; t < 10; ++t) opt->step(task);
    CHECK(opt->point()[0] == 1.0);
    CHECK(opt->point()[1] == -2.0);
    CHECK(opt->point()[2] == 3.0);
  }
}

TEST_CASE("tuned hyperparameter presets load verbatim") {
  const auto adam = preset_hyperparams("bowl", "adam");
  CHECK(adam.at("lr") == 1.164);
  CHECK(adam.at("beta1") == 0.465);
  CHECK(adam.at("beta2") == 0.9884);
  const auto lodo = preset_hyperparams("bowl", "lodo");
  CHECK(lodo.at("meta_lr") == 0.009600);
  CHECK(lodo.at("beta") == 0.195);
  CHECK(lodo.at("alpha0") == 0.270);
  const auto defaults = default_hyperparams("lodo");
  CHECK(defaults.at("meta_lr") == 0.001);
  CHECK(defaults.at("alpha0") == 1.0);
  CHECK(defaults.at("beta") == 0.9);
  CHECK_THROWS_AS(preset_hyperparams("bowl", "nope"), std::invalid_argument);
  CHECK_THROWS_AS(default_hyperparams("nope"), std::invalid_argument);
}

TEST_CASE("learned optimizer: the first step is a no-op") {
  SphereTask task({1.0, 2.0, -3.0, 0.5});
  LodoSettings s;
  s.alpha0 = 0.7;
  s.k = 2;
  s.depth = 3;
  LodoOptimizer opt(s, task.initial_point(), 11);
  const Vector theta0 = opt.preconditioner()->params();
  opt.step(task);
  // m_0 = 0: the step is zero and the hypergradient is zero
  CHECK(opt.point() == task.initial_point());
  CHECK(opt.preconditioner()->params() == theta0);
}

TEST_CASE("learned optimizer: two-step unroll on a sphere") {
  const Vector x0 = {1.0, -2.0, 0.25, 4.0};
  SphereTask task(x0);
  LodoSettings s;
  s.alpha0 = 0.5;
  s.beta = 0.9;
  s.k = 2;
  s.depth = 4;
  LodoOptimizer opt(s, x0, 21);
  opt.step(task);  // x unchanged, g1 = x0, m = 0.1 * x0
  opt.step(task);
  // theta was untouched by the zero first hypergradient, so G is still
  // alpha0 * I: x2 = x1 - alpha0 (1-beta) g1
  for (std::size_t i = 0; i < x0.size(); ++i)
    CHECK(opt.point()[i] ==
          Catch::Approx(x0[i] - 0.5 * 0.1 * x0[i]).epsilon(1e-12).margin(1e-12));
}

TEST_CASE("gradient EMA matches its closed form") {
  auto bowl = NoisyQuadraticBowl::standard(2, 3);
  RecordingTask recorder(bowl);
  LodoSettings s;
  s.beta = 0.9;
  s.alpha0 = 0.27;
  LodoOptimizer opt(s, bowl.initial_point(), 5);
  const int kSteps = 40;
  for (int t = 0; t < kSteps; ++t) opt.step(recorder);

  // m_T = (1-beta) sum_{tau} beta^{T-tau} g_tau, evaluated most-recent-first
  const auto& grads = recorder.grads;
  Vector expect(100, 0.0);
  double gmax = 0.0;
  for (std::size_t tau = 0; tau < grads.size(); ++tau) {
    const double w = 0.1 * std::pow(0.9, static_cast<double>(grads.size() - 1 - tau));
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += w * grads[tau][i];
    gmax = std::max(gmax, norm_inf(grads[tau]));
  }
  const Vector& m = opt.gradient_ema();
  for (std::size_t i = 0; i < m.size(); ++i)
    REQUIRE(std::abs(m[i] - expect[i]) <= 1e-12 * gmax);
}

TEST_CASE("one meta-update improves the step it just took") {
  // Frozen quadratic bowl; no momentum. After one step from x0 with EMA m,
  // nudging theta along the hypergradient must reduce the counterfactual
  // post-step loss, pinning the sign of the hypergradient.
  auto bowl = NoisyQuadraticBowl::standard(4, 5);
  bowl.freeze_noise(true);
  Rng rng(6);
  Vector x0(100);
  for (auto& v : x0) v = rng.normal();

  auto precond = Preconditioner::full(100, 4, 16, 0.27, 31);
  const Vector g0 = bowl.evaluate(x0).grad;
  const Vector m = g0;  // beta = 0

  auto post_step_loss = [&](const Preconditioner& p) {
    Vector x1 = x0;
    const Vector dir = p.apply(m);
    for (std::size_t i = 0; i < x1.size(); ++i) x1[i] -= dir[i];
    return bowl.evaluate(x1).loss;
  };

  const double before = post_step_loss(precond);
  Vector x1 = x0;
  const Vector dir = precond.apply(m);
  for (std::size_t i = 0; i < x1.size(); ++i) x1[i] -= dir[i];
  const Vector g1 = bowl.evaluate(x1).grad;
  const Vector hg = precond.hypergrad(m, g1);
  AdamState meta(AdamSettings{1e-6, 0.9, 0.999, 1e-8}, hg.size());
  meta.update(precond.mutable_params(), hg);
  const double after = post_step_loss(precond);
  CHECK(after < before);
}

TEST_CASE("runs are deterministic given seed and config") {
  const TaskSpec bowl;
  for (const auto& name : {"lodo", "adam"}) {
    OptimizerSpec spec{name, preset_hyperparams("bowl", name)};
    RunOptions opt;
    opt.steps = 120;
    opt.seed = 99;
    opt.sigma_every = 50;
    const RunRecord a = run(spec, bowl, opt);
    const RunRecord b = run(spec, bowl, opt);
    REQUIRE(a.losses == b.losses);
    REQUIRE(a.sigma == b.sigma);
    CHECK(a.diverged_at == b.diverged_at);
  }
}

TEST_CASE("sigma diagnostics are recorded at the configured cadence") {
  OptimizerSpec spec{"lodo", preset_hyperparams("bowl", "lodo")};
  RunOptions opt;
  opt.steps = 100;
  opt.seed = 7;
  opt.sigma_every = 25;
  opt.sigma_probes = 10;
  const RunRecord rec = run(spec, TaskSpec{}, opt);
  REQUIRE(rec.sigma.size() == 5);  // t = 0, 25, 50, 75, 100
  CHECK(rec.sigma.front().first == 0);
  CHECK(rec.sigma.back().first == 100);
  for (const auto& [t, s] : rec.sigma) CHECK(s > 0.0);

  // no preconditioner (baseline) and no dense Hessian (rosenbrock): no sigma
  const RunRecord adam = run({"adam", {}}, TaskSpec{}, opt);
  CHECK(adam.sigma.empty());
  TaskSpec rosen;
  rosen.kind = "rosenbrock";
  const RunRecord lr = run(spec, rosen, opt);
  CHECK(lr.sigma.empty());
}

TEST_CASE("divergence flags stick and stop the state") {
  // scripted blow-up at the third evaluation
  std::vector<TaskEval> script(2, TaskEval{1.0, {0.1, 0.1}});
  script.push_back(TaskEval{std::numeric_limits<double>::quiet_NaN(), {0.0, 0.0}});
  const auto mk = [&] { return ScriptedTask(2, script); };

  for (const auto& name : {"momentum", "lodo"}) {
    ScriptedTask task = mk();
    auto opt = make_optimizer({name, {}}, {0.0, 0.0}, 1);
    StepResult r{};
    for (int t = 0; t < 3; ++t) r = opt->step(task);
    CHECK(r.diverged);
    CHECK(opt->diverged());
    const Vector frozen = opt->point();
    for (int t = 0; t < 4; ++t) {
      r = opt->step(task);
      CHECK(r.diverged);
      CHECK(std::isfinite(r.loss));  // never emits non-finite after flagging
    }
    CHECK(opt->point() == frozen);
  }

  // loss above the cap counts as divergence even when finite
  std::vector<TaskEval> big = {TaskEval{1.0, {0.1, 0.1}}, TaskEval{5e12, {0.1, 0.1}}};
  ScriptedTask task(2, big);
  auto opt = make_optimizer({"adam", {}}, {0.0, 0.0}, 1);
  opt->step(task);
  const StepResult r = opt->step(task);
  CHECK(r.diverged);

  // run() truncates the trace at the divergence step
  RunOptions ro;
  ro.steps = 10;
  ro.seed = 1;
  OptimizerSpec mspec{"momentum", {{"lr", 1e9}, {"beta", 0.0}}};
  const RunRecord rec = run(mspec, TaskSpec{}, ro);
  CHECK(rec.diverged_at > 0);
  CHECK(rec.losses.size() == static_cast<std::size_t>(rec.diverged_at - 1));
  CHECK(std::isinf(rec.last_tenth_mean()));
}

TEST_CASE("last tenth mean windows") {
  RunRecord rec;
  rec.steps = 200;
  rec.losses.resize(200);
  for (int i = 0; i < 200; ++i) rec.losses[static_cast<std::size_t>(i)] = i + 1;
  // steps 181..200
  CHECK(rec.last_tenth_mean() == Catch::Approx((181.0 + 200.0) / 2.0));
}
