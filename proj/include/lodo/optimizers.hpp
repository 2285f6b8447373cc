#pragma once

// The learned quasi-Newton optimizer and the first-order baselines it is
// benchmarked against.
//
// One learned-optimizer step, in order:
//   x <- x - G(theta) m            (m is the gradient EMA used for the step)
//   (loss, g) <- task(x)
//   theta <- Adam(theta, d/dtheta g^T (-G(theta) m))
//   m <- beta m + (1 - beta) g
// The hypergradient is taken through the step-generation formula only, with
// the pre-update m and the fresh g treated as constants.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lodo/gmat.hpp"
#include "lodo/tasks.hpp"
#include "lodo/theory.hpp"

namespace lodo {

// Any non-finite loss/gradient, or a loss beyond this, flags a run as
// diverged; flagged states stop updating and keep returning their last
// finite loss.
inline constexpr double kDivergenceThreshold = 1e12;

struct StepResult {
  double loss = 0.0;
  bool diverged = false;
};

struct AdamSettings {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter vector; used both as the
// meta-optimizer over theta and as the Adam baseline over x.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamSettings s, std::size_t n)
      : s_(s), m1_(n, 0.0), m2_(n, 0.0) {}

  void update(Vector& params, const Vector& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      m1_[i] = s_.beta1 * m1_[i] + (1.0 - s_.beta1) * g;
      m2_[i] = s_.beta2 * m2_[i] + (1.0 - s_.beta2) * g * g;
      params[i] -= s_.lr * (m1_[i] / c1) / (std::sqrt(m2_[i] / c2) + s_.eps);
    }
  }

  long step_count() const { return t_; }
  const Vector& first_moment() const { return m1_; }
  const Vector& second_moment() const { return m2_; }

 private:
  AdamSettings s_;
  Vector m1_, m2_;
  long t_ = 0;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual StepResult step(Task& task) = 0;
  virtual const Vector& point() const = 0;
  virtual bool diverged() const = 0;
  // Non-null for the learned-optimizer family (sigma diagnostics).
  virtual const Preconditioner* preconditioner() const { return nullptr; }
};

struct LodoSettings {
  Preconditioner::Kind variant = Preconditioner::Kind::full;
  double meta_lr = 0.001;
  double alpha0 = 1.0;
  double beta = 0.9;
  int k = 4;
  int depth = 16;
};

class LodoOptimizer : public Optimizer {
 public:
  LodoOptimizer(const LodoSettings& s, Vector x0, std::uint64_t seed)
      : x_(std::move(x0)),
        m_(x_.size(), 0.0),
        precond_(make_precond(s, static_cast<int>(x_.size()), seed)),
        meta_(AdamSettings{s.meta_lr, 0.9, 0.999, 1e-8}, precond_.num_params()),
        beta_(s.beta) {}

  StepResult step(Task& task) override {
    if (diverged_) return {last_loss_, true};
    const Vector dir = precond_.apply(m_);
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] -= dir[i];
    const TaskEval ev = task.evaluate(x_);
    if (!std::isfinite(ev.loss) || ev.loss > kDivergenceThreshold ||
        !all_finite(ev.grad)) {
      diverged_ = true;
      return {ev.loss, true};
    }
    const Vector hg = precond_.hypergrad(m_, ev.grad);
    meta_.update(precond_.mutable_params(), hg);
    for (std::size_t i = 0; i < m_.size(); ++i)
      m_[i] = beta_ * m_[i] + (1.0 - beta_) * ev.grad[i];
    ++t_;
    last_loss_ = ev.loss;
    return {ev.loss, false};
  }

  const Vector& point() const override { return x_; }
  bool diverged() const override { return diverged_; }
  const Preconditioner* preconditioner() const override { return &precond_; }
  const Vector& gradient_ema() const { return m_; }
  long step_count() const { return t_; }

 private:
  static Preconditioner make_precond(const LodoSettings& s, int n,
                                     std::uint64_t seed) {
    switch (s.variant) {
      case Preconditioner::Kind::full:
        return Preconditioner::full(n, s.k, s.depth, s.alpha0, seed);
      case Preconditioner::Kind::diagonal:
        return Preconditioner::diagonal(n, s.alpha0);
      case Preconditioner::Kind::global:
        return Preconditioner::global(n, s.alpha0);
      case Preconditioner::Kind::residual:
        return Preconditioner::residual(n, s.depth, s.alpha0, seed);
    }
    throw std::logic_error("unknown preconditioner variant");
  }

  Vector x_;
  Vector m_;
  Preconditioner precond_;
  AdamState meta_;
  double beta_;
  long t_ = 0;
  bool diverged_ = false;
  double last_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Baselines. Each step evaluates at the current point, then updates it.

class AdamOptimizer : public Optimizer {
 public:
  AdamOptimizer(AdamSettings s, Vector x0)
      : x_(std::move(x0)), adam_(s, x_.size()) {}

  StepResult step(Task& task) override {
    if (diverged_) return {last_loss_, true};
    const TaskEval ev = task.evaluate(x_);
    if (bad(ev)) {
      diverged_ = true;
      return {ev.loss, true};
    }
    adam_.update(x_, ev.grad);
    last_loss_ = ev.loss;
    return {ev.loss, false};
  }

  const Vector& point() const override { return x_; }
  bool diverged() const override { return diverged_; }

 private:
  static bool bad(const TaskEval& ev) {
    return !std::isfinite(ev.loss) || ev.loss > kDivergenceThreshold ||
           !all_finite(ev.grad);
  }

  Vector x_;
  AdamState adam_;
  bool diverged_ = false;
  double last_loss_ = 0.0;
};

// Heavy-ball SGD: v <- beta v + g; x <- x - lr v (accumulator form, no
// (1-beta) normalization).
class MomentumOptimizer : public Optimizer {
 public:
  MomentumOptimizer(double lr, double beta, Vector x0)
      : lr_(lr), beta_(beta), x_(std::move(x0)), v_(x_.size(), 0.0) {}

  StepResult step(Task& task) override {
    if (diverged_) return {last_loss_, true};
    const TaskEval ev = task.evaluate(x_);
    if (!std::isfinite(ev.loss) || ev.loss > kDivergenceThreshold ||
        !all_finite(ev.grad)) {
      diverged_ = true;
      return {ev.loss, true};
    }
    for (std::size_t i = 0; i < x_.size(); ++i) {
      v_[i] = beta_ * v_[i] + ev.grad[i];
      x_[i] -= lr_ * v_[i];
    }
    last_loss_ = ev.loss;
    return {ev.loss, false};
  }

  const Vector& point() const override { return x_; }
  bool diverged() const override { return diverged_; }

 private:
  double lr_, beta_;
  Vector x_, v_;
  bool diverged_ = false;
  double last_loss_ = 0.0;
};

// Squared-gradient EMA with new-sample weight rho, heavy-ball momentum on
// the normalized step:
//   sq <- (1 - rho) sq + rho g^2; mom <- beta mom + lr g / sqrt(sq + eps)
class RmspropOptimizer : public Optimizer {
 public:
  RmspropOptimizer(double lr, double rho, double beta, double eps, Vector x0)
      : lr_(lr), rho_(rho), beta_(beta), eps_(eps), x_(std::move(x0)),
        sq_(x_.size(), 0.0), mom_(x_.size(), 0.0) {}

  StepResult step(Task& task) override {
    if (diverged_) return {last_loss_, true};
    const TaskEval ev = task.evaluate(x_);
    if (!std::isfinite(ev.loss) || ev.loss > kDivergenceThreshold ||
        !all_finite(ev.grad)) {
      diverged_ = true;
      return {ev.loss, true};
    }
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double g = ev.grad[i];
      sq_[i] = (1.0 - rho_) * sq_[i] + rho_ * g * g;
      mom_[i] = beta_ * mom_[i] + lr_ * g / std::sqrt(sq_[i] + eps_);
      x_[i] -= mom_[i];
    }
    last_loss_ = ev.loss;
    return {ev.loss, false};
  }

  const Vector& point() const override { return x_; }
  bool diverged() const override { return diverged_; }

 private:
  double lr_, rho_, beta_, eps_;
  Vector x_, sq_, mom_;
  bool diverged_ = false;
  double last_loss_ = 0.0;
};

// Additive-sign second moment: v <- v - (1-beta2) sign(v - g^2) g^2, with
// Adam-style bias correction and the larger default eps the method calls for.
class YogiOptimizer : public Optimizer {
 public:
  YogiOptimizer(double lr, double beta1, double beta2, double eps, Vector x0)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), x_(std::move(x0)),
        m1_(x_.size(), 0.0), m2_(x_.size(), 0.0) {}

  StepResult step(Task& task) override {
    if (diverged_) return {last_loss_, true};
    const TaskEval ev = task.evaluate(x_);
    if (!std::isfinite(ev.loss) || ev.loss > kDivergenceThreshold ||
        !all_finite(ev.grad)) {
      diverged_ = true;
      return {ev.loss, true};
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double g = ev.grad[i];
      const double g2 = g * g;
      m1_[i] = b1_ * m1_[i] + (1.0 - b1_) * g;
      const double sgn = m2_[i] > g2 ? 1.0 : (m2_[i] < g2 ? -1.0 : 0.0);
      m2_[i] -= (1.0 - b2_) * sgn * g2;
      x_[i] -= lr_ * (m1_[i] / c1) / (std::sqrt(m2_[i] / c2) + eps_);
    }
    last_loss_ = ev.loss;
    return {ev.loss, false};
  }

  const Vector& point() const override { return x_; }
  bool diverged() const override { return diverged_; }

 private:
  double lr_, b1_, b2_, eps_;
  Vector x_, m1_, m2_;
  long t_ = 0;
  bool diverged_ = false;
  double last_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Specs, factories, and the run driver

using Hyperparams = std::map<std::string, double>;

struct OptimizerSpec {
  std::string name;       // lodo, lodo_diagonal, lodo_global, lodo_residuals,
                          // adam, momentum, rmsprop, yogi
  Hyperparams params;     // missing keys fall back to defaults
};

struct TaskSpec {
  std::string kind = "bowl";  // bowl | rosenbrock
  int dim = 100;
  double spectrum_min = 0.001;
  double spectrum_max = 1.0;
  std::uint64_t hessian_seed = 1;
};

inline Hyperparams default_hyperparams(const std::string& name) {
  if (name == "adam") return {{"lr", 0.001}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
  if (name == "momentum") return {{"lr", 0.01}, {"beta", 0.9}};
  if (name == "rmsprop") return {{"lr", 0.001}, {"rho", 0.1}, {"beta", 0.9}, {"eps", 1e-7}};
  if (name == "yogi") return {{"lr", 0.01}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-3}};
  if (name == "lodo" || name == "lodo_diagonal" || name == "lodo_global" ||
      name == "lodo_residuals")
    return {{"meta_lr", 0.001}, {"beta", 0.9}, {"alpha0", 1.0}, {"k", 4}, {"depth", 16}};
  throw std::invalid_argument("unknown optimizer: " + name);
}

// Tuned values for the two benchmark tasks.
inline Hyperparams preset_hyperparams(const std::string& task, const std::string& name) {
  if (task == "bowl") {
    if (name == "adam") return {{"lr", 1.164}, {"beta1", 0.465}, {"beta2", 0.9884}, {"eps", 1e-8}};
    if (name == "momentum") return {{"lr", 1.394}, {"beta", 0.529}};
    if (name == "rmsprop") return {{"lr", 0.449}, {"rho", 0.04943}, {"beta", 0.595}, {"eps", 1e-7}};
    if (name == "yogi") return {{"lr", 2.169}, {"beta1", 0.4362}, {"beta2", 0.9999723}, {"eps", 1e-3}};
    if (name == "lodo") return {{"meta_lr", 0.009600}, {"beta", 0.195}, {"alpha0", 0.270}, {"k", 4}, {"depth", 16}};
    if (name == "lodo_diagonal") return {{"meta_lr", 0.002886}, {"beta", 0.436}, {"alpha0", 1.080}, {"k", 4}, {"depth", 16}};
    if (name == "lodo_global") return {{"meta_lr", 0.004138}, {"beta", 0.431}, {"alpha0", 0.5999}, {"k", 4}, {"depth", 16}};
    if (name == "lodo_residuals") return {{"meta_lr", 0.001971}, {"beta", 0.519}, {"alpha0", 0.8186}, {"k", 4}, {"depth", 16}};
  } else if (task == "rosenbrock") {
    if (name == "adam") return {{"lr", 0.9704}, {"beta1", 0.864}, {"beta2", 0.99804}, {"eps", 1e-8}};
    if (name == "momentum") return {{"lr", 0.09870}, {"beta", 0.9359}};
    if (name == "rmsprop") return {{"lr", 0.004318}, {"rho", 0.02836}, {"beta", 0.880}, {"eps", 1e-7}};
    if (name == "yogi") return {{"lr", 0.2991}, {"beta1", 0.9273}, {"beta2", 0.998787}, {"eps", 1e-3}};
    if (name == "lodo") return {{"meta_lr", 0.0001394}, {"beta", 0.897}, {"alpha0", 0.2946}, {"k", 4}, {"depth", 16}};
  }
  throw std::invalid_argument("no preset for " + name + " on " + task);
}

inline double hyper(const Hyperparams& hp, const Hyperparams& defaults,
                    const std::string& key) {
  if (auto it = hp.find(key); it != hp.end()) return it->second;
  return defaults.at(key);
}

inline std::unique_ptr<Task> make_task(const TaskSpec& spec, std::uint64_t noise_seed) {
  if (spec.kind == "bowl")
    return std::make_unique<NoisyQuadraticBowl>(spec.dim, spec.spectrum_min,
                                                spec.spectrum_max, spec.hessian_seed,
                                                noise_seed);
  if (spec.kind == "rosenbrock") return std::make_unique<RosenbrockTask>();
  throw std::invalid_argument("unknown task kind: " + spec.kind);
}

inline std::unique_ptr<Optimizer> make_optimizer(const OptimizerSpec& spec,
                                                 Vector x0, std::uint64_t seed) {
  const Hyperparams defaults = default_hyperparams(spec.name);
  const auto& hp = spec.params;
  auto p = [&](const std::string& key) { return hyper(hp, defaults, key); };

  if (spec.name == "adam")
    return std::make_unique<AdamOptimizer>(
        AdamSettings{p("lr"), p("beta1"), p("beta2"), p("eps")}, std::move(x0));
  if (spec.name == "momentum")
    return std::make_unique<MomentumOptimizer>(p("lr"), p("beta"), std::move(x0));
  if (spec.name == "rmsprop")
    return std::make_unique<RmspropOptimizer>(p("lr"), p("rho"), p("beta"), p("eps"),
                                              std::move(x0));
  if (spec.name == "yogi")
    return std::make_unique<YogiOptimizer>(p("lr"), p("beta1"), p("beta2"), p("eps"),
                                           std::move(x0));

  LodoSettings s;
  s.meta_lr = p("meta_lr");
  s.beta = p("beta");
  s.alpha0 = p("alpha0");
  s.k = static_cast<int>(p("k"));
  s.depth = static_cast<int>(p("depth"));
  if (spec.name == "lodo") s.variant = Preconditioner::Kind::full;
  else if (spec.name == "lodo_diagonal") s.variant = Preconditioner::Kind::diagonal;
  else if (spec.name == "lodo_global") s.variant = Preconditioner::Kind::global;
  else if (spec.name == "lodo_residuals") s.variant = Preconditioner::Kind::residual;
  else throw std::invalid_argument("unknown optimizer: " + spec.name);
  return std::make_unique<LodoOptimizer>(s, std::move(x0), seed);
}

struct RunOptions {
  long steps = 1;
  std::uint64_t seed = 0;
  int sigma_every = 0;   // 0 disables the diagnostic
  int sigma_probes = 100;
};

struct RunRecord {
  std::string optimizer;
  std::string task;
  Hyperparams hyperparams;
  long steps = 0;
  std::uint64_t seed = 0;
  std::vector<double> losses;                   // per completed step
  std::vector<std::pair<long, double>> sigma;   // (step, sigma_hat)
  std::vector<double> wall_ms;                  // per completed step
  long diverged_at = -1;                        // 1-based step, -1 if none
  double steps_per_sec = 0.0;                   // excludes diagnostic time

  // Mean training loss over the final tenth of the schedule; +inf for
  // diverged runs.
  double last_tenth_mean() const {
    if (diverged_at >= 0 || losses.empty())
      return std::numeric_limits<double>::infinity();
    const std::size_t start = losses.size() - losses.size() / 10;
    double s = 0.0;
    for (std::size_t i = start; i < losses.size(); ++i) s += losses[i];
    return s / static_cast<double>(losses.size() - start);
  }

  void write_csv(std::ostream& os, bool include_wall = true,
                 const std::string& comment_header = "") const;
};

// One full optimization run. Deterministic given (spec, task, options): the
// task noise stream, the optimizer initialization, and every sigma probe
// derive from options.seed.
inline RunRecord run(const OptimizerSpec& ospec, const TaskSpec& tspec,
                     const RunOptions& opt) {
  if (opt.steps < 1) throw std::invalid_argument("run: steps must be >= 1");

  RunRecord rec;
  rec.optimizer = ospec.name;
  rec.task = tspec.kind;
  {
    Hyperparams full = default_hyperparams(ospec.name);
    for (const auto& [key, value] : ospec.params) full[key] = value;
    rec.hyperparams = full;
  }
  rec.steps = opt.steps;
  rec.seed = opt.seed;

  auto task = make_task(tspec, derive_seed(opt.seed, 1));
  auto optimizer = make_optimizer(ospec, task->initial_point(), derive_seed(opt.seed, 2));
  rec.losses.reserve(static_cast<std::size_t>(opt.steps));
  rec.wall_ms.reserve(static_cast<std::size_t>(opt.steps));

  const Matrix* hess = task->dense_hessian();
  const bool do_sigma = opt.sigma_every > 0 && hess != nullptr &&
                        optimizer->preconditioner() != nullptr;
  auto sigma_probe = [&](long t) {
    if (!do_sigma || (t % opt.sigma_every) != 0) return;
    const double s = estimate_sigma(*optimizer->preconditioner(), *hess,
                                    opt.sigma_probes,
                                    derive_seed(opt.seed, 0x51c0ull + static_cast<std::uint64_t>(t)));
    rec.sigma.emplace_back(t, s);
  };

  using clock = std::chrono::steady_clock;
  double total_ms = 0.0;
  sigma_probe(0);
  for (long t = 1; t <= opt.steps; ++t) {
    const auto t0 = clock::now();
    const StepResult res = optimizer->step(*task);
    const auto t1 = clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (res.diverged) {
      rec.diverged_at = t;
      break;
    }
    rec.losses.push_back(res.loss);
    rec.wall_ms.push_back(ms);
    total_ms += ms;
    sigma_probe(t);
  }
  rec.steps_per_sec = total_ms > 0.0
                          ? static_cast<double>(rec.losses.size()) / (total_ms / 1000.0)
                          : 0.0;
  return rec;
}

// Columns: step,loss,sigma[,wall_ms]. Loss and sigma are printed with 17
// significant digits so downstream recomputation is exact; sigma cells are
// empty except at diagnostic steps. Timing is optional because it is the one
// non-reproducible column. `comment_header` lines are emitted first, each
// prefixed with "# ".
inline void RunRecord::write_csv(std::ostream& os, bool include_wall,
                                 const std::string& comment_header) const {
  if (!comment_header.empty()) {
    std::size_t pos = 0;
    while (pos < comment_header.size()) {
      std::size_t nl = comment_header.find('\n', pos);
      if (nl == std::string::npos) nl = comment_header.size();
      os << "# " << comment_header.substr(pos, nl - pos) << '\n';
      pos = nl + 1;
    }
  }
  os << "step,loss,sigma";
  if (include_wall) os << ",wall_ms";
  os << '\n';
  char buf[64];
  std::size_t sig_idx = 0;
  while (sig_idx < sigma.size() && sigma[sig_idx].first < 1) ++sig_idx;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const long step = static_cast<long>(i) + 1;
    std::snprintf(buf, sizeof(buf), "%.17g", losses[i]);
    os << step << ',' << buf << ',';
    if (sig_idx < sigma.size() && sigma[sig_idx].first == step) {
      std::snprintf(buf, sizeof(buf), "%.17g", sigma[sig_idx].second);
      os << buf;
      ++sig_idx;
    }
    if (include_wall) {
      std::snprintf(buf, sizeof(buf), "%.6g", wall_ms[i]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace lodo
