#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "lodo/linalg.hpp"
#include "lodo/rng.hpp"

namespace lodo {

struct TaskEval {
  double loss = 0.0;
  Vector grad;
};

// Loss-and-gradient oracle. Tasks own whatever stochastic state they need;
// one instance belongs to one run.
class Task {
 public:
  virtual ~Task() = default;
  virtual int dim() const = 0;
  virtual Vector initial_point() const = 0;
  virtual TaskEval evaluate(const Vector& x) = 0;
  // Dense Hessian when the task has a meaningful fixed one (diagnostics).
  virtual const Matrix* dense_hessian() const { return nullptr; }
};

// Quadratic bowl 1/2 (x-c)^T H (x-c) whose center c takes one standard
// normal random-walk step at every evaluation. H = U diag(d) U^T with U a
// Haar orthogonal matrix drawn from `hessian_seed` and d a geometric
// sequence, so all optimizers in an experiment can share the same landscape
// while using independent noise streams.
class NoisyQuadraticBowl : public Task {
 public:
  NoisyQuadraticBowl(int n, double spectrum_min, double spectrum_max,
                     std::uint64_t hessian_seed, std::uint64_t noise_seed)
      : n_(n), noise_(noise_seed), center_(static_cast<std::size_t>(n), 0.0) {
    if (n < 1) throw std::invalid_argument("bowl: n must be >= 1");
    if (!(spectrum_min > 0.0) || !(spectrum_max >= spectrum_min))
      throw std::invalid_argument("bowl: bad spectrum");
    eigs_.resize(static_cast<std::size_t>(n));
    if (n == 1) {
      eigs_[0] = spectrum_min;
    } else {
      const double ratio = spectrum_max / spectrum_min;
      for (int i = 0; i < n; ++i)
        eigs_[static_cast<std::size_t>(i)] =
            spectrum_min * std::pow(ratio, static_cast<double>(i) / (n - 1));
    }
    Rng hess_rng(hessian_seed);
    u_ = random_orthogonal(n, hess_rng);
    // H = U diag(d) U^T
    hessian_ = Matrix(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += u_(i, l) * eigs_[static_cast<std::size_t>(l)] * u_(j, l);
        hessian_(i, j) = s;
      }
  }

  static NoisyQuadraticBowl standard(std::uint64_t hessian_seed,
                                     std::uint64_t noise_seed) {
    return NoisyQuadraticBowl(100, 0.001, 1.0, hessian_seed, noise_seed);
  }

  int dim() const override { return n_; }
  Vector initial_point() const override { return Vector(static_cast<std::size_t>(n_), 0.0); }

  TaskEval evaluate(const Vector& x) override {
    if (static_cast<int>(x.size()) != n_)
      throw std::invalid_argument("bowl: dimension mismatch");
    if (!frozen_)
      for (auto& c : center_) c += noise_.normal();
    Vector diff(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i)
      diff[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - center_[static_cast<std::size_t>(i)];
    TaskEval ev;
    ev.grad = hessian_.matvec(diff);
    ev.loss = 0.5 * dot(diff, ev.grad);
    return ev;
  }

  // Expected steady loss of restarting at the current minimum every step:
  // one perturbation accrues before each evaluation, so the floor is
  // E[1/2 s^T H s] = tr(H)/2, computed here from the spectrum.
  double newton_reference() const {
    double tr = 0.0;
    for (double d : eigs_) tr += d;
    return 0.5 * tr;
  }

  const Matrix* dense_hessian() const override { return &hessian_; }
  const Vector& eigenvalues() const { return eigs_; }
  const Matrix& basis() const { return u_; }
  const Vector& center() const { return center_; }

  // Test hook: stop the center walk.
  void freeze_noise(bool frozen) { frozen_ = frozen; }

 private:
  int n_;
  Rng noise_;
  Vector eigs_;
  Matrix u_;
  Matrix hessian_;
  Vector center_;
  bool frozen_ = false;
};

// f(x, y) = 0.01 (x-1)^2 + (x^2 - y)^2, global minimum f(1, 1) = 0.
class RosenbrockTask : public Task {
 public:
  int dim() const override { return 2; }
  Vector initial_point() const override { return {-0.5, 2.0}; }

  static TaskEval eval_at(double x, double y) {
    TaskEval ev;
    const double q = x * x - y;
    ev.loss = 0.01 * (x - 1.0) * (x - 1.0) + q * q;
    ev.grad = {0.02 * (x - 1.0) + 4.0 * x * q, -2.0 * q};
    return ev;
  }

  TaskEval evaluate(const Vector& x) override {
    if (x.size() != 2) throw std::invalid_argument("rosenbrock: dimension mismatch");
    return eval_at(x[0], x[1]);
  }
};

}  // namespace lodo
