#pragma once

// Numerical checks of the analysis behind the learned preconditioner:
//  - the coupled recurrence for the rescaled approximation error
//        A_{t+1} = A_t - alpha H b_{t+1} b_t^T H^2,   b_{t+1} = A_t b_t - s_t
//    followed by a dense-matrix meta-learner on a wandering quadratic bowl;
//  - the Monte-Carlo estimator sigma^2 = mean ||(I - G H) v||^2 over random
//    unit probes, an unbiased estimate of ||I - G H||_F^2 / n;
//  - entropy-deficit and reachability statistics of permutations composed
//    from blocks of optional disjoint transpositions, at sizes where the
//    whole symmetric group can be tabulated.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lodo/gmat.hpp"
#include "lodo/linalg.hpp"
#include "lodo/rng.hpp"

namespace lodo {

// Symmetric PD matrix kept in eigendecomposed form H = U diag(d) U^T.
struct SpectralMatrix {
  Matrix u;
  Vector d;

  int dim() const { return u.rows(); }

  Matrix dense() const {
    const int n = dim();
    Matrix h(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += u(i, l) * d[static_cast<std::size_t>(l)] * u(j, l);
        h(i, j) = s;
      }
    return h;
  }

  // U diag(f(d)) U^T for spectral functions of H
  Matrix dense_power(double p) const {
    const int n = dim();
    Matrix h(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l)
          s += u(i, l) * std::pow(d[static_cast<std::size_t>(l)], p) * u(j, l);
        h(i, j) = s;
      }
    return h;
  }
};

inline SpectralMatrix random_spd(int n, double dmin, double dmax, std::uint64_t seed) {
  if (!(dmin > 0.0) || !(dmax >= dmin))
    throw std::invalid_argument("random_spd: bad spectrum");
  Rng rng(seed);
  SpectralMatrix h;
  h.u = random_orthogonal(n, rng);
  h.d.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    h.d[static_cast<std::size_t>(i)] =
        n == 1 ? dmin : dmin * std::pow(dmax / dmin, static_cast<double>(i) / (n - 1));
  return h;
}

struct DynamicsOptions {
  double alpha = 1e-4;
  long steps = 1000;
  std::uint64_t seed = 0;
  Matrix a0;         // empty -> 0.5 * I
  Vector sigma_diag; // noise covariance diagonal; empty -> identity
};

struct DynamicsRow {
  double frob_a = 0.0;
  double frob_b_dinv = 0.0;
  double loss = 0.0;
};

struct DynamicsTrace {
  std::vector<DynamicsRow> rows;  // states t = 0 .. steps inclusive
  Matrix a_final;
  Vector b_final;
  bool alpha_warning = false;  // alpha * ||H||^3 > 0.01
};

// Iterates the error recurrence and records (||A_t||_F, ||B_t D^-1||_F,
// loss_t) with B_t = U^T A_t U and loss_t = 1/2 b_t^T H b_t. The noise draw
// is n ordered normal() calls per step, scaled by sqrt(sigma_diag).
// `observer`, when set, sees every (t, A_t, b_t) before the update.
inline DynamicsTrace simulate_dense_dynamics(
    const SpectralMatrix& h, const DynamicsOptions& opt,
    const std::function<void(long, const Matrix&, const Vector&)>& observer = {}) {
  const int n = h.dim();
  for (double d : h.d)
    if (!(d > 0.0))
      throw std::invalid_argument("simulate_dense_dynamics: H must be positive definite");

  Matrix a = opt.a0.empty() ? Matrix::scaled_identity(n, 0.5) : opt.a0;
  if (a.rows() != n || a.cols() != n)
    throw std::invalid_argument("simulate_dense_dynamics: A0 dimension mismatch");
  {
    Rng probe(derive_seed(opt.seed, 0x5eed));
    if (spectral_norm_estimate(a, probe) >= 1.0)
      throw std::invalid_argument("simulate_dense_dynamics: ||A0||_2 must be < 1");
  }

  Vector sig = opt.sigma_diag;
  if (sig.empty()) sig.assign(static_cast<std::size_t>(n), 1.0);
  if (static_cast<int>(sig.size()) != n)
    throw std::invalid_argument("simulate_dense_dynamics: sigma_diag dimension mismatch");

  const Matrix hd = h.dense();
  const Matrix h2 = h.dense_power(2.0);

  DynamicsTrace trace;
  double dmax = 0.0;
  for (double d : h.d) dmax = std::max(dmax, d);
  trace.alpha_warning = opt.alpha * dmax * dmax * dmax > 0.01;

  Vector b(static_cast<std::size_t>(n), 0.0);
  Rng rng(opt.seed);

  const Matrix ut = h.u.transpose();
  auto record = [&](long t) {
    if (observer) observer(t, a, b);
    DynamicsRow row;
    row.frob_a = a.frobenius_norm();
    // B D^-1 = U^T A U diag(1/d): column j of B scaled by 1/d_j
    const Matrix bm = ut.matmul(a).matmul(h.u);
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = bm(i, j) / h.d[static_cast<std::size_t>(j)];
        s += x * x;
      }
    row.frob_b_dinv = std::sqrt(s);
    const Vector hb = hd.matvec(b);
    row.loss = 0.5 * dot(b, hb);
    trace.rows.push_back(row);
  };

  Vector s_t(static_cast<std::size_t>(n));
  for (long t = 0; t < opt.steps; ++t) {
    record(t);
    for (int i = 0; i < n; ++i)
      s_t[static_cast<std::size_t>(i)] =
          std::sqrt(sig[static_cast<std::size_t>(i)]) * rng.normal();
    Vector b_next = a.matvec(b);
    for (int i = 0; i < n; ++i) b_next[static_cast<std::size_t>(i)] -= s_t[static_cast<std::size_t>(i)];
    // A -= alpha (H b_next) (H^2 b)^T
    const Vector u = hd.matvec(b_next);
    const Vector w = h2.matvec(b);
    a.add_outer(-opt.alpha, u, w);
    b = std::move(b_next);
  }
  record(opt.steps);
  trace.a_final = a;
  trace.b_final = b;
  return trace;
}

// ---------------------------------------------------------------------------
// Inverse-Hessian approximation error estimate

// sigma_hat = sqrt( (1/probes) sum ||(I - G H) v_i||^2 ) over independent
// uniform unit vectors v_i. Returns sigma_hat; per-probe squared norms go to
// `sq_out` when provided (for standard-error computations).
inline double estimate_sigma(const std::function<Vector(const Vector&)>& apply_g,
                             const Matrix& h, int probes, std::uint64_t seed,
                             std::vector<double>* sq_out = nullptr) {
  if (probes < 1) throw std::invalid_argument("estimate_sigma: probes must be >= 1");
  const int n = h.rows();
  Rng rng(seed);
  double acc = 0.0;
  Vector v(static_cast<std::size_t>(n));
  for (int p = 0; p < probes; ++p) {
    double nrm = 0.0;
    do {
      for (auto& x : v) x = rng.normal();
      nrm = norm2(v);
    } while (nrm == 0.0);
    for (auto& x : v) x /= nrm;
    const Vector ghv = apply_g(h.matvec(v));
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = v[static_cast<std::size_t>(i)] - ghv[static_cast<std::size_t>(i)];
      sq += r * r;
    }
    if (sq_out) sq_out->push_back(sq);
    acc += sq;
  }
  return std::sqrt(acc / probes);
}

inline double estimate_sigma(const Preconditioner& p, const Matrix& h, int probes,
                             std::uint64_t seed) {
  if (h.rows() != p.dim() || h.cols() != p.dim())
    throw std::invalid_argument("estimate_sigma: dimension mismatch");
  return estimate_sigma([&](const Vector& v) { return p.apply(v); }, h, probes, seed);
}

// ---------------------------------------------------------------------------
// Permutation statistics at tabulatable sizes (n_tilde <= 6)

namespace detail {

inline long factorial(int n) {
  long f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Lehmer-code index of a permutation of n elements
inline int perm_index(const std::vector<int>& p) {
  const int n = static_cast<int>(p.size());
  int idx = 0;
  for (int i = 0; i < n; ++i) {
    int smaller = 0;
    for (int j = i + 1; j < n; ++j)
      if (p[static_cast<std::size_t>(j)] < p[static_cast<std::size_t>(i)]) ++smaller;
    idx = idx * (n - i) + smaller;
  }
  return idx;
}

inline std::vector<int> index_perm(int idx, int n) {
  std::vector<int> digits(static_cast<std::size_t>(n), 0);
  for (int i = n - 1; i >= 0; --i) {
    digits[static_cast<std::size_t>(i)] = idx % (n - i);
    idx /= (n - i);
  }
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int d = digits[static_cast<std::size_t>(i)];
    p[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(d)];
    pool.erase(pool.begin() + d);
  }
  return p;
}

// Uniformly random perfect matching of {0..n-1} as a list of pairs.
inline std::vector<std::pair<int, int>> random_matching(int n, Rng& rng) {
  std::vector<int> order = rng.permutation(n);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n / 2));
  for (int i = 0; i < n; i += 2)
    pairs.emplace_back(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i + 1)]);
  return pairs;
}

// Index of (transposition (a b)) composed after the permutation with index
// idx; precomputing a swap table keeps the inner loops cheap.
struct GroupTable {
  int n;
  long size;
  std::vector<std::vector<int>> perms;

  explicit GroupTable(int n_) : n(n_), size(factorial(n_)) {
    perms.reserve(static_cast<std::size_t>(size));
    for (long i = 0; i < size; ++i) perms.push_back(index_perm(static_cast<int>(i), n));
  }

  // index of tau_{ab} . sigma  (apply sigma, then swap values a and b)
  int compose_swap(int sigma_idx, int a, int b) const {
    std::vector<int> q = perms[static_cast<std::size_t>(sigma_idx)];
    for (auto& v : q) {
      if (v == a) v = b;
      else if (v == b) v = a;
    }
    return perm_index(q);
  }
};

}  // namespace detail

struct EntropyEstimate {
  int n_tilde = 0;
  int m_blocks = 0;
  long trials = 0;
  double epsilon_hat = 0.0;  // log(n_tilde!) - mean entropy, in nats
  double std_err = 0.0;
};

// Draws `trials` sequences of m_blocks random perfect matchings (each block is
// n_tilde/2 disjoint transpositions, so it commutes internally), keeps each
// transposition with probability 1/2, and measures how far the resulting
// permutation distribution falls short of uniform on S_{n_tilde}. The
// distribution over the group is propagated exactly, which is equivalent to
// enumerating all 2^(m_blocks*n_tilde/2) keep/drop masks.
inline EntropyEstimate estimate_permutation_entropy(int n_tilde, int m_blocks,
                                                    long trials, std::uint64_t seed) {
  if (n_tilde < 2 || n_tilde % 2 != 0)
    throw std::invalid_argument("estimate_permutation_entropy: n_tilde must be even and >= 2");
  if (n_tilde > 6)
    throw std::invalid_argument("estimate_permutation_entropy: n_tilde too large to tabulate");
  if (m_blocks < 1 || trials < 1)
    throw std::invalid_argument("estimate_permutation_entropy: need m_blocks, trials >= 1");

  const detail::GroupTable table(n_tilde);
  Rng rng(seed);

  std::vector<double> eps;
  eps.reserve(static_cast<std::size_t>(trials));
  std::vector<double> p(static_cast<std::size_t>(table.size));
  std::vector<double> q(static_cast<std::size_t>(table.size));
  for (long trial = 0; trial < trials; ++trial) {
    std::fill(p.begin(), p.end(), 0.0);
    p[0] = 1.0;  // index 0 is the identity
    for (int blk = 0; blk < m_blocks; ++blk) {
      for (const auto& [a, b] : detail::random_matching(n_tilde, rng)) {
        std::fill(q.begin(), q.end(), 0.0);
        for (long i = 0; i < table.size; ++i) {
          const double pi = p[static_cast<std::size_t>(i)];
          if (pi == 0.0) continue;
          const int j = table.compose_swap(static_cast<int>(i), a, b);
          q[static_cast<std::size_t>(i)] += 0.5 * pi;
          q[static_cast<std::size_t>(j)] += 0.5 * pi;
        }
        std::swap(p, q);
      }
    }
    // KL divergence from uniform: sum p log(p * |G|); zero exactly when the
    // distribution is uniform over the whole group. Nonnegative by theory;
    // the clamp only absorbs last-ulp rounding.
    double kl = 0.0;
    for (double pi : p)
      if (pi > 0.0) kl += pi * std::log(pi * static_cast<double>(table.size));
    eps.push_back(std::max(0.0, kl));
  }

  EntropyEstimate est;
  est.n_tilde = n_tilde;
  est.m_blocks = m_blocks;
  est.trials = trials;
  double mean = 0.0;
  for (double e : eps) mean += e;
  mean /= static_cast<double>(trials);
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  var = trials > 1 ? var / static_cast<double>(trials - 1) : 0.0;
  est.epsilon_hat = mean;
  est.std_err = std::sqrt(var / static_cast<double>(trials));
  return est;
}

// For each seed, draws n_blocks random matchings and grows the reachable set
// R <- R union (tau R) one transposition at a time (equivalent to enumerating
// every keep/drop mask). Returns the per-seed fraction of S_{n_tilde} reached.
inline std::vector<double> reachability_fractions(int n_tilde, int n_blocks,
                                                  int seed_count, std::uint64_t seed) {
  if (n_tilde < 2 || n_tilde % 2 != 0 || n_tilde > 6)
    throw std::invalid_argument("reachability_fractions: n_tilde must be even, 2..6");
  if (n_blocks < 1 || seed_count < 1)
    throw std::invalid_argument("reachability_fractions: need n_blocks, seed_count >= 1");

  const detail::GroupTable table(n_tilde);
  std::vector<double> fractions;
  fractions.reserve(static_cast<std::size_t>(seed_count));
  for (int s = 0; s < seed_count; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    std::vector<char> reached(static_cast<std::size_t>(table.size), 0);
    reached[0] = 1;
    long count = 1;
    for (int blk = 0; blk < n_blocks && count < table.size; ++blk) {
      for (const auto& [a, b] : detail::random_matching(n_tilde, rng)) {
        std::vector<int> frontier;
        for (long i = 0; i < table.size; ++i) {
          if (!reached[static_cast<std::size_t>(i)]) continue;
          const int j = table.compose_swap(static_cast<int>(i), a, b);
          if (!reached[static_cast<std::size_t>(j)]) frontier.push_back(j);
        }
        for (int j : frontier)
          if (!reached[static_cast<std::size_t>(j)]) {
            reached[static_cast<std::size_t>(j)] = 1;
            ++count;
          }
      }
    }
    fractions.push_back(static_cast<double>(count) / static_cast<double>(table.size));
  }
  return fractions;
}

inline double reachability_fraction(int n_tilde, int n_blocks, int seed_count,
                                    std::uint64_t seed) {
  const auto f = reachability_fractions(n_tilde, n_blocks, seed_count, seed);
  double mean = 0.0;
  for (double x : f) mean += x;
  return mean / static_cast<double>(f.size());
}

}  // namespace lodo
