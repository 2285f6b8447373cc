#pragma once

// Implicit symmetric PSD preconditioner G(theta) and its ablated variants.
//
// The full operator is
//     G(theta) v = alpha0 * E^T Gt^T Gt E v,
//     Gt = B(theta^(1)) P_1  B(theta^(2)) P_2  ...  B(theta^(N)) P_N,
// where E zero-pads n -> n_tilde, the P_i are fixed random permutations and
// the B(theta^(i)) are learnable block-diagonal matrices of dense k x k
// blocks. Products are read right to left: applying Gt to a vector applies
// P_N first and B(theta^(1)) last. The Gt^T Gt form makes G symmetric PSD by
// construction, and orthogonal block initialization makes G = alpha0 * I.
//
// hypergrad() returns d/dtheta of g_next^T * (-G(theta) m), the sensitivity
// of the post-step loss to the operator parameters with m and g_next held
// constant. For the full variant it is computed by a reverse sweep through
// the 2N-layer chain (Gt, then Gt^T), each block accumulating contributions
// from both of its appearances.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "lodo/linalg.hpp"
#include "lodo/rng.hpp"

namespace lodo {

namespace detail {

// out[i] = in[p[i]]
inline void apply_perm(const std::vector<int>& p, const Vector& in, Vector& out) {
  for (std::size_t i = 0; i < p.size(); ++i)
    out[i] = in[static_cast<std::size_t>(p[i])];
}

// out[p[i]] = in[i]  (transpose = inverse of a permutation matrix)
inline void apply_perm_t(const std::vector<int>& p, const Vector& in, Vector& out) {
  for (std::size_t i = 0; i < p.size(); ++i)
    out[static_cast<std::size_t>(p[i])] = in[i];
}

// Block-diagonal multiply; `blocks` holds nb dense k x k row-major blocks.
inline void apply_blocks(const double* blocks, int nb, int k, const Vector& in,
                         Vector& out) {
  for (int j = 0; j < nb; ++j) {
    const double* b = blocks + static_cast<std::size_t>(j) * k * k;
    const double* x = in.data() + static_cast<std::size_t>(j) * k;
    double* y = out.data() + static_cast<std::size_t>(j) * k;
    for (int r = 0; r < k; ++r) {
      double s = 0.0;
      for (int c = 0; c < k; ++c) s += b[r * k + c] * x[c];
      y[r] = s;
    }
  }
}

inline void apply_blocks_t(const double* blocks, int nb, int k, const Vector& in,
                           Vector& out) {
  for (int j = 0; j < nb; ++j) {
    const double* b = blocks + static_cast<std::size_t>(j) * k * k;
    const double* x = in.data() + static_cast<std::size_t>(j) * k;
    double* y = out.data() + static_cast<std::size_t>(j) * k;
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      for (int r = 0; r < k; ++r) s += b[r * k + c] * x[r];
      y[c] = s;
    }
  }
}

inline Vector zero_pad(const Vector& v, int n_tilde) {
  Vector z(static_cast<std::size_t>(n_tilde), 0.0);
  std::copy(v.begin(), v.end(), z.begin());
  return z;
}

inline Vector take_head(const Vector& z, int n, double scale) {
  Vector v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = scale * z[static_cast<std::size_t>(i)];
  return v;
}

inline void write_hex(std::ostream& os, double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", x);
  os << buf;
}

inline double read_hex(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw std::runtime_error("preconditioner dump: truncated");
  return std::strtod(tok.c_str(), nullptr);
}

}  // namespace detail

// Fixed structure plus learnable blocks of the full variant.
struct GNetwork {
  int n = 0;
  int k = 4;
  int depth = 16;
  int n_tilde = 0;
  double alpha0 = 1.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::vector<int>> perms;  // depth x n_tilde
  Vector theta;                         // depth * (n_tilde/k) * k*k, block row-major

  int blocks_per_layer() const { return n_tilde / k; }
  std::size_t layer_offset(int layer) const {
    return static_cast<std::size_t>(layer) * blocks_per_layer() * k * k;
  }
};

// n_tilde = floor(2n/k)*k, bumped to k when that would fall below n (only
// possible for n < k; the tail coordinates are zero padding either way).
inline int padded_dim(int n, int k) {
  int nt = (2 * n / k) * k;
  if (nt < n) nt = k;
  return nt;
}

inline GNetwork build_gnet(int n, int k, int depth, double alpha0,
                           std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("build_gnet: n must be >= 1");
  if (k < 2) throw std::invalid_argument("build_gnet: k must be >= 2");
  if (depth < 1) throw std::invalid_argument("build_gnet: depth must be >= 1");
  if (!(alpha0 > 0.0)) throw std::invalid_argument("build_gnet: alpha0 must be > 0");

  GNetwork net;
  net.n = n;
  net.k = k;
  net.depth = depth;
  net.n_tilde = padded_dim(n, k);
  net.alpha0 = alpha0;
  net.rng_seed = seed;

  Rng rng(seed);
  const int nb = net.blocks_per_layer();
  net.perms.reserve(static_cast<std::size_t>(depth));
  net.theta.resize(static_cast<std::size_t>(depth) * nb * k * k);
  for (int i = 0; i < depth; ++i) {
    net.perms.push_back(rng.permutation(net.n_tilde));
    for (int j = 0; j < nb; ++j) {
      const Matrix q = random_orthogonal(k, rng);
      double* dst = net.theta.data() + net.layer_offset(i) +
                    static_cast<std::size_t>(j) * k * k;
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) dst[r * k + c] = q(r, c);
    }
  }
  return net;
}

namespace detail {

struct FullOp {
  GNetwork net;

  int dim() const { return net.n; }
  std::size_t num_params() const { return net.theta.size(); }
  const Vector& params() const { return net.theta; }
  Vector& params() { return net.theta; }

  Vector apply(const Vector& v) const {
    const int nt = net.n_tilde;
    const int nb = net.blocks_per_layer();
    Vector z = zero_pad(v, nt);
    Vector buf(static_cast<std::size_t>(nt));
    // Gt: P_i then B_i, for i = depth-1 .. 0
    for (int i = net.depth - 1; i >= 0; --i) {
      apply_perm(net.perms[static_cast<std::size_t>(i)], z, buf);
      apply_blocks(net.theta.data() + net.layer_offset(i), nb, net.k, buf, z);
    }
    // Gt^T: B_i^T then P_i^T, for i = 0 .. depth-1
    for (int i = 0; i < net.depth; ++i) {
      apply_blocks_t(net.theta.data() + net.layer_offset(i), nb, net.k, z, buf);
      apply_perm_t(net.perms[static_cast<std::size_t>(i)], buf, z);
    }
    return take_head(z, net.n, net.alpha0);
  }

  Vector hypergrad(const Vector& m, const Vector& g_next) const {
    const int nt = net.n_tilde;
    const int nb = net.blocks_per_layer();
    const int k = net.k;
    const int depth = net.depth;

    // forward, caching the input of every block application
    std::vector<Vector> block_in(static_cast<std::size_t>(depth));
    std::vector<Vector> block_t_in(static_cast<std::size_t>(depth));
    Vector z = zero_pad(m, nt);
    Vector buf(static_cast<std::size_t>(nt));
    for (int i = depth - 1; i >= 0; --i) {
      apply_perm(net.perms[static_cast<std::size_t>(i)], z, buf);
      block_in[static_cast<std::size_t>(i)] = buf;
      apply_blocks(net.theta.data() + net.layer_offset(i), nb, k, buf, z);
    }
    for (int i = 0; i < depth; ++i) {
      block_t_in[static_cast<std::size_t>(i)] = z;
      apply_blocks_t(net.theta.data() + net.layer_offset(i), nb, k, z, buf);
      apply_perm_t(net.perms[static_cast<std::size_t>(i)], buf, z);
    }

    // reverse sweep; seed adjoint is d/dy of alpha0 * g^T y
    Vector grad(net.theta.size(), 0.0);
    Vector adj = zero_pad(g_next, nt);
    for (auto& x : adj) x *= net.alpha0;
    for (int i = depth - 1; i >= 0; --i) {
      apply_perm(net.perms[static_cast<std::size_t>(i)], adj, buf);  // (P_i^T)^T
      const Vector& a = block_t_in[static_cast<std::size_t>(i)];
      double* g = grad.data() + net.layer_offset(i);
      for (int j = 0; j < nb; ++j) {
        const double* ax = a.data() + static_cast<std::size_t>(j) * k;
        const double* dx = buf.data() + static_cast<std::size_t>(j) * k;
        double* gj = g + static_cast<std::size_t>(j) * k * k;
        for (int r = 0; r < k; ++r)
          for (int c = 0; c < k; ++c) gj[r * k + c] += ax[r] * dx[c];
      }
      apply_blocks(net.theta.data() + net.layer_offset(i), nb, k, buf, adj);
    }
    for (int i = 0; i < depth; ++i) {
      const Vector& a = block_in[static_cast<std::size_t>(i)];
      double* g = grad.data() + net.layer_offset(i);
      for (int j = 0; j < nb; ++j) {
        const double* ax = a.data() + static_cast<std::size_t>(j) * k;
        const double* dx = adj.data() + static_cast<std::size_t>(j) * k;
        double* gj = g + static_cast<std::size_t>(j) * k * k;
        for (int r = 0; r < k; ++r)
          for (int c = 0; c < k; ++c) gj[r * k + c] += dx[r] * ax[c];
      }
      apply_blocks_t(net.theta.data() + net.layer_offset(i), nb, k, adj, buf);
      apply_perm_t(net.perms[static_cast<std::size_t>(i)], buf, adj);
    }

    for (auto& x : grad) x = -x;
    return grad;
  }
};

struct DiagonalOp {
  int n = 0;
  double alpha0 = 1.0;
  Vector theta;  // initialized to ones

  int dim() const { return n; }
  std::size_t num_params() const { return theta.size(); }
  const Vector& params() const { return theta; }
  Vector& params() { return theta; }

  Vector apply(const Vector& v) const {
    Vector y(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = alpha0 * theta[i] * v[i];
    return y;
  }

  Vector hypergrad(const Vector& m, const Vector& g_next) const {
    Vector g(theta.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -alpha0 * g_next[i] * m[i];
    return g;
  }
};

struct GlobalOp {
  int n = 0;
  double alpha0 = 1.0;
  Vector theta{1.0};  // single scalar

  int dim() const { return n; }
  std::size_t num_params() const { return 1; }
  const Vector& params() const { return theta; }
  Vector& params() { return theta; }

  Vector apply(const Vector& v) const {
    Vector y(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = alpha0 * theta[0] * v[i];
    return y;
  }

  Vector hypergrad(const Vector& m, const Vector& g_next) const {
    return Vector{-alpha0 * dot(g_next, m)};
  }
};

// Gt is a product of residual permutation layers (I + w_i P_i) around a
// learned middle diagonal: G v = alpha0 * E^T Gt^T D Gt E v. Weights start
// at 0 and D at ones so the operator starts at alpha0 * I. D is left
// unconstrained; indefiniteness is reported by diagnostics, not rejected.
struct ResidualOp {
  int n = 0;
  int depth = 0;
  int n_tilde = 0;
  double alpha0 = 1.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::vector<int>> perms;
  Vector theta;  // [w_0 .. w_{depth-1}, d_0 .. d_{n_tilde-1}]

  int dim() const { return n; }
  std::size_t num_params() const { return theta.size(); }
  const Vector& params() const { return theta; }
  Vector& params() { return theta; }

  const double* weights() const { return theta.data(); }
  const double* middle() const { return theta.data() + depth; }

  Vector apply(const Vector& v) const {
    Vector z = zero_pad(v, n_tilde);
    Vector buf(static_cast<std::size_t>(n_tilde));
    for (int i = depth - 1; i >= 0; --i) {
      apply_perm(perms[static_cast<std::size_t>(i)], z, buf);
      axpy(weights()[i], buf, z);
    }
    for (int j = 0; j < n_tilde; ++j) z[static_cast<std::size_t>(j)] *= middle()[j];
    for (int i = 0; i < depth; ++i) {
      apply_perm_t(perms[static_cast<std::size_t>(i)], z, buf);
      axpy(weights()[i], buf, z);
    }
    return take_head(z, n, alpha0);
  }

  Vector hypergrad(const Vector& m, const Vector& g_next) const {
    std::vector<Vector> in_a(static_cast<std::size_t>(depth));
    std::vector<Vector> in_c(static_cast<std::size_t>(depth));
    Vector z = zero_pad(m, n_tilde);
    Vector buf(static_cast<std::size_t>(n_tilde));
    for (int i = depth - 1; i >= 0; --i) {
      in_a[static_cast<std::size_t>(i)] = z;
      apply_perm(perms[static_cast<std::size_t>(i)], z, buf);
      axpy(weights()[i], buf, z);
    }
    const Vector pre_diag = z;
    for (int j = 0; j < n_tilde; ++j) z[static_cast<std::size_t>(j)] *= middle()[j];
    for (int i = 0; i < depth; ++i) {
      in_c[static_cast<std::size_t>(i)] = z;
      apply_perm_t(perms[static_cast<std::size_t>(i)], z, buf);
      axpy(weights()[i], buf, z);
    }

    Vector grad(theta.size(), 0.0);
    Vector adj = zero_pad(g_next, n_tilde);
    for (auto& x : adj) x *= alpha0;
    for (int i = depth - 1; i >= 0; --i) {
      apply_perm_t(perms[static_cast<std::size_t>(i)], in_c[static_cast<std::size_t>(i)], buf);
      grad[static_cast<std::size_t>(i)] += dot(adj, buf);
      apply_perm(perms[static_cast<std::size_t>(i)], adj, buf);
      axpy(weights()[i], buf, adj);
    }
    for (int j = 0; j < n_tilde; ++j)
      grad[static_cast<std::size_t>(depth + j)] +=
          adj[static_cast<std::size_t>(j)] * pre_diag[static_cast<std::size_t>(j)];
    for (int j = 0; j < n_tilde; ++j) adj[static_cast<std::size_t>(j)] *= middle()[j];
    for (int i = 0; i < depth; ++i) {
      apply_perm(perms[static_cast<std::size_t>(i)], in_a[static_cast<std::size_t>(i)], buf);
      grad[static_cast<std::size_t>(i)] += dot(adj, buf);
      apply_perm_t(perms[static_cast<std::size_t>(i)], adj, buf);
      axpy(weights()[i], buf, adj);
    }

    for (auto& x : grad) x = -x;
    return grad;
  }
};

}  // namespace detail

class Preconditioner {
 public:
  enum class Kind { full, diagonal, global, residual };

  static Preconditioner full(GNetwork net) {
    Preconditioner p;
    p.op_ = detail::FullOp{std::move(net)};
    return p;
  }
  static Preconditioner full(int n, int k, int depth, double alpha0,
                             std::uint64_t seed) {
    return full(build_gnet(n, k, depth, alpha0, seed));
  }
  static Preconditioner diagonal(int n, double alpha0) {
    Preconditioner p;
    p.op_ = detail::DiagonalOp{n, alpha0, Vector(static_cast<std::size_t>(n), 1.0)};
    return p;
  }
  static Preconditioner global(int n, double alpha0) {
    Preconditioner p;
    p.op_ = detail::GlobalOp{n, alpha0};
    return p;
  }
  static Preconditioner residual(int n, int depth, double alpha0,
                                 std::uint64_t seed) {
    if (n < 1 || depth < 1 || !(alpha0 > 0.0))
      throw std::invalid_argument("residual preconditioner: bad arguments");
    detail::ResidualOp op;
    op.n = n;
    op.depth = depth;
    op.n_tilde = padded_dim(n, 4);
    op.alpha0 = alpha0;
    op.rng_seed = seed;
    Rng rng(seed);
    for (int i = 0; i < depth; ++i) op.perms.push_back(rng.permutation(op.n_tilde));
    op.theta.assign(static_cast<std::size_t>(depth + op.n_tilde), 0.0);
    for (int j = 0; j < op.n_tilde; ++j) op.theta[static_cast<std::size_t>(depth + j)] = 1.0;
    Preconditioner p;
    p.op_ = std::move(op);
    return p;
  }

  Kind kind() const { return static_cast<Kind>(op_.index()); }

  int dim() const {
    return std::visit([](const auto& op) { return op.dim(); }, op_);
  }

  double alpha0() const {
    return std::visit(
        [](const auto& op) {
          if constexpr (std::is_same_v<std::decay_t<decltype(op)>, detail::FullOp>)
            return op.net.alpha0;
          else
            return op.alpha0;
        },
        op_);
  }

  std::size_t num_params() const {
    return std::visit([](const auto& op) { return op.num_params(); }, op_);
  }

  const Vector& params() const {
    return std::visit([](const auto& op) -> const Vector& { return op.params(); }, op_);
  }
  Vector& mutable_params() {
    return std::visit([](auto& op) -> Vector& { return op.params(); }, op_);
  }

  // G(theta) v
  Vector apply(const Vector& v) const {
    check_dim(v, "apply");
    return std::visit([&](const auto& op) { return op.apply(v); }, op_);
  }

  // d/dtheta of g_next^T (-G(theta) m), flattened in params() order
  Vector hypergrad(const Vector& m, const Vector& g_next) const {
    check_dim(m, "hypergrad");
    check_dim(g_next, "hypergrad");
    return std::visit([&](const auto& op) { return op.hypergrad(m, g_next); }, op_);
  }

  // Explicit matrix, for diagnostics and small-scale checks only.
  Matrix materialize_dense(int max_dim = 64) const {
    const int n = dim();
    if (n > max_dim)
      throw std::invalid_argument("materialize_dense: refusing n > " +
                                  std::to_string(max_dim));
    Matrix g(n, n);
    Vector e(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
      e[static_cast<std::size_t>(j)] = 1.0;
      const Vector col = apply(e);
      for (int i = 0; i < n; ++i) g(i, j) = col[static_cast<std::size_t>(i)];
      e[static_cast<std::size_t>(j)] = 0.0;
    }
    return g;
  }

  const GNetwork& network() const {
    return std::get<detail::FullOp>(op_).net;
  }

  void save(std::ostream& os) const;
  static Preconditioner load(std::istream& is);

 private:
  void check_dim(const Vector& v, const char* what) const {
    if (static_cast<int>(v.size()) != dim())
      throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }

  std::variant<detail::FullOp, detail::DiagonalOp, detail::GlobalOp,
               detail::ResidualOp>
      op_;
};

// ---------------------------------------------------------------------------
// Checkpoint format: line-oriented text, versioned magic header, values in
// C hexfloat so a save/load round trip is bit exact.

namespace detail {

inline constexpr const char* kDumpMagic = "LODO-PRECOND";
inline constexpr int kDumpVersion = 1;

inline void write_perms(std::ostream& os, const std::vector<std::vector<int>>& perms) {
  for (const auto& p : perms) {
    os << "perm";
    for (int v : p) os << ' ' << v;
    os << '\n';
  }
}

inline std::vector<int> read_perm(std::istream& is, int n_tilde) {
  std::string tag;
  is >> tag;
  if (tag != "perm") throw std::runtime_error("preconditioner dump: expected perm");
  std::vector<int> p(static_cast<std::size_t>(n_tilde));
  for (auto& v : p)
    if (!(is >> v)) throw std::runtime_error("preconditioner dump: truncated perm");
  return p;
}

inline void write_values(std::ostream& os, const char* tag, const Vector& v) {
  os << tag;
  for (double x : v) {
    os << ' ';
    write_hex(os, x);
  }
  os << '\n';
}

inline Vector read_values(std::istream& is, const char* tag, std::size_t count) {
  std::string t;
  is >> t;
  if (t != tag) throw std::runtime_error("preconditioner dump: expected " + std::string(tag));
  Vector v(count);
  for (auto& x : v) x = read_hex(is);
  return v;
}

}  // namespace detail

inline void Preconditioner::save(std::ostream& os) const {
  os << detail::kDumpMagic << " v" << detail::kDumpVersion << '\n';
  switch (kind()) {
    case Kind::full: {
      const auto& op = std::get<detail::FullOp>(op_);
      const auto& net = op.net;
      os << "kind full\n";
      os << "n " << net.n << "\nk " << net.k << "\ndepth " << net.depth
         << "\nn_tilde " << net.n_tilde << "\nseed " << net.rng_seed << '\n';
      os << "alpha0 ";
      detail::write_hex(os, net.alpha0);
      os << '\n';
      detail::write_perms(os, net.perms);
      detail::write_values(os, "theta", net.theta);
      break;
    }
    case Kind::diagonal: {
      const auto& op = std::get<detail::DiagonalOp>(op_);
      os << "kind diagonal\nn " << op.n << '\n' << "alpha0 ";
      detail::write_hex(os, op.alpha0);
      os << '\n';
      detail::write_values(os, "theta", op.theta);
      break;
    }
    case Kind::global: {
      const auto& op = std::get<detail::GlobalOp>(op_);
      os << "kind global\nn " << op.n << '\n' << "alpha0 ";
      detail::write_hex(os, op.alpha0);
      os << '\n';
      detail::write_values(os, "theta", op.theta);
      break;
    }
    case Kind::residual: {
      const auto& op = std::get<detail::ResidualOp>(op_);
      os << "kind residual\nn " << op.n << "\ndepth " << op.depth
         << "\nn_tilde " << op.n_tilde << "\nseed " << op.rng_seed << '\n';
      os << "alpha0 ";
      detail::write_hex(os, op.alpha0);
      os << '\n';
      detail::write_perms(os, op.perms);
      detail::write_values(os, "theta", op.theta);
      break;
    }
  }
}

inline Preconditioner Preconditioner::load(std::istream& is) {
  std::string magic, version;
  is >> magic >> version;
  if (magic != detail::kDumpMagic || version != "v1")
    throw std::runtime_error("preconditioner dump: bad magic or version");

  auto expect = [&](const char* tag) {
    std::string t;
    is >> t;
    if (t != tag)
      throw std::runtime_error("preconditioner dump: expected " + std::string(tag));
  };

  expect("kind");
  std::string kind;
  is >> kind;

  if (kind == "full") {
    GNetwork net;
    expect("n"), is >> net.n;
    expect("k"), is >> net.k;
    expect("depth"), is >> net.depth;
    expect("n_tilde"), is >> net.n_tilde;
    expect("seed"), is >> net.rng_seed;
    expect("alpha0"), net.alpha0 = detail::read_hex(is);
    for (int i = 0; i < net.depth; ++i)
      net.perms.push_back(detail::read_perm(is, net.n_tilde));
    net.theta = detail::read_values(
        is, "theta",
        static_cast<std::size_t>(net.depth) * net.blocks_per_layer() * net.k * net.k);
    return full(std::move(net));
  }
  if (kind == "diagonal") {
    int n = 0;
    expect("n"), is >> n;
    expect("alpha0");
    const double alpha0 = detail::read_hex(is);
    Preconditioner p = diagonal(n, alpha0);
    p.mutable_params() = detail::read_values(is, "theta", static_cast<std::size_t>(n));
    return p;
  }
  if (kind == "global") {
    int n = 0;
    expect("n"), is >> n;
    expect("alpha0");
    const double alpha0 = detail::read_hex(is);
    Preconditioner p = global(n, alpha0);
    p.mutable_params() = detail::read_values(is, "theta", 1);
    return p;
  }
  if (kind == "residual") {
    detail::ResidualOp op;
    expect("n"), is >> op.n;
    expect("depth"), is >> op.depth;
    expect("n_tilde"), is >> op.n_tilde;
    expect("seed"), is >> op.rng_seed;
    expect("alpha0"), op.alpha0 = detail::read_hex(is);
    for (int i = 0; i < op.depth; ++i)
      op.perms.push_back(detail::read_perm(is, op.n_tilde));
    op.theta = detail::read_values(is, "theta",
                                   static_cast<std::size_t>(op.depth + op.n_tilde));
    Preconditioner p;
    p.op_ = std::move(op);
    return p;
  }
  throw std::runtime_error("preconditioner dump: unknown kind " + kind);
}

}  // namespace lodo
