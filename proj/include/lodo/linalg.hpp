#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lodo/rng.hpp"

namespace lodo {

using Vector = std::vector<double>;

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vector& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

// y += alpha * x
inline void axpy(double alpha, const Vector& x, Vector& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const Vector& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

// Dense row-major matrix. Sizes in this project stay small (at most a few
// hundred), so no attempt is made at blocking or BLAS.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols),
        a_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix scaled_identity(int n, double s) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = s;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return a_.empty(); }

  double& operator()(int i, int j) { return a_[idx(i, j)]; }
  double operator()(int i, int j) const { return a_[idx(i, j)]; }

  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

  Vector matvec(const Vector& x) const {
    Vector y(static_cast<std::size_t>(rows_), 0.0);
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      const double* row = &a_[idx(i, 0)];
      for (int j = 0; j < cols_; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = s;
    }
    return y;
  }

  Vector matvec_t(const Vector& x) const {
    Vector y(static_cast<std::size_t>(cols_), 0.0);
    for (int i = 0; i < rows_; ++i) {
      const double* row = &a_[idx(i, 0)];
      const double xi = x[static_cast<std::size_t>(i)];
      for (int j = 0; j < cols_; ++j) y[static_cast<std::size_t>(j)] += row[j] * xi;
    }
    return y;
  }

  Matrix matmul(const Matrix& b) const {
    Matrix c(rows_, b.cols_);
    for (int i = 0; i < rows_; ++i)
      for (int k = 0; k < cols_; ++k) {
        const double aik = (*this)(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  // this += alpha * u v^T
  void add_outer(double alpha, const Vector& u, const Vector& v) {
    for (int i = 0; i < rows_; ++i) {
      const double aui = alpha * u[static_cast<std::size_t>(i)];
      double* row = &a_[idx(i, 0)];
      for (int j = 0; j < cols_; ++j) row[j] += aui * v[static_cast<std::size_t>(j)];
    }
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double x : a_) s += x * x;
    return std::sqrt(s);
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(j);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

// Haar-uniform random orthogonal matrix: modified Gram-Schmidt on a matrix of
// iid standard normals. MGS normalizes by a positive residual norm, which is
// exactly the positive-diagonal QR convention needed for uniformity. Columns
// are reorthogonalized once, keeping Q^T Q - I below ~1e-14.
inline Matrix random_orthogonal(int n, Rng& rng) {
  Matrix q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = rng.normal();
  for (int j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int p = 0; p < j; ++p) {
        double proj = 0.0;
        for (int i = 0; i < n; ++i) proj += q(i, p) * q(i, j);
        for (int i = 0; i < n; ++i) q(i, j) -= proj * q(i, p);
      }
    }
    double nrm = 0.0;
    for (int i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) throw std::runtime_error("random_orthogonal: degenerate draw");
    for (int i = 0; i < n; ++i) q(i, j) /= nrm;
  }
  return q;
}

// Spectral norm estimate by power iteration on A^T A.
inline double spectral_norm_estimate(const Matrix& a, Rng& rng, int iters = 100) {
  Vector v(static_cast<std::size_t>(a.cols()));
  for (auto& x : v) x = rng.normal();
  double nrm = norm2(v);
  if (nrm == 0.0) return 0.0;
  for (auto& x : v) x /= nrm;
  for (int it = 0; it < iters; ++it) {
    Vector w = a.matvec(v);
    v = a.matvec_t(w);
    nrm = norm2(v);
    if (nrm == 0.0) return 0.0;
    for (auto& x : v) x /= nrm;
  }
  return norm2(a.matvec(v));
}

}  // namespace lodo
