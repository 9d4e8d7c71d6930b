#pragma once

// Shared fixtures for the unit tests. Everything here is deliberately naive
// so it can serve as an oracle for the optimized library code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedmuon/linalg.hpp"
#include "fedmuon/matrix.hpp"

namespace fedmuon::testing {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = n(rng);
  return m;
}

// Triple-loop product, independent of the library's matmul.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("naive_matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<double>(s);
    }
  }
  return out;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

inline double naive_frobenius(const Matrix& a) {
  long double s = 0.0L;
  for (double x : a.values()) s += static_cast<long double>(x) * x;
  return static_cast<double>(std::sqrt(s));
}

inline double relative_frobenius(const Matrix& a, const Matrix& b) {
  Matrix d = a;
  d -= b;
  return naive_frobenius(d) / std::max(naive_frobenius(b), 1e-300);
}

// Gauss-Jordan inverse with partial pivoting.
inline Matrix naive_inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix work = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
    }
    if (work(pivot, col) == 0.0) throw std::runtime_error("naive_inverse: singular");
    for (std::size_t c = 0; c < n; ++c) {
      std::swap(work(col, c), work(pivot, c));
      std::swap(inv(col, c), inv(pivot, c));
    }
    const double d = work(col, col);
    for (std::size_t c = 0; c < n; ++c) {
      work(col, c) /= d;
      inv(col, c) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      for (std::size_t c = 0; c < n; ++c) {
        work(r, c) -= f * work(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

// Polar factor of a square nonsingular matrix by the scaled Newton iteration
// X <- (g X + X^{-T} / g) / 2. Shares no code with the SVD path.
inline Matrix polar_newton(const Matrix& a) {
  Matrix x = a;
  for (int it = 0; it < 100; ++it) {
    const Matrix inv_t = naive_transpose(naive_inverse(x));
    const double g = std::sqrt(naive_frobenius(inv_t) / naive_frobenius(x));
    Matrix next = x * (0.5 * g);
    next += inv_t * (0.5 / g);
    const double change = relative_frobenius(next, x);
    x = next;
    if (change < 1e-15) break;
  }
  return x;
}

// Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
inline Matrix haar_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix q = gaussian_matrix(n, n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

// U diag(s) V^T with Haar U, V; singular values are exactly `s` by construction.
inline Matrix with_singular_values(std::span<const double> s, std::mt19937_64& rng) {
  const std::size_t n = s.size();
  Matrix u = haar_orthogonal(n, rng);
  const Matrix v = haar_orthogonal(n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) u(i, j) *= s[j];
  }
  return naive_matmul(u, naive_transpose(v));
}

// Singular values uniform in [lo, hi] (normalized spectrum ensemble).
inline Matrix spectrum_ensemble_member(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> s(n);
  for (double& x : s) x = u(rng);
  return with_singular_values(s, rng);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace fedmuon::testing
