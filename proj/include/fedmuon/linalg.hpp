#pragma once

#include <cstddef>
#include <vector>

#include "fedmuon/matrix.hpp"

namespace fedmuon {

/// Thin SVD, m = u * diag(sigma) * v^T with r = min(rows, cols).
struct SvdFactors {
  Matrix u;                   // rows x r, orthonormal columns
  std::vector<double> sigma;  // nonincreasing, nonnegative
  Matrix v;                   // cols x r, orthonormal columns
};

/// Leading-k singular triplets of a parent SvdFactors.
struct LowRankFactors {
  Matrix u;                   // rows x k
  std::vector<double> sigma;  // length k
  Matrix v;                   // cols x k

  std::size_t rank() const noexcept { return sigma.size(); }
  std::size_t rows() const noexcept { return u.rows(); }
  std::size_t cols() const noexcept { return v.rows(); }
  /// Real values needed to ship these factors: k * (rows + cols + 1).
  std::size_t scalar_count() const noexcept { return rank() * (rows() + cols() + 1); }
};

/// One-sided (Hestenes) Jacobi SVD. Throws std::invalid_argument on an
/// empty matrix or non-finite entries.
SvdFactors svd(const Matrix& m);

/// Exact polar factor U * V^T. Singular directions with
/// sigma < 1e-12 * sigma_max are dropped rather than rejected; a zero matrix
/// throws std::invalid_argument.
Matrix orthogonalize_svd(const Matrix& m);

/// Coefficients (a, b, c) of one odd quintic step
/// X <- a X + b (X X^T) X + c (X X^T)^2 X.
struct QuinticCoefficients {
  double a;
  double b;
  double c;
};

enum class NewtonSchulzSchedule {
  /// Per-iteration minimax polynomials with x <= p(x) <= 1 on [0, 1], so every
  /// singular value rises monotonically towards 1; iterations past the table
  /// use the classical (15, -10, 3) / 8 quintic.
  kMonotoneMinimax,
  /// The fixed (3.4445, -4.7750, 2.0315) polynomial common in Muon code.
  /// Faster to leave zero but oscillates around 1 instead of converging.
  kMuonQuintic,
};

/// Approximate polar factor via Newton-Schulz. The input is divided by
/// (||m||_F + 1e-7) first; Gram products are formed on the smaller side.
/// Throws std::invalid_argument on a zero matrix or iters < 1.
Matrix newton_schulz(const Matrix& m, int iters = 5,
                     NewtonSchulzSchedule schedule = NewtonSchulzSchedule::kMonotoneMinimax);

/// Keeps the k leading singular triplets; 1 <= k <= sigma.size().
LowRankFactors truncate_top_k(const SvdFactors& f, std::size_t k);

/// u_k * diag(sigma_k) * v_k^T.
Matrix reconstruct(const LowRankFactors& f);

/// sigma_max / sigma_min; +infinity when sigma_min < 1e-12 * sigma_max.
double condition_number(const Matrix& m);

/// Compression rank for a rows x cols matrix: max(1, round(fraction * min(rows, cols)))
/// with half-away-from-zero rounding.
std::size_t compression_rank(std::size_t rows, std::size_t cols, double fraction = 0.05);

}  // namespace fedmuon
