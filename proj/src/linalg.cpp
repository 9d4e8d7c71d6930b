#include "fedmuon/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fedmuon {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kNormalizationGuard = 1e-7;
constexpr int kMaxJacobiSweeps = 100;

// Greedy minimax fit of 1 on [l_t, 1] subject to x <= p(x) <= 1, with
// l_0 = 1e-3 and l_{t+1} = p_t(l_t).
constexpr std::array<QuinticCoefficients, 5> kMinimaxSchedule = {{
    {2.6189040098211542, -3.2452830384469005, 1.6263790286257469},
    {2.6181780943114017, -3.2427844414449187, 1.6246063471335195},
    {2.6174571872769619, -3.2402977915004021, 1.6228406042234378},
    {2.6167366621094050, -3.2378138548730702, 1.6210771927636654},
    {2.6160146939211226, -3.2353292886131846, 1.6193145946920626},
}};
constexpr QuinticCoefficients kClassicalQuintic = {15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0};
constexpr QuinticCoefficients kMuonQuintic = {3.4445, -4.7750, 2.0315};

QuinticCoefficients coefficients_for(NewtonSchulzSchedule schedule, int step) {
  if (schedule == NewtonSchulzSchedule::kMuonQuintic) return kMuonQuintic;
  if (step < static_cast<int>(kMinimaxSchedule.size())) return kMinimaxSchedule[step];
  return kClassicalQuintic;
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Replaces column `j` of the column-major `u` (rows x cols) with a unit vector
// orthogonal to every column flagged in `accepted`.
void complete_column(std::vector<double>& u, std::size_t rows, std::size_t j,
                     const std::vector<bool>& accepted) {
  std::vector<double> cand(rows);
  for (std::size_t e = 0; e < rows; ++e) {
    std::fill(cand.begin(), cand.end(), 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < accepted.size(); ++k) {
        if (!accepted[k]) continue;
        const double* uk = u.data() + k * rows;
        const double proj = dot(cand.data(), uk, rows);
        for (std::size_t i = 0; i < rows; ++i) cand[i] -= proj * uk[i];
      }
    }
    const double norm = std::sqrt(dot(cand.data(), cand.data(), rows));
    if (norm > 0.5) {
      for (std::size_t i = 0; i < rows; ++i) u[j * rows + i] = cand[i] / norm;
      return;
    }
  }
  throw std::logic_error("svd: failed to complete orthonormal basis");
}

SvdFactors svd_tall(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();

  // Column-major working copies so the rotations stream through memory.
  std::vector<double> a(rows * n);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[j * rows + i] = m(i, j);
  }
  std::vector<double> v(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) v[j * n + j] = 1.0;

  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(rows);
  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* ap = a.data() + p * rows;
      for (std::size_t q = p + 1; q < n; ++q) {
        double* aq = a.data() + q * rows;
        const double alpha = dot(ap, ap, rows);
        const double beta = dot(aq, aq, rows);
        const double gamma = dot(ap, aq, rows);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(ap, aq, rows, c, s);
        rotate(v.data() + p * n, v.data() + q * n, n, c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    norms[j] = std::sqrt(dot(a.data() + j * rows, a.data() + j * rows, rows));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdFactors out{Matrix(rows, n), std::vector<double>(n), Matrix(n, n)};
  std::vector<double> u(rows * n, 0.0);
  std::vector<bool> accepted(n, false);
  const double sigma_max = norms[order.front()];
  const double floor = sigma_max * std::numeric_limits<double>::epsilon();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    if (norms[j] > floor && norms[j] > 0.0) {
      for (std::size_t i = 0; i < rows; ++i) u[k * rows + i] = a[j * rows + i] / norms[j];
      accepted[k] = true;
    }
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j * n + i];
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (accepted[k]) continue;
    complete_column(u, rows, k, accepted);
    accepted[k] = true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = u[k * rows + i];
  }
  return out;
}

}  // namespace

SvdFactors svd(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("svd: empty matrix");
  if (!m.all_finite()) throw std::invalid_argument("svd: non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);
  SvdFactors t = svd_tall(transpose(m));
  return SvdFactors{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

Matrix orthogonalize_svd(const Matrix& m) {
  const SvdFactors f = svd(m);
  if (f.sigma.front() == 0.0) {
    throw std::invalid_argument("orthogonalize_svd: zero matrix has no polar factor");
  }
  const double cutoff = kRankTolerance * f.sigma.front();
  Matrix out(m.rows(), m.cols());
  for (std::size_t k = 0; k < f.sigma.size(); ++k) {
    if (f.sigma[k] < cutoff) break;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double uik = f.u(i, k);
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) += uik * f.v(j, k);
    }
  }
  return out;
}

Matrix newton_schulz(const Matrix& m, int iters, NewtonSchulzSchedule schedule) {
  if (iters < 1) throw std::invalid_argument("newton_schulz: iters must be >= 1");
  if (m.empty()) throw std::invalid_argument("newton_schulz: empty matrix");
  const double norm = frobenius_norm(m);
  if (norm == 0.0) throw std::invalid_argument("newton_schulz: zero matrix");
  if (!std::isfinite(norm)) throw std::invalid_argument("newton_schulz: non-finite entries");

  Matrix x = m * (1.0 / (norm + kNormalizationGuard));
  const bool tall = m.rows() > m.cols();
  for (int step = 0; step < iters; ++step) {
    const auto [a, b, c] = coefficients_for(schedule, step);
    // Tall: X (bA + cA^2) with A = X^T X. Otherwise (bA + cA^2) X with A = X X^T.
    const Matrix gram = tall ? matmul_tn(x, x) : matmul(x, transpose(x));
    Matrix poly = matmul(gram, gram) * c;
    poly += gram * b;
    Matrix next = tall ? matmul(x, poly) : matmul(poly, x);
    next += x * a;
    x = std::move(next);
  }
  return x;
}

LowRankFactors truncate_top_k(const SvdFactors& f, std::size_t k) {
  if (k < 1 || k > f.sigma.size()) {
    throw std::invalid_argument("truncate_top_k: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(f.sigma.size()) + "]");
  }
  LowRankFactors out{Matrix(f.u.rows(), k),
                     std::vector<double>(f.sigma.begin(), f.sigma.begin() + static_cast<long>(k)),
                     Matrix(f.v.rows(), k)};
  for (std::size_t i = 0; i < f.u.rows(); ++i) {
    for (std::size_t j = 0; j < k; ++j) out.u(i, j) = f.u(i, j);
  }
  for (std::size_t i = 0; i < f.v.rows(); ++i) {
    for (std::size_t j = 0; j < k; ++j) out.v(i, j) = f.v(i, j);
  }
  return out;
}

Matrix reconstruct(const LowRankFactors& f) {
  if (f.u.cols() != f.rank() || f.v.cols() != f.rank()) {
    throw std::invalid_argument("reconstruct: factor dimensions disagree with rank");
  }
  Matrix scaled_u = f.u;
  for (std::size_t i = 0; i < scaled_u.rows(); ++i) {
    for (std::size_t k = 0; k < f.rank(); ++k) scaled_u(i, k) *= f.sigma[k];
  }
  return matmul(scaled_u, transpose(f.v));
}

double condition_number(const Matrix& m) {
  const SvdFactors f = svd(m);
  const double hi = f.sigma.front();
  const double lo = f.sigma.back();
  if (hi == 0.0 || lo < kRankTolerance * hi) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

std::size_t compression_rank(std::size_t rows, std::size_t cols, double fraction) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("compression_rank: empty shape");
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("compression_rank: fraction must be in (0, 1]");
  }
  const auto full = static_cast<double>(std::min(rows, cols));
  // std::round rounds halfway cases away from zero.
  const auto k = static_cast<std::size_t>(std::round(fraction * full));
  return std::clamp<std::size_t>(k, 1, std::min(rows, cols));
}

}  // namespace fedmuon
