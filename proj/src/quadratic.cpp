#include "fedmuon/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedmuon/linalg.hpp"

namespace fedmuon {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

void require_finite(const Matrix& w, const char* what) {
  if (!w.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite parameters");
}

}  // namespace

Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix q = gaussian(n, n, rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += q(i, j) * q(i, k);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
      }
    }
    double len = 0.0;
    for (std::size_t i = 0; i < n; ++i) len += q(i, j) * q(i, j);
    len = std::sqrt(len);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= len;
  }
  return q;
}

double loss(const QuadraticClient& client, const Matrix& w) {
  require_finite(w, "quadratic loss");
  Matrix r = matmul(client.b, w);
  r -= client.c;
  return 0.5 * squared_frobenius_norm(r);
}

Matrix full_grad(const QuadraticClient& client, const Matrix& w) {
  require_finite(w, "quadratic gradient");
  Matrix r = matmul(client.b, w);
  r -= client.c;
  return matmul_tn(client.b, r);
}

Matrix stochastic_grad(const QuadraticClient& client, const Matrix& w, Rng& rng) {
  Matrix g = full_grad(client, w);
  if (client.noise_sigma > 0.0) {
    const double std_dev = client.noise_sigma / std::sqrt(static_cast<double>(g.size()));
    std::normal_distribution<double> normal(0.0, std_dev);
    for (double& v : g.values()) v += normal(rng);
  }
  return g;
}

double QuadraticFamily::loss(const Matrix& w) const {
  double acc = 0.0;
  for (const auto& c : clients) acc += fedmuon::loss(c, w);
  return acc / static_cast<double>(clients.size());
}

Matrix QuadraticFamily::full_grad(const Matrix& w) const {
  Matrix acc(w.rows(), w.cols());
  for (const auto& c : clients) acc += fedmuon::full_grad(c, w);
  return acc * (1.0 / static_cast<double>(clients.size()));
}

double gradient_dissimilarity(const QuadraticFamily& family, const Matrix& w) {
  const Matrix mean = family.full_grad(w);
  double worst = 0.0;
  for (const auto& c : family.clients) {
    worst = std::max(worst, frobenius_norm(full_grad(c, w) - mean));
  }
  return worst;
}

QuadraticFamily make_quadratic_family(const QuadraticFamilyOptions& opts, Rng& rng) {
  if (opts.n_clients < 1 || opts.rows < 1 || opts.cols < 1) {
    throw std::invalid_argument("make_quadratic_family: dimensions must be >= 1");
  }
  if (!(opts.sigma_g >= 0.0) || !(opts.sigma_l >= 0.0)) {
    throw std::invalid_argument("make_quadratic_family: sigma_g and sigma_l must be >= 0");
  }
  if (!(opts.target_l > 0.0) || !(opts.condition >= 1.0)) {
    throw std::invalid_argument("make_quadratic_family: need target_l > 0 and condition >= 1");
  }
  const std::size_t p = opts.rows;
  const std::size_t q = opts.cols;

  // Shared spectrum: squared singular values log-spaced from L down to L / condition.
  std::vector<double> s(p);
  for (std::size_t j = 0; j < p; ++j) {
    const double frac = p == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(p - 1);
    s[j] = std::sqrt(opts.target_l * std::pow(opts.condition, -frac));
  }
  // Rows scaled by S: returns S V^T, whose Gram matrix is the client Hessian.
  auto scaled_basis = [&](const Matrix& v) {
    Matrix out = transpose(v);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) out(i, j) *= s[i];
    }
    return out;
  };
  const Matrix shared = scaled_basis(random_orthogonal(p, rng));

  QuadraticFamily family;
  family.sigma_g = opts.sigma_g;
  family.w_star = gaussian(p, q, rng);
  const double w_norm = frobenius_norm(family.w_star);
  family.w_star *= opts.init_distance / w_norm;

  std::vector<Matrix> bases;
  std::vector<Matrix> hessians;
  std::vector<Matrix> offsets;
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    bases.push_back(opts.shared_hessian ? shared : scaled_basis(random_orthogonal(p, rng)));
    hessians.push_back(matmul_tn(bases.back(), bases.back()));
    offsets.push_back(gaussian(p, q, rng));
  }

  // Center the offsets in the Hessian-weighted sense, sum_i H_i D_i = 0, so
  // that W* is the global optimum: D_i <- D_i - (sum H)^{-1} sum H_i D_i.
  Matrix h_sum(p, p);
  Matrix hd_sum(p, q);
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    h_sum += hessians[i];
    hd_sum += matmul(hessians[i], offsets[i]);
  }
  const SvdFactors h_svd = svd(h_sum);
  Matrix shift = matmul_tn(h_svd.u, hd_sum);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) shift(i, j) /= h_svd.sigma[i];
  }
  shift = matmul(h_svd.v, shift);
  double raw = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    raw = std::max(raw, frobenius_norm(matmul(hessians[i], offsets[i])));
    offsets[i] -= shift;
    worst = std::max(worst, frobenius_norm(matmul(hessians[i], offsets[i])));
  }
  // A single client (or identical ones) leaves only roundoff after centering.
  const bool spread = worst > 1e-9 * raw;
  const double scale = (opts.sigma_g > 0.0 && spread) ? opts.sigma_g / worst : 0.0;

  family.clients.reserve(opts.n_clients);
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    QuadraticClient client;
    client.b = matmul(random_orthogonal(p, rng), bases[i]);
    client.optimum = family.w_star + offsets[i] * scale;
    client.c = matmul(client.b, client.optimum);
    client.noise_sigma = opts.sigma_l;
    client.smoothness = s.front() * s.front();
    family.clients.push_back(std::move(client));
  }
  family.f_star = family.loss(family.w_star);
  return family;
}

QuadraticTask::QuadraticTask(QuadraticFamily family) : family_(std::move(family)) {
  if (family_.clients.empty()) throw std::invalid_argument("QuadraticTask: no clients");
  init_.add_matrix("w", Matrix(family_.w_star.rows(), family_.w_star.cols()));
}

ParamSet QuadraticTask::client_gradient(std::size_t client, const ParamSet& x, Rng& rng) const {
  ParamSet g;
  g.add_matrix("w", stochastic_grad(family_.clients.at(client), x.matrices.front().value, rng));
  return g;
}

double QuadraticTask::global_loss(const ParamSet& x) const {
  return family_.loss(x.matrices.front().value);
}

ParamSet QuadraticTask::global_gradient(const ParamSet& x) const {
  ParamSet g;
  g.add_matrix("w", family_.full_grad(x.matrices.front().value));
  return g;
}

}  // namespace fedmuon
