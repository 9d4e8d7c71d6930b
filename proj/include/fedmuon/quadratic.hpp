#pragma once

#include <cstddef>
#include <vector>

#include "fedmuon/matrix.hpp"
#include "fedmuon/rng.hpp"
#include "fedmuon/task.hpp"

namespace fedmuon {

/// f_i(W) = 1/2 ||B_i W - C_i||_F^2 with W of shape rows x cols.
struct QuadraticClient {
  Matrix b;                  // rows x rows
  Matrix c;                  // rows x cols
  Matrix optimum;            // W_i* = B_i^{-1} C_i
  double noise_sigma = 0.0;  // E||noise||_F^2 = noise_sigma^2
  double smoothness = 0.0;   // sigma_max(B_i)^2
};

struct QuadraticFamilyOptions {
  std::size_t n_clients = 20;
  std::size_t rows = 8;
  std::size_t cols = 8;
  double sigma_g = 0.0;
  double sigma_l = 0.0;
  double target_l = 1.0;
  /// Condition number of the shared Hessian B_i^T B_i.
  double condition = 100.0;
  /// ||W* - x0||_F with x0 = 0.
  double init_distance = 4.0;
  /// false: each client gets its own right basis V_i, so Hessians differ.
  bool shared_hessian = true;
};

/// B_i = U_i S V_i^T with client-specific rotations U_i and a common spectrum S.
/// V_i is shared unless shared_hessian is false. Per-client optima are offset
/// from W* by perturbations D_i with sum_i H_i D_i = 0, scaled so that
/// max_i ||grad f_i(W*)||_F = sigma_g.
struct QuadraticFamily {
  std::vector<QuadraticClient> clients;
  double sigma_g = 0.0;
  Matrix w_star;
  double f_star = 0.0;

  double loss(const Matrix& w) const;
  Matrix full_grad(const Matrix& w) const;
};

QuadraticFamily make_quadratic_family(const QuadraticFamilyOptions& opts, Rng& rng);

double loss(const QuadraticClient& client, const Matrix& w);
Matrix full_grad(const QuadraticClient& client, const Matrix& w);
/// Exact gradient plus N(0, sigma_l^2 / (rows * cols)) per entry.
Matrix stochastic_grad(const QuadraticClient& client, const Matrix& w, Rng& rng);

/// max_i ||grad f_i(W) - grad f(W)||_F.
double gradient_dissimilarity(const QuadraticFamily& family, const Matrix& w);

/// Haar-ish random orthogonal matrix via modified Gram-Schmidt on a Gaussian draw.
Matrix random_orthogonal(std::size_t n, Rng& rng);

/// Adapts a QuadraticFamily to the round loop; the single parameter is "w",
/// starting from zero.
class QuadraticTask final : public FederatedTask {
 public:
  explicit QuadraticTask(QuadraticFamily family);

  const QuadraticFamily& family() const noexcept { return family_; }

  std::size_t num_clients() const override { return family_.clients.size(); }
  const ParamSet& initial_params() const override { return init_; }
  ParamSet client_gradient(std::size_t client, const ParamSet& x, Rng& rng) const override;
  double global_loss(const ParamSet& x) const override;
  ParamSet global_gradient(const ParamSet& x) const override;
  std::optional<double> optimal_loss() const override { return family_.f_star; }

 private:
  QuadraticFamily family_;
  ParamSet init_;
};

}  // namespace fedmuon
