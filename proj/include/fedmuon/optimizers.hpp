#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedmuon/linalg.hpp"
#include "fedmuon/matrix.hpp"

namespace fedmuon {

/// How a momentum matrix is turned into an update direction.
enum class Orthogonalizer {
  kNewtonSchulz,
  kSvd,       // exact U V^T
  kIdentity,  // no orthogonalization; the Muon rule degenerates to momentum SGD
};

enum class MomentumForm {
  kAccumulate,   // m' = beta m + g
  kInterpolate,  // m' = beta m + (1 - beta) g
};

struct Hyperparams {
  double lr = 0.02;
  double beta = 0.98;
  double alpha = 0.5;
  double weight_decay = 0.01;
  int local_steps = 50;

  // AdamW, used for Local AdamW and for 1-D parameters inside Muon runs.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int ns_iters = 5;
  NewtonSchulzSchedule ns_schedule = NewtonSchulzSchedule::kMonotoneMinimax;
  Orthogonalizer orthogonalizer = Orthogonalizer::kNewtonSchulz;
  MomentumForm momentum_form = MomentumForm::kAccumulate;

  /// Throws std::invalid_argument on the first out-of-range field.
  void validate() const;
};

struct MatrixStep {
  Matrix weights;
  Matrix momentum;
};

/// Momentum update per h.momentum_form. Shapes must match.
Matrix accumulate_momentum(const Matrix& momentum, const Matrix& grad, const Hyperparams& h);

/// Orthogonalized update direction for a momentum matrix. Momenta with
/// ||m||_F < 1e-12 yield a zero direction.
Matrix orthogonalized_direction(const Matrix& momentum, const Hyperparams& h);

/// Plain Muon: m' = beta m + g, w' = w - lr * orth(m').
MatrixStep muon_step(const Matrix& w, const Matrix& m, const Matrix& g, const Hyperparams& h);

/// Muon step with weight decay and local-global alignment:
/// w' = w - lr * [(1 - alpha) orth(m') + weight_decay * w + alpha * delta_g].
MatrixStep fedmuon_local_step(const Matrix& w, const Matrix& m, const Matrix& g,
                              const Matrix& delta_g, const Hyperparams& h);

/// w' = w - lr * (g + weight_decay * w).
Matrix sgd_step(const Matrix& w, const Matrix& g, const Hyperparams& h);
std::vector<double> sgd_step(const std::vector<double>& w, const std::vector<double>& g,
                             const Hyperparams& h);

/// First/second moment estimates and step count. An empty state is treated
/// as all zeros with step 0.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  static AdamState zeros(std::size_t n);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamwMatrixStep {
  Matrix weights;
  AdamState state;
};

struct VectorStep {
  std::vector<double> values;
  AdamState state;
};

/// AdamW with bias correction and decoupled weight decay.
AdamwMatrixStep adamw_step(const Matrix& w, const AdamState& state, const Matrix& g,
                           const Hyperparams& h);

/// AdamW for 1-D parameters inside Muon-style runs.
VectorStep vector_param_step(const std::vector<double>& v, const AdamState& state,
                             const std::vector<double>& g, const Hyperparams& h);

namespace detail {

/// In-place AdamW on flat storage. With clamp_second_moment the second moment
/// estimate is pinned to 1, which turns the rule into bias-corrected heavy-ball.
void adamw_update(std::span<double> w, AdamState& state, std::span<const double> g,
                  const Hyperparams& h, bool clamp_second_moment = false);

}  // namespace detail

}  // namespace fedmuon
