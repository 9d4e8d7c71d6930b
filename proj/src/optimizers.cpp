#include "fedmuon/optimizers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedmuon {

namespace {

constexpr double kZeroMomentumNorm = 1e-12;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("Hyperparams: " + msg);
}

void require_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a) +
                                " vs " + std::to_string(b));
  }
}

}  // namespace

void Hyperparams::validate() const {
  require(std::isfinite(lr) && lr > 0.0, "lr must be > 0");
  require(beta >= 0.0 && beta < 1.0, "beta must be in [0, 1)");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
  require(local_steps >= 1, "local_steps must be >= 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be > 0");
  require(ns_iters >= 1, "ns_iters must be >= 1");
}

Matrix accumulate_momentum(const Matrix& momentum, const Matrix& grad, const Hyperparams& h) {
  require_same_shape(momentum, grad, "accumulate_momentum");
  Matrix out = momentum;
  auto ov = out.values();
  auto gv = grad.values();
  if (h.momentum_form == MomentumForm::kAccumulate) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = h.beta * ov[i] + gv[i];
  } else {
    const double w = 1.0 - h.beta;
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = h.beta * ov[i] + w * gv[i];
  }
  return out;
}

Matrix orthogonalized_direction(const Matrix& momentum, const Hyperparams& h) {
  if (h.orthogonalizer == Orthogonalizer::kIdentity) return momentum;
  if (frobenius_norm(momentum) < kZeroMomentumNorm) {
    return Matrix(momentum.rows(), momentum.cols());
  }
  if (h.orthogonalizer == Orthogonalizer::kSvd) return orthogonalize_svd(momentum);
  return newton_schulz(momentum, h.ns_iters, h.ns_schedule);
}

MatrixStep muon_step(const Matrix& w, const Matrix& m, const Matrix& g, const Hyperparams& h) {
  require_same_shape(w, g, "muon_step");
  MatrixStep out{w, accumulate_momentum(m, g, h)};
  const Matrix o = orthogonalized_direction(out.momentum, h);
  auto wv = out.weights.values();
  auto ov = o.values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = wv[i] - h.lr * ov[i];
  return out;
}

MatrixStep fedmuon_local_step(const Matrix& w, const Matrix& m, const Matrix& g,
                              const Matrix& delta_g, const Hyperparams& h) {
  require_same_shape(w, g, "fedmuon_local_step");
  require_same_shape(w, delta_g, "fedmuon_local_step delta_g");
  MatrixStep out{w, accumulate_momentum(m, g, h)};
  const Matrix o = orthogonalized_direction(out.momentum, h);
  auto wv = out.weights.values();
  auto ov = o.values();
  auto dv = delta_g.values();
  const double local = 1.0 - h.alpha;
  for (std::size_t i = 0; i < wv.size(); ++i) {
    wv[i] = wv[i] - h.lr * (local * ov[i] + h.weight_decay * wv[i] + h.alpha * dv[i]);
  }
  return out;
}

Matrix sgd_step(const Matrix& w, const Matrix& g, const Hyperparams& h) {
  require_same_shape(w, g, "sgd_step");
  Matrix out = w;
  auto wv = out.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = wv[i] - h.lr * (gv[i] + h.weight_decay * wv[i]);
  return out;
}

std::vector<double> sgd_step(const std::vector<double>& w, const std::vector<double>& g,
                             const Hyperparams& h) {
  require_length(w.size(), g.size(), "sgd_step");
  std::vector<double> out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] - h.lr * (g[i] + h.weight_decay * out[i]);
  return out;
}

AdamState AdamState::zeros(std::size_t n) {
  return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

namespace detail {

void adamw_update(std::span<double> w, AdamState& state, std::span<const double> g,
                  const Hyperparams& h, bool clamp_second_moment) {
  require_length(w.size(), g.size(), "adamw_step");
  if (state.m.empty() && state.v.empty()) state = AdamState::zeros(w.size());
  require_length(state.m.size(), w.size(), "adamw_step state.m");
  require_length(state.v.size(), w.size(), "adamw_step state.v");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double m_correction = 1.0 - std::pow(h.adam_beta1, t);
  const double v_correction = 1.0 - std::pow(h.adam_beta2, t);
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = h.adam_beta1 * state.m[i] + (1.0 - h.adam_beta1) * g[i];
    double v_hat = 1.0;
    if (clamp_second_moment) {
      state.v[i] = 1.0;
    } else {
      state.v[i] = h.adam_beta2 * state.v[i] + (1.0 - h.adam_beta2) * g[i] * g[i];
      v_hat = state.v[i] / v_correction;
    }
    const double m_hat = state.m[i] / m_correction;
    w[i] -= h.lr * h.weight_decay * w[i];
    w[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.adam_eps);
  }
}

}  // namespace detail

AdamwMatrixStep adamw_step(const Matrix& w, const AdamState& state, const Matrix& g,
                           const Hyperparams& h) {
  require_same_shape(w, g, "adamw_step");
  AdamwMatrixStep out{w, state};
  detail::adamw_update(out.weights.values(), out.state, g.values(), h);
  return out;
}

VectorStep vector_param_step(const std::vector<double>& v, const AdamState& state,
                             const std::vector<double>& g, const Hyperparams& h) {
  VectorStep out{v, state};
  detail::adamw_update(out.values, out.state, g, h);
  return out;
}

}  // namespace fedmuon
