#include "fedmuon/gradcheck.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedmuon {

ParamSet finite_diff_grad(const Objective& objective, const ParamSet& at, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
  ParamSet probe = at;
  ParamSet grad = zeros_like(at);
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + step;
    const double up = objective(probe);
    slot = saved - step;
    const double down = objective(probe);
    slot = saved;
    return (up - down) / (2.0 * step);
  };
  for (std::size_t m = 0; m < probe.matrices.size(); ++m) {
    auto values = probe.matrices[m].value.values();
    auto out = grad.matrices[m].value.values();
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = central(values[i]);
  }
  for (std::size_t v = 0; v < probe.vectors.size(); ++v) {
    auto& values = probe.vectors[v].value;
    auto& out = grad.vectors[v].value;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = central(values[i]);
  }
  return grad;
}

double relative_error(const ParamSet& a, const ParamSet& b) {
  return norm(a - b) / std::max(norm(b), 1e-300);
}

}  // namespace fedmuon
