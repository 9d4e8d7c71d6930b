#pragma once

#include <cstddef>
#include <optional>

#include "fedmuon/param_set.hpp"
#include "fedmuon/rng.hpp"

namespace fedmuon {

/// A federated objective f = (1/N) sum_i f_i as seen by the round loop.
///
/// Implementations are immutable after construction; every method is safe to
/// call concurrently as long as each caller owns its Rng.
class FederatedTask {
 public:
  virtual ~FederatedTask() = default;

  virtual std::size_t num_clients() const = 0;
  virtual const ParamSet& initial_params() const = 0;

  /// Unbiased stochastic estimate of grad f_i(x).
  virtual ParamSet client_gradient(std::size_t client, const ParamSet& x, Rng& rng) const = 0;

  virtual double global_loss(const ParamSet& x) const = 0;
  virtual ParamSet global_gradient(const ParamSet& x) const = 0;

  /// f* when known in closed form.
  virtual std::optional<double> optimal_loss() const { return std::nullopt; }
  /// Held-out accuracy for classification tasks.
  virtual std::optional<double> test_accuracy(const ParamSet&) const { return std::nullopt; }
};

}  // namespace fedmuon
