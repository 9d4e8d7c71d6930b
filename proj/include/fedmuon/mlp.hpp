#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fedmuon/param_set.hpp"
#include "fedmuon/rng.hpp"
#include "fedmuon/task.hpp"

namespace fedmuon {

/// Labeled feature vectors, row-major.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
};

/// `classes` unit-variance Gaussian clusters in `dim` dimensions with means
/// at separation * e_k (vertices of a scaled simplex). Labels are cluster ids.
Dataset make_gaussian_mixture(std::size_t samples, std::size_t dim, std::size_t classes,
                              double separation, Rng& rng);

/// CSV with columns f0..f{dim-1},label and a header row.
void save_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset_csv(const std::filesystem::path& path);

struct MlpShape {
  std::size_t input = 32;
  std::size_t hidden = 32;
  std::size_t classes = 10;
};

/// Parameters "w1" (hidden x input), "b1", "w2" (classes x hidden), "b2".
ParamSet mlp_init(const MlpShape& shape, Rng& rng);
ParamSet mlp_zero(const MlpShape& shape);

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grad;
};

/// Mean softmax cross-entropy of a tanh MLP over `batch` with exact gradients.
/// Throws std::invalid_argument for an empty batch or an out-of-range label.
LossAndGrad mlp_forward_backward(const ParamSet& params, const Dataset& data,
                                 std::span<const std::size_t> batch);
double mlp_loss(const ParamSet& params, const Dataset& data, std::span<const std::size_t> batch);
double mlp_accuracy(const ParamSet& params, const Dataset& data);

struct MlpTaskOptions {
  std::size_t n_clients = 100;
  std::size_t samples = 5000;
  MlpShape shape;
  double separation = 3.0;
  double dir_alpha = 0.6;
  std::size_t batch_size = 50;
  double test_fraction = 0.2;
};

/// Gaussian-mixture classification split across clients by Dirichlet label skew.
class MlpTask final : public FederatedTask {
 public:
  /// `data_seed` fixes the data, the train/test split, the partition and the
  /// initial weights.
  MlpTask(const MlpTaskOptions& opts, std::uint64_t data_seed);
  MlpTask(const MlpTaskOptions& opts, Dataset data, std::uint64_t data_seed);

  const Dataset& train() const noexcept { return train_; }
  const Dataset& test() const noexcept { return test_; }
  const std::vector<std::vector<std::size_t>>& partitions() const noexcept { return parts_; }

  std::size_t num_clients() const override { return parts_.size(); }
  const ParamSet& initial_params() const override { return init_; }
  ParamSet client_gradient(std::size_t client, const ParamSet& x, Rng& rng) const override;
  double global_loss(const ParamSet& x) const override;
  ParamSet global_gradient(const ParamSet& x) const override;
  std::optional<double> test_accuracy(const ParamSet& x) const override;

 private:
  MlpTaskOptions opts_;
  Dataset train_;
  Dataset test_;
  std::vector<std::size_t> all_train_;
  std::vector<std::vector<std::size_t>> parts_;
  ParamSet init_;
};

}  // namespace fedmuon
