#include "fedmuon/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fedmuon/partition.hpp"

namespace fedmuon {

namespace {

struct MlpView {
  const Matrix& w1;
  const std::vector<double>& b1;
  const Matrix& w2;
  const std::vector<double>& b2;
};

MlpView view(const ParamSet& p) {
  if (p.matrices.size() != 2 || p.vectors.size() != 2) {
    throw std::invalid_argument("mlp: expected parameters w1, w2, b1, b2");
  }
  return MlpView{p.matrices[0].value, p.vectors[0].value, p.matrices[1].value, p.vectors[1].value};
}

// Logits for one sample; fills `hidden` with tanh activations.
void forward(const MlpView& m, std::span<const double> x, std::vector<double>& hidden,
             std::vector<double>& logits) {
  const std::size_t nh = m.w1.rows();
  const std::size_t nin = m.w1.cols();
  const std::size_t nc = m.w2.rows();
  if (x.size() != nin) throw std::invalid_argument("mlp: feature dimension mismatch");
  hidden.assign(nh, 0.0);
  for (std::size_t h = 0; h < nh; ++h) {
    double a = m.b1[h];
    for (std::size_t i = 0; i < nin; ++i) a += m.w1(h, i) * x[i];
    hidden[h] = std::tanh(a);
  }
  logits.assign(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    double z = m.b2[c];
    for (std::size_t h = 0; h < nh; ++h) z += m.w2(c, h) * hidden[h];
    logits[c] = z;
  }
}

// Converts logits to probabilities in place and returns log-sum-exp.
double softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return zmax + std::log(sum);
}

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw std::invalid_argument("mlp: label " + std::to_string(label) + " out of range [0, " +
                                std::to_string(classes) + ")");
  }
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> idx) {
  Dataset out;
  out.dim = data.dim;
  out.features.reserve(idx.size() * data.dim);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

}  // namespace

Dataset make_gaussian_mixture(std::size_t samples, std::size_t dim, std::size_t classes,
                              double separation, Rng& rng) {
  if (samples == 0 || dim == 0 || classes < 2 || classes > dim) {
    throw std::invalid_argument("make_gaussian_mixture: need samples > 0 and 2 <= classes <= dim");
  }
  Dataset d;
  d.dim = dim;
  d.features.resize(samples * dim);
  d.labels.resize(samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  for (std::size_t s = 0; s < samples; ++s) {
    const int label = pick(rng);
    d.labels[s] = label;
    for (std::size_t j = 0; j < dim; ++j) {
      const double mean = j == static_cast<std::size_t>(label) ? separation : 0.0;
      d.features[s * dim + j] = mean + normal(rng);
    }
  }
  return d;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path.string());
  for (std::size_t j = 0; j < data.dim; ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << data.labels[i] << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: missing header");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw std::runtime_error("load_dataset_csv: need features and a label");
  Dataset d;
  d.dim = columns - 1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col < d.dim) {
        d.features.push_back(std::stod(cell));
      } else if (col == d.dim) {
        d.labels.push_back(std::stoi(cell));
      }
      ++col;
    }
    if (col != columns) {
      throw std::runtime_error("load_dataset_csv: line " + std::to_string(lineno) + " has " +
                               std::to_string(col) + " cells, expected " + std::to_string(columns));
    }
  }
  return d;
}

ParamSet mlp_zero(const MlpShape& shape) {
  ParamSet p;
  p.add_matrix("w1", Matrix(shape.hidden, shape.input));
  p.add_matrix("w2", Matrix(shape.classes, shape.hidden));
  p.add_vector("b1", std::vector<double>(shape.hidden, 0.0));
  p.add_vector("b2", std::vector<double>(shape.classes, 0.0));
  return p;
}

ParamSet mlp_init(const MlpShape& shape, Rng& rng) {
  ParamSet p = mlp_zero(shape);
  // Glorot-uniform weights, zero biases.
  for (auto& m : p.matrices) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.value.rows() + m.value.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : m.value.values()) v = u(rng);
  }
  return p;
}

LossAndGrad mlp_forward_backward(const ParamSet& params, const Dataset& data,
                                 std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("mlp_forward_backward: empty batch");
  const MlpView m = view(params);
  const std::size_t nh = m.w1.rows();
  const std::size_t nin = m.w1.cols();
  const std::size_t nc = m.w2.rows();

  LossAndGrad out{0.0, zeros_like(params)};
  Matrix& gw1 = out.grad.matrices[0].value;
  Matrix& gw2 = out.grad.matrices[1].value;
  std::vector<double>& gb1 = out.grad.vectors[0].value;
  std::vector<double>& gb2 = out.grad.vectors[1].value;

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> hidden, probs, dhidden(nh);
  for (std::size_t idx : batch) {
    const int label = data.labels.at(idx);
    check_label(label, nc);
    auto x = data.row(idx);
    forward(m, x, hidden, probs);
    const double z_label = probs[static_cast<std::size_t>(label)];
    out.loss += (softmax_inplace(probs) - z_label) * inv_n;

    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const double dz = (probs[c] - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_n;
      gb2[c] += dz;
      for (std::size_t h = 0; h < nh; ++h) {
        gw2(c, h) += dz * hidden[h];
        dhidden[h] += dz * m.w2(c, h);
      }
    }
    for (std::size_t h = 0; h < nh; ++h) {
      const double da = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
      gb1[h] += da;
      for (std::size_t i = 0; i < nin; ++i) gw1(h, i) += da * x[i];
    }
  }
  return out;
}

double mlp_loss(const ParamSet& params, const Dataset& data, std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("mlp_loss: empty batch");
  const MlpView m = view(params);
  std::vector<double> hidden, logits;
  double acc = 0.0;
  for (std::size_t idx : batch) {
    const int label = data.labels.at(idx);
    check_label(label, m.w2.rows());
    forward(m, data.row(idx), hidden, logits);
    const double z = logits[static_cast<std::size_t>(label)];
    acc += softmax_inplace(logits) - z;
  }
  return acc / static_cast<double>(batch.size());
}

double mlp_accuracy(const ParamSet& params, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const MlpView m = view(params);
  std::vector<double> hidden, logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    forward(m, data.row(i), hidden, logits);
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

MlpTask::MlpTask(const MlpTaskOptions& opts, std::uint64_t data_seed)
    : MlpTask(opts,
              [&] {
                Rng rng = make_rng(data_seed, Stream::kData);
                return make_gaussian_mixture(opts.samples, opts.shape.input, opts.shape.classes,
                                             opts.separation, rng);
              }(),
              data_seed) {}

MlpTask::MlpTask(const MlpTaskOptions& opts, Dataset data, std::uint64_t data_seed) : opts_(opts) {
  if (data.dim != opts.shape.input) throw std::invalid_argument("MlpTask: dataset dimension mismatch");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction < 1.0)) {
    throw std::invalid_argument("MlpTask: test_fraction must be in [0, 1)");
  }
  for (int label : data.labels) check_label(label, opts.shape.classes);

  Rng split_rng = make_rng(data_seed, Stream::kData, 1);
  std::vector<std::size_t> order = iota_indices(data.size());
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_test =
      static_cast<std::size_t>(std::floor(opts.test_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<long>(n_test));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_test), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  test_ = subset(data, test_idx);
  train_ = subset(data, train_idx);
  all_train_ = iota_indices(train_.size());

  Rng part_rng = make_rng(data_seed, Stream::kPartition);
  parts_ = dirichlet_partition(train_.labels, opts.n_clients, opts.dir_alpha, part_rng);

  Rng init_rng = make_rng(data_seed, Stream::kInit);
  init_ = mlp_init(opts.shape, init_rng);
}

ParamSet MlpTask::client_gradient(std::size_t client, const ParamSet& x, Rng& rng) const {
  const auto& part = parts_.at(client);
  if (part.size() <= opts_.batch_size) return mlp_forward_backward(x, train_, part).grad;
  // Minibatch without replacement via a partial Fisher-Yates shuffle.
  std::vector<std::size_t> pool = part;
  for (std::size_t i = 0; i < opts_.batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(opts_.batch_size);
  return mlp_forward_backward(x, train_, pool).grad;
}

double MlpTask::global_loss(const ParamSet& x) const { return mlp_loss(x, train_, all_train_); }

ParamSet MlpTask::global_gradient(const ParamSet& x) const {
  return mlp_forward_backward(x, train_, all_train_).grad;
}

std::optional<double> MlpTask::test_accuracy(const ParamSet& x) const {
  return mlp_accuracy(x, test_);
}

}  // namespace fedmuon
