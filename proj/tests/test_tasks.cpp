#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>

#include "fedmuon/gradcheck.hpp"
#include "fedmuon/mlp.hpp"
#include "fedmuon/partition.hpp"
#include "fedmuon/quadratic.hpp"
#include "support.hpp"

using namespace fedmuon;
using namespace fedmuon::testing;

namespace {

QuadraticFamily family_for(std::uint64_t seed, double sigma_g, double sigma_l = 0.0, bool shared = true,
                           std::size_t n = 20) {
  QuadraticFamilyOptions o;
  o.n_clients = n;
  o.rows = 6;
  o.cols = 4;
  o.sigma_g = sigma_g;
  o.sigma_l = sigma_l;
  o.condition = 50.0;
  o.shared_hessian = shared;
  Rng rng(seed);
  return make_quadratic_family(o, rng);
}

ParamSet wrap(const Matrix& w) {
  ParamSet p;
  p.add_matrix("w", w);
  return p;
}

Matrix random_like(const Matrix& w, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix out(w.rows(), w.cols());
  for (double& v : out.values()) v = n(rng);
  return out;
}

Dataset tiny_dataset() {
  Rng rng(7);
  return make_gaussian_mixture(40, 5, 3, 2.0, rng);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

}  // namespace

TEST_CASE("quadratic family construction") {
  SUBCASE("sigma_g = 0 makes every client identical to the global problem") {
    const QuadraticFamily f = family_for(1, 0.0);
    for (const auto& c : f.clients) {
      CHECK(relative_frobenius(c.optimum, f.w_star) < 1e-12);
      CHECK(naive_frobenius(full_grad(c, f.w_star)) < 1e-10);
    }
  }
  SUBCASE("one client: W* is the pseudo-inverse solution") {
    const QuadraticFamily f = family_for(2, 3.0, 0.0, true, 1);
    const auto& c = f.clients.front();
    CHECK(relative_frobenius(naive_matmul(naive_inverse(c.b), c.c), f.w_star) < 1e-9);
  }
  SUBCASE("dissimilarity at W* is calibrated to sigma_g") {
    for (bool shared : {true, false}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const QuadraticFamily f = family_for(seed, 4.0, 0.0, shared);
        CHECK(gradient_dissimilarity(f, f.w_star) == doctest::Approx(4.0).epsilon(0.10));
      }
    }
  }
  SUBCASE("measured spread is increasing in sigma_g") {
    double previous = -1.0;
    for (double sg : {0.0, 1.0, 2.0, 4.0}) {
      std::vector<double> spread;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const QuadraticFamily f = family_for(seed, sg);
        spread.push_back(gradient_dissimilarity(f, f.w_star));
      }
      CHECK(median(spread) > previous);
      previous = median(spread);
    }
  }
  SUBCASE("W* is a stationary point of the average, also with distinct Hessians") {
    for (bool shared : {true, false}) {
      const QuadraticFamily f = family_for(9, 4.0, 0.0, shared);
      CHECK(naive_frobenius(f.full_grad(f.w_star)) < 1e-10);
      CHECK(f.f_star == doctest::Approx(f.loss(f.w_star)));
    }
  }
  SUBCASE("smoothness constant is sigma_max(B_i)^2") {
    const QuadraticFamily f = family_for(4, 1.0);
    for (const auto& c : f.clients) {
      const double s = svd(c.b).sigma.front();
      CHECK(c.smoothness == doctest::Approx(s * s).epsilon(1e-10));
    }
  }
  SUBCASE("degenerate dimensions") {
    QuadraticFamilyOptions o;
    o.rows = 0;
    Rng rng(0);
    CHECK_THROWS_AS(make_quadratic_family(o, rng), std::invalid_argument);
    o = QuadraticFamilyOptions{};
    o.n_clients = 0;
    CHECK_THROWS_AS(make_quadratic_family(o, rng), std::invalid_argument);
    o = QuadraticFamilyOptions{};
    o.sigma_g = -1.0;
    CHECK_THROWS_AS(make_quadratic_family(o, rng), std::invalid_argument);
  }
}

TEST_CASE("quadratic gradients") {
  const QuadraticFamily f = family_for(11, 2.0, 1.0);
  Rng rng(5);
  SUBCASE("zero at each client's optimum") {
    for (const auto& c : f.clients) CHECK(naive_frobenius(full_grad(c, c.optimum)) < 1e-10);
  }
  SUBCASE("sigma_l = 0 makes the stochastic gradient exact") {
    QuadraticClient c = f.clients.front();
    c.noise_sigma = 0.0;
    const Matrix w = random_like(f.w_star, rng);
    CHECK(stochastic_grad(c, w, rng) == full_grad(c, w));
  }
  SUBCASE("noise has the requested energy and averages out") {
    const auto& c = f.clients.front();
    const Matrix w = random_like(f.w_star, rng);
    const Matrix exact = full_grad(c, w);
    Matrix mean(w.rows(), w.cols());
    double energy = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Matrix g = stochastic_grad(c, w, rng);
      g -= exact;
      energy += naive_frobenius(g) * naive_frobenius(g);
      mean += g;
    }
    mean *= 1.0 / n;
    CHECK(naive_frobenius(mean) <= 3.0 * 1.0 / 100.0);
    CHECK(energy / n == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("analytic gradient matches central differences") {
    const auto& c = f.clients[3];
    for (int t = 0; t < 5; ++t) {
      const ParamSet at = wrap(random_like(f.w_star, rng, 3.0));
      const ParamSet fd = finite_diff_grad([&](const ParamSet& p) { return loss(c, p.matrices[0].value); }, at, 1e-5);
      CHECK(relative_error(wrap(full_grad(c, at.matrices[0].value)), fd) <= 1e-6);
    }
  }
  SUBCASE("smoothness certificate over random pairs") {
    for (int t = 0; t < 1000; ++t) {
      const auto& c = f.clients[static_cast<std::size_t>(t) % f.clients.size()];
      const Matrix a = random_like(f.w_star, rng, 2.0);
      const Matrix b = random_like(f.w_star, rng, 2.0);
      const double lhs = naive_frobenius(full_grad(c, a) - full_grad(c, b));
      CHECK(lhs <= c.smoothness * naive_frobenius(a - b) * (1 + 1e-12));
    }
  }
  SUBCASE("W* minimizes the average loss") {
    for (int t = 0; t < 1000; ++t) {
      CHECK(f.loss(f.w_star) <= f.loss(f.w_star + random_like(f.w_star, rng, 0.1)));
    }
  }
  SUBCASE("non-finite input") {
    Matrix w = f.w_star;
    w(0, 0) = std::nan("");
    CHECK_THROWS_AS(full_grad(f.clients.front(), w), std::invalid_argument);
    CHECK_THROWS_AS(loss(f.clients.front(), w), std::invalid_argument);
  }
}

TEST_CASE("finite_diff_grad on a linear objective is exact") {
  ParamSet at;
  at.add_matrix("a", Matrix{{1.0, -2.0}, {0.5, 3.0}});
  at.add_vector("b", {4.0, -1.0, 2.0});
  const std::vector<double> coef{0.5, -1.0, 2.0, 0.25, 3.0, -0.75, 1.5};
  const Objective linear = [&](const ParamSet& p) {
    double acc = 0.0;
    std::size_t i = 0;
    for (double v : p.matrices[0].value.values()) acc += coef[i++] * v;
    for (double v : p.vectors[0].value) acc += coef[i++] * v;
    return acc;
  };
  for (double step : {1e-3, 0.5, 10.0}) {
    const ParamSet g = finite_diff_grad(linear, at, step);
    CHECK(g.matrices[0].value(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(g.vectors[0].value[2] == doctest::Approx(1.5).epsilon(1e-9));
  }
}

TEST_CASE("mlp forward and backward") {
  const Dataset data = tiny_dataset();
  const MlpShape shape{5, 7, 3};
  SUBCASE("zero weights give uniform softmax") {
    const std::vector<std::size_t> one{0};
    CHECK(mlp_loss(mlp_zero(shape), data, one) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("duplicated batch is the same as the batch") {
    Rng rng(1);
    const ParamSet p = mlp_init(shape, rng);
    const std::vector<std::size_t> batch{1, 4, 9};
    const std::vector<std::size_t> twice{1, 4, 9, 1, 4, 9};
    const LossAndGrad a = mlp_forward_backward(p, data, batch);
    const LossAndGrad b = mlp_forward_backward(p, data, twice);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
    CHECK(relative_error(b.grad, a.grad) < 1e-14);
  }
  SUBCASE("gradients match central differences") {
    Rng rng(2);
    const std::vector<std::size_t> batch = iota(data.size());
    for (int t = 0; t < 5; ++t) {
      const ParamSet p = mlp_init(shape, rng);
      const ParamSet fd = finite_diff_grad([&](const ParamSet& q) { return mlp_loss(q, data, batch); }, p, 1e-4);
      CHECK(relative_error(mlp_forward_backward(p, data, batch).grad, fd) <= 1e-3);
    }
  }
  SUBCASE("errors") {
    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(mlp_forward_backward(mlp_zero(shape), data, none), std::invalid_argument);
    Dataset bad = data;
    bad.labels[0] = 3;
    const std::vector<std::size_t> first{0};
    CHECK_THROWS_AS(mlp_forward_backward(mlp_zero(shape), bad, first), std::invalid_argument);
    bad.labels[0] = -1;
    CHECK_THROWS_AS(mlp_forward_backward(mlp_zero(shape), bad, first), std::invalid_argument);
  }
}

TEST_CASE("mlp task") {
  MlpTaskOptions o;
  o.n_clients = 10;
  o.samples = 600;
  o.shape = MlpShape{32, 8, 10};
  const MlpTask task(o, 42);
  SUBCASE("split and partition") {
    CHECK(task.test().size() == 120);
    CHECK(task.train().size() == 480);
    std::vector<int> seen(task.train().size(), 0);
    for (const auto& part : task.partitions()) {
      CHECK_FALSE(part.empty());
      for (std::size_t i : part) ++seen[i];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
  SUBCASE("same seed, same task") {
    const MlpTask again(o, 42);
    CHECK(again.initial_params() == task.initial_params());
    CHECK(again.partitions() == task.partitions());
  }
  SUBCASE("global gradient matches central differences") {
    const ParamSet& p = task.initial_params();
    const ParamSet fd = finite_diff_grad([&](const ParamSet& q) { return task.global_loss(q); }, p, 1e-4);
    CHECK(relative_error(task.global_gradient(p), fd) <= 1e-3);
  }
  SUBCASE("accuracy is reported and lies in [0, 1]") {
    const auto acc = task.test_accuracy(task.initial_params());
    REQUIRE(acc.has_value());
    CHECK(*acc >= 0.0);
    CHECK(*acc <= 1.0);
  }
}

TEST_CASE("dataset CSV round trip") {
  const Dataset data = tiny_dataset();
  const auto path = std::filesystem::temp_directory_path() / "fedmuon_dataset_roundtrip.csv";
  save_dataset_csv(path, data);
  const Dataset back = load_dataset_csv(path);
  std::filesystem::remove(path);
  CHECK(back.dim == data.dim);
  CHECK(back.labels == data.labels);
  CHECK(back.features == data.features);
}

TEST_CASE("dirichlet_partition") {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c) labels.insert(labels.end(), 1000, c);

  SUBCASE("huge concentration is nearly uniform") {
    Rng rng(1);
    const auto parts = dirichlet_partition(labels, 10, 1e6, rng);
    for (const auto& part : parts) {
      std::vector<double> counts(10, 0.0);
      for (std::size_t i : part) counts[static_cast<std::size_t>(labels[i])] += 1.0;
      for (double c : counts) CHECK(std::abs(c / static_cast<double>(part.size()) - 0.1) <= 0.005);
    }
  }
  SUBCASE("single client receives everything") {
    Rng rng(2);
    const auto parts = dirichlet_partition(labels, 1, 0.5, rng);
    REQUIRE(parts.size() == 1);
    CHECK(parts[0] == iota(labels.size()));
  }
  SUBCASE("disjoint, covering, non-empty") {
    for (double conc : {0.01, 0.1, 0.6, 10.0}) {
      Rng rng(3);
      const auto parts = dirichlet_partition(labels, 100, conc, rng);
      std::vector<int> seen(labels.size(), 0);
      for (const auto& part : parts) {
        CHECK_FALSE(part.empty());
        CHECK(std::is_sorted(part.begin(), part.end()));
        for (std::size_t i : part) ++seen[i];
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
  }
  SUBCASE("smaller concentration gives lower label entropy") {
    auto median_entropy = [&](double conc) {
      std::vector<double> per_seed;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto parts = dirichlet_partition(labels, 100, conc, rng);
        std::vector<double> h;
        for (const auto& part : parts) h.push_back(label_entropy(labels, part, 10));
        per_seed.push_back(median(h));
      }
      return median(per_seed);
    };
    CHECK(median_entropy(0.1) < median_entropy(0.6));
  }
  SUBCASE("errors") {
    Rng rng(4);
    const std::vector<int> few{0, 1, 2};
    CHECK_THROWS_AS(dirichlet_partition(few, 4, 0.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(dirichlet_partition(labels, 10, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(dirichlet_partition(labels, 0, 0.5, rng), std::invalid_argument);
  }
}
