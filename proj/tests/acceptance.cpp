// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fedmuon/gradcheck.hpp"
#include "fedmuon/harness.hpp"
#include "fedmuon/linalg.hpp"
#include "support.hpp"

using namespace fedmuon;
namespace fs = std::filesystem;
using fedmuon::testing::median;

namespace {

constexpr double kNsMedianError = 5e-2;
constexpr double kNsBudgetSeconds = 5.0;
constexpr double kEckartYoungRel = 1e-8;
constexpr double kQuadGradRel = 1e-6;
constexpr double kMlpGradRel = 1e-3;
constexpr double kRunBudgetSeconds = 120.0;
constexpr double kSvdRatioLo = 1.0;
constexpr double kSvdRatioHi = 1.10;
constexpr double kClosedFormSlack = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

// Five-seed results for one config, cached by serialized config.
struct SeedRuns {
  std::vector<int> rounds;
  std::vector<double> final_grad_sq;
  double slowest_s = 0.0;

  double median_rounds() const { return median(std::vector<double>(rounds.begin(), rounds.end())); }
  double median_final() const { return median(final_grad_sq); }
};

const std::vector<std::uint64_t> kSeeds{42, 43, 44, 45, 46};

SeedRuns run_seeds(ExperimentConfig config, bool stop_at_threshold = false) {
  static std::map<std::string, SeedRuns> cache;
  const std::string key = serialize(config) + (stop_at_threshold ? "stop" : "");
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  SeedRuns out;
  for (std::uint64_t seed : kSeeds) {
    config.seed = seed;
    const auto t0 = Clock::now();
    const auto task = make_task(config, seed);
    RunOptions opts = config.run_options(0);
    opts.stop_at_threshold = stop_at_threshold;
    const RunSummary s = run_experiment(*task, opts);
    out.slowest_s = std::max(out.slowest_s, seconds_since(t0));
    out.rounds.push_back(s.rounds_to_threshold);
    out.final_grad_sq.push_back(s.last.grad_norm_sq());
  }
  cache.emplace(key, out);
  return out;
}

ExperimentConfig bench(Algorithm a) { return benchmark_config(a); }

ExperimentConfig bench(Algorithm a, double sigma_g) {
  ExperimentConfig c = benchmark_config(a);
  c.sigma_g = sigma_g;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string column(const fs::path& csv, std::size_t index) {
  std::ifstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= index; ++i) std::getline(ss, cell, ',');
    out += cell + '\n';
  }
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "fedmuon_acceptance") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Verdict ns_fidelity() {
  std::mt19937_64 rng(7);
  std::vector<Matrix> inputs;
  for (int i = 0; i < 100; ++i) inputs.push_back(testing::spectrum_ensemble_member(64, 0.1, 1.0, rng));
  std::vector<double> errors;
  const auto t0 = Clock::now();
  for (const Matrix& m : inputs) {
    const Matrix ns = newton_schulz(m, 5);
    const Matrix exact = orthogonalize_svd(m);
    errors.push_back(frobenius_norm(ns - exact) / frobenius_norm(exact));
  }
  const double elapsed = seconds_since(t0);
  const double med = median(errors);
  return {med <= kNsMedianError && elapsed < kNsBudgetSeconds,
          fmt("median rel error %.4g (<= %.2g), %.2fs (< %.0fs)", med, kNsMedianError, elapsed, kNsBudgetSeconds)};
}

Verdict eckart_young() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  int checks = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t rows = 4 + static_cast<std::size_t>(i % 5) * 6;
    const std::size_t cols = 4 + static_cast<std::size_t>(i % 4) * 7;
    const Matrix m = testing::gaussian_matrix(rows, cols, rng);
    const SvdFactors f = svd(m);
    const double total = frobenius_norm(m) * frobenius_norm(m);
    for (std::size_t k = 1; k <= f.sigma.size(); ++k) {
      double tail = 0.0;
      for (std::size_t j = k; j < f.sigma.size(); ++j) tail += f.sigma[j] * f.sigma[j];
      const double err = frobenius_norm(m - reconstruct(truncate_top_k(f, k)));
      // A zero tail is compared on the scale of the input instead.
      const double rel = std::abs(err * err - tail) / std::max(tail, 1e-12 * total);
      worst = std::max(worst, rel);
      ++checks;
    }
  }
  return {worst <= kEckartYoungRel, fmt("%d (matrix, k) pairs, worst rel %.3g (<= %.0e)", checks, worst, kEckartYoungRel)};
}

ParamSet perturbed(const ParamSet& base, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, scale);
  ParamSet p = base;
  for (auto& m : p.matrices)
    for (double& x : m.value.values()) x += n(rng);
  for (auto& v : p.vectors)
    for (double& x : v.value) x += n(rng);
  return p;
}

Verdict gradient_oracles() {
  std::mt19937_64 rng(5);
  double worst_quad = 0.0, worst_mlp = 0.0;
  {
    const auto task = make_task(bench(Algorithm::kFedMuon), 42);
    for (int t = 0; t < 5; ++t) {
      const ParamSet at = perturbed(task->initial_params(), 3.0, rng);
      const ParamSet fd = finite_diff_grad([&](const ParamSet& p) { return task->global_loss(p); }, at, 1e-5);
      worst_quad = std::max(worst_quad, relative_error(task->global_gradient(at), fd));
    }
  }
  {
    ExperimentConfig c;
    c.task = TaskKind::kMlp;
    c.mlp_samples = 400;
    c.clients = 10;
    const auto task = make_task(c, 42);
    for (int t = 0; t < 5; ++t) {
      const ParamSet at = perturbed(task->initial_params(), 0.3, rng);
      const ParamSet fd = finite_diff_grad([&](const ParamSet& p) { return task->global_loss(p); }, at, 1e-4);
      worst_mlp = std::max(worst_mlp, relative_error(task->global_gradient(at), fd));
    }
  }
  return {worst_quad <= kQuadGradRel && worst_mlp <= kMlpGradRel,
          fmt("quadratic worst %.3g (<= %.0e), mlp worst %.3g (<= %.0e), 5 points each", worst_quad, kQuadGradRel,
              worst_mlp, kMlpGradRel)};
}

Verdict non_iid_ordering() {
  const SeedRuns fm = run_seeds(bench(Algorithm::kFedMuon));
  const SeedRuns lm = run_seeds(bench(Algorithm::kLocalMuon));
  const SeedRuns sgd = run_seeds(bench(Algorithm::kLocalSgd));
  const double slowest = std::max({fm.slowest_s, lm.slowest_s, sgd.slowest_s});
  return {fm.median_rounds() < lm.median_rounds() && fm.median_rounds() < sgd.median_rounds() &&
              slowest < kRunBudgetSeconds,
          fmt("median rounds fedmuon %g %s, local_muon %g %s, local_sgd %g %s; slowest run %.1fs",
              fm.median_rounds(), join(fm.rounds).c_str(), lm.median_rounds(), join(lm.rounds).c_str(),
              sgd.median_rounds(), join(sgd.rounds).c_str(), slowest)};
}

Verdict heterogeneity_robustness() {
  const SeedRuns fm1 = run_seeds(bench(Algorithm::kFedMuon, 1.0));
  const SeedRuns fm4 = run_seeds(bench(Algorithm::kFedMuon, 4.0));
  const SeedRuns lm1 = run_seeds(bench(Algorithm::kLocalMuon, 1.0));
  const SeedRuns lm4 = run_seeds(bench(Algorithm::kLocalMuon, 4.0));
  const double fm_factor = fm4.median_rounds() / fm1.median_rounds();
  const double lm_factor = lm4.median_rounds() / lm1.median_rounds();
  return {lm_factor > fm_factor,
          fmt("sigma_g 1 -> 4: local_muon %g -> %g (x%.2f), fedmuon %g -> %g (x%.2f); censored at R+1 = %d",
              lm1.median_rounds(), lm4.median_rounds(), lm_factor, fm1.median_rounds(), fm4.median_rounds(),
              fm_factor, bench(Algorithm::kFedMuon).rounds + 1)};
}

Verdict linear_speedup() {
  std::vector<double> medians;
  std::string detail = "fedmuon median rounds";
  for (std::size_t s : {2, 5, 10}) {
    ExperimentConfig c = bench(Algorithm::kFedMuon);
    c.participation = static_cast<double>(s) / static_cast<double>(c.clients);
    if (c.clients_per_round() != s) return {false, "participation does not give S = " + std::to_string(s)};
    const SeedRuns r = run_seeds(c);
    medians.push_back(r.median_rounds());
    detail += fmt(" S=%zu: %g %s", s, r.median_rounds(), join(r.rounds).c_str());
  }
  return {medians[0] > medians[1] && medians[1] > medians[2], detail};
}

Verdict ablation_direction() {
  const SeedRuns full = run_seeds(bench(Algorithm::kFedMuon));
  const SeedRuns no_mbar = run_seeds(bench(Algorithm::kFedMuonNoMbar));
  const SeedRuns no_deltag = run_seeds(bench(Algorithm::kFedMuonNoDeltaG));
  return {no_mbar.median_rounds() >= full.median_rounds() && no_deltag.median_rounds() >= full.median_rounds(),
          fmt("median rounds fedmuon %g %s, no_mbar %g %s, no_deltag %g %s", full.median_rounds(),
              join(full.rounds).c_str(), no_mbar.median_rounds(), join(no_mbar.rounds).c_str(),
              no_deltag.median_rounds(), join(no_deltag.rounds).c_str())};
}

// Grid winner by (median rounds, median final squared gradient norm).
std::pair<double, SeedRuns> tuned(Algorithm a, double sigma_g) {
  std::pair<double, SeedRuns> best{0.0, {}};
  bool first = true;
  for (double lr : lr_grid(TaskKind::kQuadratic, a)) {
    ExperimentConfig c = bench(a, sigma_g);
    c.lr = lr;
    const SeedRuns r = run_seeds(c, true);
    const auto key = std::pair(r.median_rounds(), r.median_final());
    if (first || key < std::pair(best.second.median_rounds(), best.second.median_final())) best = {lr, r};
    first = false;
  }
  return best;
}

Verdict iid_sanity() {
  const auto [lm_lr, lm] = tuned(Algorithm::kLocalMuon, 0.0);
  const auto [sgd_lr, sgd] = tuned(Algorithm::kLocalSgd, 0.0);
  return {lm.median_rounds() <= sgd.median_rounds(),
          fmt("sigma_g=0, tuned: local_muon lr %g -> %g %s, local_sgd lr %g -> %g %s", lm_lr, lm.median_rounds(),
              join(lm.rounds).c_str(), sgd_lr, sgd.median_rounds(), join(sgd.rounds).c_str())};
}

Verdict communication_ledger() {
  bool ok = true;
  std::string detail;
  for (std::size_t n : {64, 100, 128, 256}) {
    TempDir dir;
    ExperimentConfig c = bench(Algorithm::kFedMuon);
    c.quad_rows = n;
    c.quad_cols = n;
    c.rounds = n > 100 ? 1 : 3;
    const auto rows = cmd_commtable(c, dir.path, 0);
    ok = ok && rows.size() == 3;
    detail += fmt("%s%zux%zu:", detail.empty() ? "" : "; ", n, n);
    for (const CommRow& r : rows) {
      bool row_ok = std::abs(r.measured_ratio - r.closed_form_ratio) <= kClosedFormSlack;
      if (r.algorithm == Algorithm::kLocalMuon) row_ok = row_ok && r.measured_ratio == 1.0;
      if (r.algorithm == Algorithm::kFedMuon) row_ok = row_ok && r.measured_ratio == 2.0;
      if (r.algorithm == Algorithm::kFedMuonSvd)
        row_ok = row_ok && r.measured_ratio >= kSvdRatioLo && r.measured_ratio <= kSvdRatioHi;
      ok = ok && row_ok;
      detail += fmt(" %s %.6g%s", r.strategy.c_str(), r.measured_ratio, row_ok ? "" : " (out)");
    }
  }
  return {ok, detail};
}

Verdict equivalence_replays() {
  TempDir dir;
  ExperimentConfig c = bench(Algorithm::kLocalMuon);
  c.rounds = 200;
  c.lr = 3e-3;
  cmd_run(c, dir.path / "local_muon.csv");
  c.algorithm = Algorithm::kFedMuonNoMbar;
  c.alpha = 0.0;
  cmd_run(c, dir.path / "no_mbar.csv");
  const bool muon_same = column(dir.path / "local_muon.csv", 1) == column(dir.path / "no_mbar.csv", 1);

  ExperimentConfig s = bench(Algorithm::kLocalSgd);
  s.rounds = 200;
  s.lr = 0.03;
  s.weight_decay = 0.01;
  cmd_run(s, dir.path / "local_sgd.csv");
  s.algorithm = Algorithm::kFedMuon;
  s.alpha = 0.0;
  s.beta = 0.0;
  s.orthogonalizer = Orthogonalizer::kIdentity;
  cmd_run(s, dir.path / "reduced.csv");
  const bool sgd_same = column(dir.path / "local_sgd.csv", 1) == column(dir.path / "reduced.csv", 1);

  return {muon_same && sgd_same, fmt("local_muon vs no_mbar(alpha=0): %s; local_sgd vs fedmuon(beta=0, identity): %s",
                                     muon_same ? "identical" : "differ", sgd_same ? "identical" : "differ")};
}

Verdict determinism() {
  TempDir dir;
  std::vector<ExperimentConfig> configs;
  for (Algorithm a : {Algorithm::kFedMuon, Algorithm::kFedMuonSvd, Algorithm::kLocalAdamw}) {
    ExperimentConfig c = bench(a);
    c.rounds = 100;
    configs.push_back(c);
  }
  ExperimentConfig mlp;
  mlp.task = TaskKind::kMlp;
  mlp.rounds = 10;
  configs.push_back(mlp);

  int identical = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::vector<std::string> outputs;
    for (const char* cap : {"1", "4"}) {
      setenv("FEDMUON_THREADS", cap, 1);
      const fs::path csv = dir.path / ("run" + std::to_string(i) + "_" + cap + ".csv");
      cmd_run(configs[i], csv, threads_from_env());
      outputs.push_back(slurp(csv) + slurp(fs::path(csv.string() + ".meta")));
    }
    if (outputs[0] == outputs[1] && !outputs[0].empty()) ++identical;
  }
  unsetenv("FEDMUON_THREADS");
  const int total = static_cast<int>(configs.size());
  return {identical == total, fmt("%d/%d configs byte-identical under FEDMUON_THREADS=1 and 4", identical, total)};
}

}  // namespace

int main() {
  report(1, "orthogonalization fidelity", ns_fidelity);
  report(2, "Eckart-Young exactness", eckart_young);
  report(3, "gradient oracles", gradient_oracles);
  report(4, "non-IID ordering", non_iid_ordering);
  report(5, "heterogeneity robustness", heterogeneity_robustness);
  report(6, "linear speedup trend", linear_speedup);
  report(7, "ablation direction", ablation_direction);
  report(8, "IID sanity", iid_sanity);
  report(9, "communication ledger", communication_ledger);
  report(10, "equivalence replays", equivalence_replays);
  report(11, "determinism", determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
