#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmuon/federation.hpp"
#include "fedmuon/task.hpp"

namespace fedmuon {

enum class TaskKind { kQuadratic, kMlp };

std::string_view to_string(TaskKind t);
TaskKind parse_task_kind(std::string_view name);

/// Raised for malformed, unknown, missing or out-of-range configuration
/// entries. `key()` is the offending key path, e.g. "config.alpha".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Fully resolved experiment description. Fields left empty resolve to
/// task-dependent defaults (see effective_lr / effective_cadence).
struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kFedMuon;
  TaskKind task = TaskKind::kQuadratic;

  std::size_t clients = 100;
  double participation = 0.1;
  int local_steps = 50;
  int rounds = 300;
  std::size_t batch_size = 50;
  double dir_alpha = 0.6;
  double sigma_g = 0.0;
  double sigma_l = 0.0;

  // Quadratic family.
  std::size_t quad_rows = 8;
  std::size_t quad_cols = 8;
  double quad_condition = 100.0;
  double quad_smoothness = 1.0;
  double quad_init_distance = 4.0;
  bool quad_shared_hessian = true;

  // MLP task.
  std::size_t mlp_samples = 5000;
  std::size_t mlp_hidden = 32;
  double mlp_separation = 3.0;

  std::optional<double> lr;
  double beta = 0.98;
  double alpha = 0.5;
  double weight_decay = 0.01;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  Orthogonalizer orthogonalizer = Orthogonalizer::kNewtonSchulz;
  MomentumForm momentum_form = MomentumForm::kAccumulate;
  int ns_iters = 5;

  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds{42, 43, 44, 45, 46};
  double threshold = 1e-3;
  std::optional<int> cadence;
  std::string out = "run.csv";

  std::size_t clients_per_round() const;
  double effective_lr() const;
  int effective_cadence() const;

  Hyperparams hyperparams() const;
  RunOptions run_options(unsigned threads = 1) const;

  /// Throws ConfigError on the first out-of-range field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Learning rates searched for a task/algorithm pair. Quadratic grids are
/// scored on the heterogeneous benchmark (see benchmark_config), MLP grids on
/// final test accuracy after 100 rounds.
std::vector<double> lr_grid(TaskKind task, Algorithm algorithm);

/// Grid winner for a task/algorithm pair; every entry is in lr_grid.
double default_lr(TaskKind task, Algorithm algorithm);

/// Heterogeneous quadratic benchmark: N=20, S=5, K=20, sigma_g=4, sigma_l=1,
/// condition 1000, R=4000 under a cosine schedule, no weight decay.
ExperimentConfig benchmark_config(Algorithm algorithm);

using ConfigEntries = std::map<std::string, std::string>;

/// Parses flat `key = value` text. Blank lines and lines starting with '#'
/// are ignored. Duplicate keys are errors.
ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Applies `file` entries, then `overrides`, on top of the defaults. The
/// "algorithm" key is required.
ExperimentConfig parse_config(const ConfigEntries& file, const ConfigEntries& overrides = {});

/// Every key in a fixed order with resolved values; parse_config of the
/// result reproduces the config.
std::string serialize(const ExperimentConfig& config);

/// Builds the task for one seed. Data, partition and initial weights come
/// from streams derived from `seed`.
std::unique_ptr<FederatedTask> make_task(const ExperimentConfig& config, std::uint64_t seed);

/// Worker threads from FEDMUON_THREADS (unset means 1, 0 means auto).
unsigned threads_from_env();

/// Writes `<csv>.meta`: schema version and the serialized config.
void write_meta(const std::filesystem::path& csv, const ExperimentConfig& config);

struct RunResult {
  std::uint64_t seed = 0;
  int rounds_to_threshold = 0;
  bool reached_threshold = false;
  MetricsRecord last;
  std::size_t uplink = 0;
  std::size_t baseline_uplink = 0;
};

/// One run for config.seed, streamed to `csv` (plus sidecar).
RunResult cmd_run(const ExperimentConfig& config, const std::filesystem::path& csv,
                  unsigned threads = 1);

/// Runs without writing anything.
RunResult run_in_memory(const ExperimentConfig& config, unsigned threads = 1);

struct CellSummary {
  std::string label;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<RunResult> runs;

  double median_rounds() const;
  int censored() const;
  double median_final_grad_norm_sq() const;
  std::optional<double> median_final_test_acc() const;
};

/// Grid over alpha x beta and config.seeds. Writes one CSV per cell and seed
/// into `out_dir` plus `summary_sweep.csv`, ranked by median
/// rounds-to-threshold (quadratic) or final test accuracy (mlp).
std::vector<CellSummary> cmd_sweep(const ExperimentConfig& config, const std::vector<double>& alphas,
                                   const std::vector<double>& betas,
                                   const std::filesystem::path& out_dir, unsigned threads = 1);

/// fedmuon, fedmuon_no_mbar and fedmuon_no_deltag on the same seeds;
/// writes per-run CSVs and `summary_ablate.csv`.
std::vector<CellSummary> cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                    unsigned threads = 1);

struct CommRow {
  std::string strategy;
  Algorithm algorithm = Algorithm::kLocalMuon;
  std::size_t uplink = 0;
  std::size_t baseline_uplink = 0;
  double measured_ratio = 0.0;
  double closed_form_ratio = 0.0;
};

/// Uplink ratio predicted from the payload formulas for parameters `x0`.
double closed_form_uplink_ratio(const ParamSet& x0, Algorithm algorithm);

/// NoAgg (local_muon), Agg-m (fedmuon), Agg-m-SVD (fedmuon_svd) on config.seed;
/// writes per-run CSVs and `summary_commtable.csv`.
std::vector<CommRow> cmd_commtable(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   unsigned threads = 1);

}  // namespace fedmuon
