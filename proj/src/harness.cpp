#include "fedmuon/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedmuon/metrics.hpp"
#include "fedmuon/mlp.hpp"
#include "fedmuon/quadratic.hpp"

namespace fedmuon {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string key_path(const std::string& key) { return "config." + key; }

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key_path(key), "expected " + std::string(expected) + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(key, value, "a finite number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a non-negative integer");
  return out;
}

int to_int(const std::string& key, const std::string& value) {
  int out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::uint64_t> to_uint_list(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of seeds");
  return out;
}

std::string_view to_string(Orthogonalizer o) {
  switch (o) {
    case Orthogonalizer::kNewtonSchulz: return "newton_schulz";
    case Orthogonalizer::kSvd: return "svd";
    case Orthogonalizer::kIdentity: return "identity";
  }
  return "newton_schulz";
}

std::string_view to_string(MomentumForm f) {
  return f == MomentumForm::kInterpolate ? "interpolate" : "accumulate";
}

template <class Parse>
auto parse_enum(const std::string& key, const std::string& value, Parse parse) {
  try {
    return parse(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key_path(key), e.what());
  }
}

Orthogonalizer parse_orthogonalizer(std::string_view v) {
  if (v == "newton_schulz") return Orthogonalizer::kNewtonSchulz;
  if (v == "svd") return Orthogonalizer::kSvd;
  if (v == "identity") return Orthogonalizer::kIdentity;
  throw std::invalid_argument("unknown orthogonalizer '" + std::string(v) + "'");
}

MomentumForm parse_momentum_form(std::string_view v) {
  if (v == "accumulate") return MomentumForm::kAccumulate;
  if (v == "interpolate") return MomentumForm::kInterpolate;
  throw std::invalid_argument("unknown momentum form '" + std::string(v) + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
};

std::string fmt(double v) { return format_double(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"algorithm",
       [](auto& c, auto& k, auto& v) { c.algorithm = parse_enum(k, v, parse_algorithm); },
       [](const auto& c) { return std::string(to_string(c.algorithm)); }},
      {"task", [](auto& c, auto& k, auto& v) { c.task = parse_enum(k, v, parse_task_kind); },
       [](const auto& c) { return std::string(to_string(c.task)); }},
      {"clients", [](auto& c, auto& k, auto& v) { c.clients = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.clients); }},
      {"participation", [](auto& c, auto& k, auto& v) { c.participation = to_double(k, v); },
       [](const auto& c) { return fmt(c.participation); }},
      {"local_steps", [](auto& c, auto& k, auto& v) { c.local_steps = to_int(k, v); },
       [](const auto& c) { return std::to_string(c.local_steps); }},
      {"rounds", [](auto& c, auto& k, auto& v) { c.rounds = to_int(k, v); },
       [](const auto& c) { return std::to_string(c.rounds); }},
      {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.batch_size); }},
      {"dir_alpha", [](auto& c, auto& k, auto& v) { c.dir_alpha = to_double(k, v); },
       [](const auto& c) { return fmt(c.dir_alpha); }},
      {"sigma_g", [](auto& c, auto& k, auto& v) { c.sigma_g = to_double(k, v); },
       [](const auto& c) { return fmt(c.sigma_g); }},
      {"sigma_l", [](auto& c, auto& k, auto& v) { c.sigma_l = to_double(k, v); },
       [](const auto& c) { return fmt(c.sigma_l); }},
      {"quad_rows", [](auto& c, auto& k, auto& v) { c.quad_rows = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.quad_rows); }},
      {"quad_cols", [](auto& c, auto& k, auto& v) { c.quad_cols = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.quad_cols); }},
      {"quad_condition", [](auto& c, auto& k, auto& v) { c.quad_condition = to_double(k, v); },
       [](const auto& c) { return fmt(c.quad_condition); }},
      {"quad_smoothness", [](auto& c, auto& k, auto& v) { c.quad_smoothness = to_double(k, v); },
       [](const auto& c) { return fmt(c.quad_smoothness); }},
      {"quad_init_distance", [](auto& c, auto& k, auto& v) { c.quad_init_distance = to_double(k, v); },
       [](const auto& c) { return fmt(c.quad_init_distance); }},
      {"quad_shared_hessian", [](auto& c, auto& k, auto& v) { c.quad_shared_hessian = to_bool(k, v); },
       [](const auto& c) { return std::string(c.quad_shared_hessian ? "true" : "false"); }},
      {"mlp_samples", [](auto& c, auto& k, auto& v) { c.mlp_samples = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.mlp_samples); }},
      {"mlp_hidden", [](auto& c, auto& k, auto& v) { c.mlp_hidden = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.mlp_hidden); }},
      {"mlp_separation", [](auto& c, auto& k, auto& v) { c.mlp_separation = to_double(k, v); },
       [](const auto& c) { return fmt(c.mlp_separation); }},
      {"lr", [](auto& c, auto& k, auto& v) { c.lr = to_double(k, v); },
       [](const auto& c) { return fmt(c.effective_lr()); }},
      {"beta", [](auto& c, auto& k, auto& v) { c.beta = to_double(k, v); },
       [](const auto& c) { return fmt(c.beta); }},
      {"alpha", [](auto& c, auto& k, auto& v) { c.alpha = to_double(k, v); },
       [](const auto& c) { return fmt(c.alpha); }},
      {"weight_decay", [](auto& c, auto& k, auto& v) { c.weight_decay = to_double(k, v); },
       [](const auto& c) { return fmt(c.weight_decay); }},
      {"lr_schedule",
       [](auto& c, auto& k, auto& v) { c.lr_schedule = parse_enum(k, v, parse_lr_schedule); },
       [](const auto& c) { return std::string(to_string(c.lr_schedule)); }},
      {"orthogonalizer",
       [](auto& c, auto& k, auto& v) { c.orthogonalizer = parse_enum(k, v, parse_orthogonalizer); },
       [](const auto& c) { return std::string(to_string(c.orthogonalizer)); }},
      {"momentum_form",
       [](auto& c, auto& k, auto& v) { c.momentum_form = parse_enum(k, v, parse_momentum_form); },
       [](const auto& c) { return std::string(to_string(c.momentum_form)); }},
      {"ns_iters", [](auto& c, auto& k, auto& v) { c.ns_iters = to_int(k, v); },
       [](const auto& c) { return std::to_string(c.ns_iters); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_uint(k, v); },
       [](const auto& c) { return std::to_string(c.seed); }},
      {"seeds", [](auto& c, auto& k, auto& v) { c.seeds = to_uint_list(k, v); },
       [](const auto& c) {
         std::string out;
         for (std::size_t i = 0; i < c.seeds.size(); ++i) {
           if (i > 0) out += ',';
           out += std::to_string(c.seeds[i]);
         }
         return out;
       }},
      {"threshold", [](auto& c, auto& k, auto& v) { c.threshold = to_double(k, v); },
       [](const auto& c) { return fmt(c.threshold); }},
      {"cadence", [](auto& c, auto& k, auto& v) { c.cadence = to_int(k, v); },
       [](const auto& c) { return std::to_string(c.effective_cadence()); }},
      {"out", [](auto& c, auto&, auto& v) { c.out = v; }, [](const auto& c) { return c.out; }},
  };
  return table;
}

void apply(ExperimentConfig& config, const ConfigEntries& entries) {
  for (const auto& [key, value] : entries) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(key_path(key), "unknown key");
    it->set(config, key, value);
  }
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key_path(key), message);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string cell_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

RunResult execute(const ExperimentConfig& config, std::ostream* csv, unsigned threads) {
  config.validate();
  auto task = make_task(config, config.seed);
  std::optional<MetricsCsvWriter> writer;
  if (csv != nullptr) writer.emplace(*csv);
  MetricsSink sink;
  if (writer) sink = [&](const MetricsRecord& r) { writer->write(r); };
  const RunSummary summary = run_experiment(*task, config.run_options(threads), sink);
  RunResult result;
  result.seed = config.seed;
  result.rounds_to_threshold = summary.rounds_to_threshold;
  result.reached_threshold = summary.reached_threshold;
  result.last = summary.last;
  result.uplink = summary.final_state.ledger.total_uplink();
  result.baseline_uplink = summary.final_state.ledger.total_baseline_uplink();
  return result;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

const char* const kSummaryHeader =
    "label,alpha,beta,seeds,median_rounds_to_threshold,censored,median_final_grad_norm_sq,"
    "median_final_test_acc,rank";

void write_summary(const std::filesystem::path& path, const std::vector<CellSummary>& cells,
                   const std::vector<std::size_t>& order) {
  std::ofstream out = open_output(path);
  out << kSummaryHeader << '\n';
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const CellSummary& c = cells[order[rank]];
    const auto acc = c.median_final_test_acc();
    out << c.label << ',' << format_double(c.alpha) << ',' << format_double(c.beta) << ','
        << c.runs.size() << ',' << format_double(c.median_rounds()) << ',' << c.censored() << ','
        << format_double(c.median_final_grad_norm_sq()) << ',' << (acc ? format_double(*acc) : "")
        << ',' << rank + 1 << '\n';
  }
}

std::vector<std::size_t> rank_cells(const std::vector<CellSummary>& cells, TaskKind task) {
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (task == TaskKind::kMlp) {
      return cells[a].median_final_test_acc().value_or(0.0) > cells[b].median_final_test_acc().value_or(0.0);
    }
    return cells[a].median_rounds() < cells[b].median_rounds();
  });
  return order;
}

CellSummary run_cell(ExperimentConfig config, const std::string& label, const std::filesystem::path& out_dir,
                     unsigned threads) {
  CellSummary cell{label, config.alpha, config.beta, {}};
  for (std::uint64_t seed : config.seeds) {
    config.seed = seed;
    const auto path = out_dir / (label + "_seed" + std::to_string(seed) + ".csv");
    cell.runs.push_back(cmd_run(config, path, threads));
  }
  return cell;
}

}  // namespace

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}

std::string_view to_string(TaskKind t) { return t == TaskKind::kMlp ? "mlp" : "quadratic"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "quadratic") return TaskKind::kQuadratic;
  if (name == "mlp") return TaskKind::kMlp;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

std::vector<double> lr_grid(TaskKind task, Algorithm algorithm) {
  if (task == TaskKind::kQuadratic) {
    switch (algorithm) {
      case Algorithm::kLocalSgd: return {0.03, 0.1, 0.3, 1.0};
      case Algorithm::kLocalAdamw: return {1e-3, 3e-3, 1e-2, 3e-2};
      default: return {1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
    }
  }
  switch (algorithm) {
    case Algorithm::kLocalSgd: return {0.01, 0.03, 0.1, 0.3};
    case Algorithm::kLocalAdamw: return {3e-4, 1e-3, 3e-3, 1e-2};
    default: return {3e-4, 1e-3, 3e-3, 1e-2, 2e-2, 5e-2};
  }
}

double default_lr(TaskKind task, Algorithm algorithm) {
  if (task == TaskKind::kQuadratic) {
    switch (algorithm) {
      case Algorithm::kLocalSgd: return 0.03;
      case Algorithm::kLocalAdamw: return 1e-3;
      case Algorithm::kLocalMuon: return 3e-3;
      default: return 3e-4;
    }
  }
  switch (algorithm) {
    case Algorithm::kLocalSgd: return 0.03;
    default: return 1e-3;
  }
}

ExperimentConfig benchmark_config(Algorithm algorithm) {
  ExperimentConfig c;
  c.algorithm = algorithm;
  c.clients = 20;
  c.participation = 0.25;
  c.local_steps = 20;
  c.rounds = 4000;
  c.sigma_g = 4.0;
  c.sigma_l = 1.0;
  c.quad_condition = 1000.0;
  c.weight_decay = 0.0;
  c.lr_schedule = LrSchedule::kCosine;
  return c;
}

std::size_t ExperimentConfig::clients_per_round() const {
  const auto s = static_cast<long>(std::lround(participation * static_cast<double>(clients)));
  return static_cast<std::size_t>(std::max(1L, s));
}

double ExperimentConfig::effective_lr() const { return lr.value_or(default_lr(task, algorithm)); }

int ExperimentConfig::effective_cadence() const {
  return cadence.value_or(task == TaskKind::kMlp ? 5 : 1);
}

Hyperparams ExperimentConfig::hyperparams() const {
  Hyperparams h;
  h.lr = effective_lr();
  h.beta = beta;
  h.alpha = alpha;
  h.weight_decay = weight_decay;
  h.local_steps = local_steps;
  h.ns_iters = ns_iters;
  h.orthogonalizer = orthogonalizer;
  h.momentum_form = momentum_form;
  return h;
}

RunOptions ExperimentConfig::run_options(unsigned threads) const {
  RunOptions o;
  o.algorithm = algorithm;
  o.hyper = hyperparams();
  o.lr_schedule = lr_schedule;
  o.rounds = rounds;
  o.clients_per_round = clients_per_round();
  o.seed = seed;
  o.threads = threads;
  o.cadence = effective_cadence();
  o.threshold = threshold;
  return o;
}

void ExperimentConfig::validate() const {
  require(clients >= 1, "clients", "must be >= 1");
  require(participation > 0.0 && participation <= 1.0, "participation", "must be in (0, 1]");
  require(local_steps >= 1, "local_steps", "must be >= 1");
  require(rounds >= 0, "rounds", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(dir_alpha > 0.0, "dir_alpha", "must be > 0");
  require(sigma_g >= 0.0, "sigma_g", "must be >= 0");
  require(sigma_l >= 0.0, "sigma_l", "must be >= 0");
  require(quad_rows >= 1, "quad_rows", "must be >= 1");
  require(quad_cols >= 1, "quad_cols", "must be >= 1");
  require(quad_condition >= 1.0, "quad_condition", "must be >= 1");
  require(quad_smoothness > 0.0, "quad_smoothness", "must be > 0");
  require(quad_init_distance >= 0.0, "quad_init_distance", "must be >= 0");
  require(mlp_samples >= 1, "mlp_samples", "must be >= 1");
  require(mlp_hidden >= 1, "mlp_hidden", "must be >= 1");
  require(mlp_separation >= 0.0, "mlp_separation", "must be >= 0");
  require(!lr || *lr > 0.0, "lr", "must be > 0");
  require(beta >= 0.0 && beta < 1.0, "beta", "must be in [0, 1)");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha", "must be in [0, 1]");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(ns_iters >= 1, "ns_iters", "must be >= 1");
  require(!seeds.empty(), "seeds", "must not be empty");
  require(threshold > 0.0, "threshold", "must be > 0");
  require(!cadence || *cadence >= 1, "cadence", "must be >= 1");
  require(!out.empty(), "out", "must not be empty");
}

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config:" + std::to_string(line_no), "expected 'key = value'");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("config:" + std::to_string(line_no), "empty key");
    if (!entries.emplace(key, value).second) throw ConfigError(key_path(key), "duplicate key");
  }
  return entries;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ExperimentConfig parse_config(const ConfigEntries& file, const ConfigEntries& overrides) {
  if (!file.contains("algorithm") && !overrides.contains("algorithm")) {
    throw ConfigError(key_path("algorithm"), "missing required field");
  }
  ExperimentConfig config;
  apply(config, file);
  apply(config, overrides);
  config.validate();
  return config;
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::unique_ptr<FederatedTask> make_task(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.task == TaskKind::kQuadratic) {
    QuadraticFamilyOptions opts;
    opts.n_clients = config.clients;
    opts.rows = config.quad_rows;
    opts.cols = config.quad_cols;
    opts.sigma_g = config.sigma_g;
    opts.sigma_l = config.sigma_l;
    opts.target_l = config.quad_smoothness;
    opts.condition = config.quad_condition;
    opts.init_distance = config.quad_init_distance;
    opts.shared_hessian = config.quad_shared_hessian;
    Rng rng = make_rng(seed, Stream::kData);
    return std::make_unique<QuadraticTask>(make_quadratic_family(opts, rng));
  }
  MlpTaskOptions opts;
  opts.n_clients = config.clients;
  opts.samples = config.mlp_samples;
  opts.shape.hidden = config.mlp_hidden;
  opts.separation = config.mlp_separation;
  opts.dir_alpha = config.dir_alpha;
  opts.batch_size = config.batch_size;
  return std::make_unique<MlpTask>(opts, seed);
}

unsigned threads_from_env() {
  const char* raw = std::getenv("FEDMUON_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  unsigned out = 0;
  const char* end = raw + std::char_traits<char>::length(raw);
  auto [ptr, ec] = std::from_chars(raw, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("env.FEDMUON_THREADS", "expected a non-negative integer, got '" + std::string(raw) + "'");
  }
  return out;
}

void write_meta(const std::filesystem::path& csv, const ExperimentConfig& config) {
  auto meta = csv;
  meta += ".meta";
  std::ofstream out = open_output(meta);
  out << "schema_version = " << kMetricsSchemaVersion << '\n' << serialize(config);
}

RunResult cmd_run(const ExperimentConfig& config, const std::filesystem::path& csv, unsigned threads) {
  std::ofstream out = open_output(csv);
  write_meta(csv, config);
  return execute(config, &out, threads);
}

RunResult run_in_memory(const ExperimentConfig& config, unsigned threads) {
  return execute(config, nullptr, threads);
}

double CellSummary::median_rounds() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.rounds_to_threshold);
  return median(std::move(v));
}

int CellSummary::censored() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunResult& r) { return !r.reached_threshold; }));
}

double CellSummary::median_final_grad_norm_sq() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.last.grad_norm_sq());
  return median(std::move(v));
}

std::optional<double> CellSummary::median_final_test_acc() const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.last.test_acc) v.push_back(*r.last.test_acc);
  }
  if (v.empty()) return std::nullopt;
  return median(std::move(v));
}

std::vector<CellSummary> cmd_sweep(const ExperimentConfig& config, const std::vector<double>& alphas,
                                   const std::vector<double>& betas, const std::filesystem::path& out_dir,
                                   unsigned threads) {
  if (alphas.empty()) throw ConfigError("sweep.alphas", "grid must not be empty");
  if (betas.empty()) throw ConfigError("sweep.betas", "grid must not be empty");
  std::vector<CellSummary> cells;
  for (double a : alphas) {
    for (double b : betas) {
      ExperimentConfig cell = config;
      cell.alpha = a;
      cell.beta = b;
      cell.validate();
      cells.push_back(run_cell(cell, "sweep_a" + cell_tag(a) + "_b" + cell_tag(b), out_dir, threads));
    }
  }
  write_summary(out_dir / "summary_sweep.csv", cells, rank_cells(cells, config.task));
  return cells;
}

std::vector<CellSummary> cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                    unsigned threads) {
  std::vector<CellSummary> cells;
  for (Algorithm a : {Algorithm::kFedMuon, Algorithm::kFedMuonNoMbar, Algorithm::kFedMuonNoDeltaG}) {
    ExperimentConfig variant = config;
    variant.algorithm = a;
    cells.push_back(run_cell(variant, "ablate_" + std::string(to_string(a)), out_dir, threads));
  }
  write_summary(out_dir / "summary_ablate.csv", cells, rank_cells(cells, config.task));
  return cells;
}

double closed_form_uplink_ratio(const ParamSet& x0, Algorithm algorithm) {
  const VariantTraits traits = traits_for(algorithm);
  const auto d = static_cast<double>(x0.scalar_count());
  double extra = 0.0;
  if (traits.upload_momentum) {
    for (const auto& m : x0.matrices) {
      const std::size_t r = m.value.rows();
      const std::size_t c = m.value.cols();
      extra += traits.compress_momentum ? static_cast<double>(compression_rank(r, c) * (r + c + 1))
                                        : static_cast<double>(r * c);
    }
  }
  return (d + extra) / d;
}

std::vector<CommRow> cmd_commtable(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   unsigned threads) {
  const auto task = make_task(config, config.seed);
  const std::pair<const char*, Algorithm> strategies[] = {
      {"NoAgg", Algorithm::kLocalMuon},
      {"Agg-m", Algorithm::kFedMuon},
      {"Agg-m-SVD", Algorithm::kFedMuonSvd},
  };
  std::vector<CommRow> rows;
  for (const auto& [name, algorithm] : strategies) {
    ExperimentConfig variant = config;
    variant.algorithm = algorithm;
    const RunResult r = cmd_run(variant, out_dir / ("commtable_" + std::string(to_string(algorithm)) + ".csv"), threads);
    CommRow row;
    row.strategy = name;
    row.algorithm = algorithm;
    row.uplink = r.uplink;
    row.baseline_uplink = r.baseline_uplink;
    row.measured_ratio = r.baseline_uplink == 0 ? std::nan("")
                                                : static_cast<double>(r.uplink) / static_cast<double>(r.baseline_uplink);
    row.closed_form_ratio = closed_form_uplink_ratio(task->initial_params(), algorithm);
    rows.push_back(row);
  }
  std::ofstream out = open_output(out_dir / "summary_commtable.csv");
  out << "strategy,algorithm,uplink_scalars,baseline_uplink_scalars,measured_ratio,closed_form_ratio\n";
  for (const auto& row : rows) {
    out << row.strategy << ',' << to_string(row.algorithm) << ',' << row.uplink << ',' << row.baseline_uplink
        << ',' << format_double(row.measured_ratio) << ',' << format_double(row.closed_form_ratio) << '\n';
  }
  return rows;
}

}  // namespace fedmuon
