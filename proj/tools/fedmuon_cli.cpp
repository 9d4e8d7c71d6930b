// fedmuon: run, sweep, ablate and commtable subcommands over the lab.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedmuon/harness.hpp"

namespace {

using fedmuon::ConfigEntries;

struct Flags {
  std::string config_file;
  ConfigEntries overrides;
};

// Every flag is collected as a raw string override so file values and flags
// go through the same parser and validation.
void add_override(CLI::App* app, Flags& flags, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&flags, key](const std::string& v) { flags.overrides[key] = v; }, help);
}

void add_common(CLI::App* app, Flags& flags) {
  app->add_option("--config", flags.config_file, "key = value config file; flags override it");
  add_override(app, flags, "--algo", "algorithm",
               "local_sgd | local_adamw | local_muon | fedmuon | fedmuon_svd | fedmuon_no_mbar | "
               "fedmuon_no_deltag");
  add_override(app, flags, "--task", "task", "quadratic | mlp");
  add_override(app, flags, "--clients", "clients", "number of clients N");
  add_override(app, flags, "--participation", "participation", "fraction of clients per round");
  add_override(app, flags, "--local-steps", "local_steps", "local steps K");
  add_override(app, flags, "--rounds", "rounds", "communication rounds R");
  add_override(app, flags, "--alpha", "alpha", "alignment weight in [0, 1]");
  add_override(app, flags, "--beta", "beta", "momentum coefficient in [0, 1)");
  add_override(app, flags, "--lr", "lr", "learning rate (default from the tuned grid)");
  add_override(app, flags, "--weight-decay", "weight_decay", "weight decay");
  add_override(app, flags, "--dir-alpha", "dir_alpha", "Dirichlet concentration (mlp)");
  add_override(app, flags, "--sigma-g", "sigma_g", "heterogeneity radius (quadratic)");
  add_override(app, flags, "--sigma-l", "sigma_l", "gradient noise scale (quadratic)");
  add_override(app, flags, "--seed", "seed", "base seed for run / commtable");
  add_override(app, flags, "--seeds", "seeds", "comma-separated seeds for sweep / ablate");
  add_override(app, flags, "--out", "out", "output CSV (run) or directory (other commands)");
  add_override(app, flags, "--threshold", "threshold", "squared gradient-norm threshold");
  add_override(app, flags, "--lr-schedule", "lr_schedule", "constant | cosine");
  add_override(app, flags, "--cadence", "cadence", "rounds between metric rows");
  app->add_option_function<std::vector<std::string>>(
      "--set",
      [&flags](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + item);
          flags.overrides[item.substr(0, eq)] = item.substr(eq + 1);
        }
      },
      "any config key as key=value (repeatable)");
}

fedmuon::ExperimentConfig resolve(const Flags& flags, const char* default_algorithm) {
  ConfigEntries file;
  if (!flags.config_file.empty()) file = fedmuon::read_config_file(flags.config_file);
  ConfigEntries overrides = flags.overrides;
  if (default_algorithm != nullptr && !file.contains("algorithm") && !overrides.contains("algorithm")) {
    overrides["algorithm"] = default_algorithm;
  }
  return fedmuon::parse_config(file, overrides);
}

std::vector<double> parse_grid(const std::string& text, const char* name) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw fedmuon::ConfigError(std::string("sweep.") + name, "bad grid value '" + item + "'");
    }
    start = comma + 1;
  }
  return out;
}

void print_cells(const std::vector<fedmuon::CellSummary>& cells) {
  std::printf("%-32s %8s %8s %10s %9s %14s\n", "cell", "alpha", "beta", "median_rtt", "censored",
              "final_gnorm2");
  for (const auto& c : cells) {
    std::printf("%-32s %8.3g %8.3g %10.1f %9d %14.4g\n", c.label.c_str(), c.alpha, c.beta,
                c.median_rounds(), c.censored(), c.median_final_grad_norm_sq());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated Muon optimization lab"};
  app.require_subcommand(1);

  Flags run_flags;
  Flags sweep_flags;
  Flags ablate_flags;
  Flags comm_flags;
  std::string alphas = "0,0.25,0.5,0.75,0.9";
  std::string betas = "0.8,0.9,0.95,0.98,0.99";

  auto* run = app.add_subcommand("run", "single run, CSV to --out");
  add_common(run, run_flags);
  auto* sweep = app.add_subcommand("sweep", "alpha x beta grid over --seeds");
  add_common(sweep, sweep_flags);
  sweep->add_option("--alphas", alphas, "comma-separated alpha grid")->capture_default_str();
  sweep->add_option("--betas", betas, "comma-separated beta grid")->capture_default_str();
  auto* ablate = app.add_subcommand("ablate", "fedmuon vs fedmuon_no_mbar vs fedmuon_no_deltag");
  add_common(ablate, ablate_flags);
  auto* comm = app.add_subcommand("commtable", "uplink ratios of NoAgg, Agg-m, Agg-m-SVD");
  add_common(comm, comm_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const unsigned threads = fedmuon::threads_from_env();
    if (run->parsed()) {
      const auto config = resolve(run_flags, nullptr);
      const auto result = fedmuon::cmd_run(config, config.out, threads);
      std::printf("wrote %s\nrounds_to_threshold=%d%s final_grad_norm_sq=%.6g\n", config.out.c_str(),
                  result.rounds_to_threshold, result.reached_threshold ? "" : " (censored)",
                  result.last.grad_norm_sq());
    } else if (sweep->parsed()) {
      auto config = resolve(sweep_flags, "fedmuon");
      const auto cells = fedmuon::cmd_sweep(config, parse_grid(alphas, "alphas"), parse_grid(betas, "betas"),
                                            config.out, threads);
      print_cells(cells);
    } else if (ablate->parsed()) {
      const auto config = resolve(ablate_flags, "fedmuon");
      print_cells(fedmuon::cmd_ablate(config, config.out, threads));
    } else if (comm->parsed()) {
      const auto config = resolve(comm_flags, "fedmuon");
      const auto rows = fedmuon::cmd_commtable(config, config.out, threads);
      std::printf("%-10s %-12s %14s %14s %10s %12s\n", "strategy", "algorithm", "uplink", "baseline",
                  "measured", "closed_form");
      for (const auto& r : rows) {
        std::printf("%-10s %-12s %14zu %14zu %10.6f %12.6f\n", r.strategy.c_str(),
                    std::string(fedmuon::to_string(r.algorithm)).c_str(), r.uplink, r.baseline_uplink,
                    r.measured_ratio, r.closed_form_ratio);
      }
    }
  } catch (const fedmuon::NonFiniteError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const fedmuon::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
