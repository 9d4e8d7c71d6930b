#include "fedmuon/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <thread>

namespace fedmuon {

namespace {

struct AlgorithmName {
  Algorithm algorithm;
  std::string_view name;
};

constexpr AlgorithmName kAlgorithmNames[] = {
    {Algorithm::kLocalSgd, "local_sgd"},
    {Algorithm::kLocalAdamw, "local_adamw"},
    {Algorithm::kLocalMuon, "local_muon"},
    {Algorithm::kFedMuon, "fedmuon"},
    {Algorithm::kFedMuonSvd, "fedmuon_svd"},
    {Algorithm::kFedMuonNoMbar, "fedmuon_no_mbar"},
    {Algorithm::kFedMuonNoDeltaG, "fedmuon_no_deltag"},
};

void check_finite(const ParamSet& p, int round, std::size_t client, int step, const char* what) {
  if (!p.all_finite()) throw NonFiniteError(round, client, step, what);
}

unsigned resolve_threads(unsigned requested, std::size_t jobs) {
  unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

}  // namespace

std::string_view to_string(Algorithm a) {
  for (const auto& entry : kAlgorithmNames) {
    if (entry.algorithm == a) return entry.name;
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (const auto& entry : kAlgorithmNames) {
    if (entry.name == name) return entry.algorithm;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

VariantTraits traits_for(Algorithm a) {
  switch (a) {
    case Algorithm::kLocalSgd:
      return {LocalRule::kSgd, false, false, false, false};
    case Algorithm::kLocalAdamw:
      return {LocalRule::kAdamw, false, false, false, false};
    case Algorithm::kLocalMuon:
      return {LocalRule::kMuon, false, false, false, false};
    case Algorithm::kFedMuon:
      return {LocalRule::kMuon, true, true, true, false};
    case Algorithm::kFedMuonSvd:
      return {LocalRule::kMuon, true, true, true, true};
    case Algorithm::kFedMuonNoMbar:
      return {LocalRule::kMuon, false, true, false, false};
    case Algorithm::kFedMuonNoDeltaG:
      return {LocalRule::kMuon, true, false, true, false};
  }
  throw std::invalid_argument("traits_for: unknown algorithm");
}

void CommLedger::record(const Round& r) {
  rounds_.push_back(r);
  total_uplink_ += r.uplink;
  total_downlink_ += r.downlink;
  total_baseline_ += r.baseline_uplink;
}

std::optional<double> CommLedger::uplink_ratio() const noexcept {
  if (total_baseline_ == 0) return std::nullopt;
  return static_cast<double>(total_uplink_) / static_cast<double>(total_baseline_);
}

ServerState initial_server_state(const ParamSet& x0) {
  return ServerState{x0, zero_matrices_like(x0), zeros_like(x0), 0, {}};
}

std::size_t payload_scalars(const MomentumPayload& p) {
  if (const auto* full = std::get_if<MatrixSet>(&p)) {
    std::size_t n = 0;
    for (const auto& m : *full) n += m.size();
    return n;
  }
  if (const auto* factors = std::get_if<std::vector<LowRankFactors>>(&p)) {
    std::size_t n = 0;
    for (const auto& f : *factors) n += f.scalar_count();
    return n;
  }
  return 0;
}

std::size_t comm_cost(const ClientReport& report) {
  return report.delta_x.scalar_count() + payload_scalars(report.momentum);
}

std::size_t broadcast_cost(const ParamSet& x, const VariantTraits& traits) {
  std::size_t n = x.scalar_count();
  if (traits.init_from_mbar) n += x.matrix_scalar_count();
  if (traits.align) n += x.matrix_scalar_count();
  return n;
}

std::vector<std::size_t> sample_clients(std::size_t n_total, std::size_t s, Rng& rng) {
  if (s < 1 || s > n_total) {
    throw std::invalid_argument("sample_clients: need 1 <= s <= n_total, got s=" + std::to_string(s) +
                                ", n_total=" + std::to_string(n_total));
  }
  std::vector<std::size_t> ids(n_total);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < s; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_total - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(s);
  std::sort(ids.begin(), ids.end());
  return ids;
}

LowRankFactors compress_momentum(const Matrix& m) {
  if (frobenius_norm(m) == 0.0) {
    return LowRankFactors{Matrix(m.rows(), 1), {0.0}, Matrix(m.cols(), 1)};
  }
  return truncate_top_k(svd(m), compression_rank(m.rows(), m.cols()));
}

Matrix decompress_momentum(const LowRankFactors& f) { return reconstruct(f); }

NonFiniteError::NonFiniteError(int round_, std::size_t client_, int step_, const std::string& what)
    : std::runtime_error("non-finite " + what + " at round " + std::to_string(round_) + ", client " +
                         std::to_string(client_) + ", step " + std::to_string(step_)),
      round(round_),
      client(client_),
      step(step_) {}

ClientReport run_local(const FederatedTask& task, std::size_t client, const ServerState& server,
                       const Hyperparams& h, const VariantTraits& traits, Rng& rng,
                       const LocalObserver& observer) {
  const int round = server.round;
  ParamSet x = server.x;
  MatrixSet momentum = traits.init_from_mbar ? server.m_bar : zero_matrices_like(x);
  std::vector<AdamState> matrix_adam(x.matrices.size());
  std::vector<AdamState> vector_adam(x.vectors.size());
  Hyperparams local = h;
  if (!traits.align) local.alpha = 0.0;

  if (observer) observer(round, client, 0, momentum);
  for (int k = 0; k < h.local_steps; ++k) {
    const ParamSet g = task.client_gradient(client, x, rng);
    check_finite(g, round, client, k + 1, "gradient");
    switch (traits.rule) {
      case LocalRule::kSgd:
        for (std::size_t j = 0; j < x.matrices.size(); ++j) {
          x.matrices[j].value = sgd_step(x.matrices[j].value, g.matrices[j].value, local);
        }
        for (std::size_t j = 0; j < x.vectors.size(); ++j) {
          x.vectors[j].value = sgd_step(x.vectors[j].value, g.vectors[j].value, local);
        }
        break;
      case LocalRule::kAdamw:
        for (std::size_t j = 0; j < x.matrices.size(); ++j) {
          detail::adamw_update(x.matrices[j].value.values(), matrix_adam[j], g.matrices[j].value.values(),
                               local);
        }
        for (std::size_t j = 0; j < x.vectors.size(); ++j) {
          detail::adamw_update(x.vectors[j].value, vector_adam[j], g.vectors[j].value, local);
        }
        break;
      case LocalRule::kMuon:
        for (std::size_t j = 0; j < x.matrices.size(); ++j) {
          MatrixStep step = fedmuon_local_step(x.matrices[j].value, momentum[j], g.matrices[j].value,
                                               server.delta_g.matrices[j].value, local);
          x.matrices[j].value = std::move(step.weights);
          momentum[j] = std::move(step.momentum);
        }
        for (std::size_t j = 0; j < x.vectors.size(); ++j) {
          if (local.orthogonalizer == Orthogonalizer::kIdentity) {
            x.vectors[j].value = sgd_step(x.vectors[j].value, g.vectors[j].value, local);
          } else {
            detail::adamw_update(x.vectors[j].value, vector_adam[j], g.vectors[j].value, local);
          }
        }
        break;
    }
    check_finite(x, round, client, k + 1, "parameters");
    if (observer) observer(round, client, k + 1, momentum);
  }

  ClientReport report;
  report.client_id = client;
  report.delta_x = x - server.x;
  if (traits.upload_momentum) {
    if (traits.compress_momentum) {
      std::vector<LowRankFactors> factors;
      factors.reserve(momentum.size());
      for (const auto& m : momentum) factors.push_back(compress_momentum(m));
      report.momentum = std::move(factors);
    } else {
      report.momentum = std::move(momentum);
    }
  }
  report.scalars_sent = comm_cost(report);
  return report;
}

ServerState aggregate_round(std::vector<ClientReport> reports, const ServerState& server,
                            const Hyperparams& h, const VariantTraits& traits) {
  if (reports.empty()) throw std::invalid_argument("aggregate_round: no client reports");
  std::sort(reports.begin(), reports.end(),
            [](const ClientReport& a, const ClientReport& b) { return a.client_id < b.client_id; });

  const auto s = static_cast<double>(reports.size());
  ParamSet delta_sum = zeros_like(server.x);
  std::size_t uplink = 0;
  for (const auto& r : reports) {
    require_same_layout(r.delta_x, server.x, "aggregate_round delta_x");
    delta_sum += r.delta_x;
    uplink += r.scalars_sent;
  }

  ServerState next;
  next.x = server.x + delta_sum * (1.0 / s);
  next.delta_g = delta_sum * (-1.0 / (s * static_cast<double>(h.local_steps) * h.lr));
  next.m_bar = zero_matrices_like(server.x);
  if (traits.upload_momentum) {
    for (const auto& r : reports) {
      if (const auto* full = std::get_if<MatrixSet>(&r.momentum)) {
        if (full->size() != next.m_bar.size()) throw std::invalid_argument("aggregate_round: momentum count mismatch");
        for (std::size_t j = 0; j < full->size(); ++j) next.m_bar[j] += (*full)[j];
      } else if (const auto* factors = std::get_if<std::vector<LowRankFactors>>(&r.momentum)) {
        if (factors->size() != next.m_bar.size()) throw std::invalid_argument("aggregate_round: momentum count mismatch");
        for (std::size_t j = 0; j < factors->size(); ++j) next.m_bar[j] += decompress_momentum((*factors)[j]);
      } else {
        throw std::invalid_argument("aggregate_round: client " + std::to_string(r.client_id) +
                                    " sent no momentum");
      }
    }
    for (auto& m : next.m_bar) m *= 1.0 / s;
  }
  next.round = server.round + 1;
  next.ledger = server.ledger;
  next.ledger.record({next.round, uplink, reports.size() * broadcast_cost(server.x, traits),
                      reports.size() * server.x.scalar_count()});
  return next;
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::kCosine ? "cosine" : "constant"; }

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw std::invalid_argument("unknown lr schedule '" + std::string(name) + "'");
}

double lr_at(LrSchedule schedule, double base_lr, int round, int total_rounds) {
  if (schedule == LrSchedule::kConstant || total_rounds <= 0) return base_lr;
  const double frac = static_cast<double>(round) / static_cast<double>(total_rounds);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

MetricsRecord measure(const FederatedTask& task, const ServerState& state, const ParamSet* previous_x,
                      bool record_condition) {
  MetricsRecord rec;
  rec.round = state.round;
  rec.loss = task.global_loss(state.x);
  rec.grad_norm = norm(task.global_gradient(state.x));
  if (auto f_star = task.optimal_loss()) rec.opt_gap = rec.loss - *f_star;
  rec.test_acc = task.test_accuracy(state.x);
  rec.uplink_scalars = state.ledger.total_uplink();
  rec.downlink_scalars = state.ledger.total_downlink();
  rec.uplink_ratio = state.ledger.uplink_ratio();
  if (record_condition && previous_x != nullptr) {
    double worst = 0.0;
    for (std::size_t j = 0; j < state.x.matrices.size(); ++j) {
      const Matrix update = state.x.matrices[j].value - previous_x->matrices[j].value;
      if (frobenius_norm(update) == 0.0) continue;
      worst = std::max(worst, condition_number(update));
    }
    rec.update_cond = worst;
  }
  return rec;
}

std::vector<ClientReport> run_clients(const FederatedTask& task, const std::vector<std::size_t>& ids,
                                      const ServerState& server, const Hyperparams& h,
                                      const VariantTraits& traits, std::uint64_t seed, unsigned threads,
                                      const LocalObserver& observer) {
  std::vector<ClientReport> reports(ids.size());
  auto work = [&](std::size_t slot) {
    Rng rng = make_rng(seed, Stream::kGradient, static_cast<std::uint64_t>(server.round), ids[slot]);
    reports[slot] = run_local(task, ids[slot], server, h, traits, rng, observer);
  };
  const unsigned workers = resolve_threads(threads, ids.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < ids.size(); ++i) work(i);
    return reports;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(ids.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < ids.size(); i = next++) {
        try {
          work(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

}  // namespace

RunSummary run_experiment(const FederatedTask& task, const RunOptions& opts, const MetricsSink& sink,
                          const LocalObserver& observer) {
  opts.hyper.validate();
  if (opts.rounds < 0) throw std::invalid_argument("run_experiment: rounds must be >= 0");
  if (opts.cadence < 1) throw std::invalid_argument("run_experiment: cadence must be >= 1");
  if (opts.clients_per_round < 1 || opts.clients_per_round > task.num_clients()) {
    throw std::invalid_argument("run_experiment: clients_per_round must be in [1, " +
                                std::to_string(task.num_clients()) + "]");
  }
  const VariantTraits traits = traits_for(opts.algorithm);
  const auto start = std::chrono::steady_clock::now();

  RunSummary summary;
  summary.rounds_to_threshold = opts.rounds + 1;
  ServerState state = initial_server_state(task.initial_params());
  ParamSet previous_x;

  auto emit = [&](const ServerState& s, const ParamSet* prev) {
    MetricsRecord rec = measure(task, s, prev, opts.record_update_condition);
    if (opts.record_timing) {
      rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
      throw NonFiniteError(s.round, 0, 0, "global loss");
    }
    if (!summary.reached_threshold && rec.grad_norm_sq() <= opts.threshold) {
      summary.reached_threshold = true;
      summary.rounds_to_threshold = rec.round;
    }
    summary.last = rec;
    if (sink) sink(rec);
  };

  emit(state, nullptr);
  for (int r = 0; r < opts.rounds; ++r) {
    Hyperparams h = opts.hyper;
    h.lr = lr_at(opts.lr_schedule, opts.hyper.lr, r, opts.rounds);
    Rng sampler = make_rng(opts.seed, Stream::kSampling, static_cast<std::uint64_t>(r));
    const auto ids = sample_clients(task.num_clients(), opts.clients_per_round, sampler);
    auto reports = run_clients(task, ids, state, h, traits, opts.seed, opts.threads, observer);
    previous_x = state.x;
    state = aggregate_round(std::move(reports), state, h, traits);
    if (state.round % opts.cadence == 0 || state.round == opts.rounds) emit(state, &previous_x);
    if (opts.stop_at_threshold && summary.reached_threshold) break;
  }
  summary.final_state = std::move(state);
  return summary;
}

}  // namespace fedmuon
