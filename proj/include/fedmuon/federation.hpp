#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fedmuon/linalg.hpp"
#include "fedmuon/metrics.hpp"
#include "fedmuon/optimizers.hpp"
#include "fedmuon/param_set.hpp"
#include "fedmuon/rng.hpp"
#include "fedmuon/task.hpp"

namespace fedmuon {

enum class Algorithm {
  kLocalSgd,
  kLocalAdamw,
  kLocalMuon,
  kFedMuon,
  kFedMuonSvd,
  kFedMuonNoMbar,
  kFedMuonNoDeltaG,
};

std::string_view to_string(Algorithm a);
/// Throws std::invalid_argument for unknown names.
Algorithm parse_algorithm(std::string_view name);

enum class LocalRule { kSgd, kAdamw, kMuon };

/// What an algorithm does on the client and what it puts on the wire.
struct VariantTraits {
  LocalRule rule = LocalRule::kSgd;
  bool init_from_mbar = false;     // M_i^{r,0} <- M_bar^r instead of 0
  bool align = false;              // use alpha * Delta_G in local steps
  bool upload_momentum = false;    // client sends M_i^{r,K}
  bool compress_momentum = false;  // ... as top-k SVD factors
};

VariantTraits traits_for(Algorithm a);

/// Per-round and cumulative scalar counts.
class CommLedger {
 public:
  struct Round {
    int round = 0;
    std::size_t uplink = 0;
    std::size_t downlink = 0;
    std::size_t baseline_uplink = 0;  // FedAvg: one delta per participant
  };

  void record(const Round& r);
  const std::vector<Round>& rounds() const noexcept { return rounds_; }
  std::size_t total_uplink() const noexcept { return total_uplink_; }
  std::size_t total_downlink() const noexcept { return total_downlink_; }
  std::size_t total_baseline_uplink() const noexcept { return total_baseline_; }
  /// total_uplink / total_baseline_uplink; empty before the first round.
  std::optional<double> uplink_ratio() const noexcept;

 private:
  std::vector<Round> rounds_;
  std::size_t total_uplink_ = 0;
  std::size_t total_downlink_ = 0;
  std::size_t total_baseline_ = 0;
};

struct ServerState {
  ParamSet x;        // x^r
  MatrixSet m_bar;   // M_bar^r, one per matrix parameter
  ParamSet delta_g;  // Delta_G^r
  int round = 0;
  CommLedger ledger;
};

/// Round-0 state: m_bar = 0, delta_g = 0.
ServerState initial_server_state(const ParamSet& x0);

using MomentumPayload = std::variant<std::monostate, MatrixSet, std::vector<LowRankFactors>>;

struct ClientReport {
  std::size_t client_id = 0;
  ParamSet delta_x;  // x_i^{r,K} - x_i^{r,0}
  MomentumPayload momentum;
  std::size_t scalars_sent = 0;
};

/// Real values carried by a momentum payload.
std::size_t payload_scalars(const MomentumPayload& p);
/// Real values a client sends: delta_x plus momentum payload.
std::size_t comm_cost(const ClientReport& report);
/// Real values the server sends each participant: x, plus M_bar and Delta_G
/// over matrix parameters when the variant consumes them.
std::size_t broadcast_cost(const ParamSet& x, const VariantTraits& traits);

/// s distinct ids drawn uniformly without replacement from [0, n_total), ascending.
std::vector<std::size_t> sample_clients(std::size_t n_total, std::size_t s, Rng& rng);

/// Top-k factors with k = compression_rank(rows, cols). A zero momentum
/// compresses to rank-1 zero factors.
LowRankFactors compress_momentum(const Matrix& m);
Matrix decompress_momentum(const LowRankFactors& f);

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int round, std::size_t client, int step, const std::string& what);
  int round;
  std::size_t client;
  int step;
};

/// Called once with step = 0 before the first local update (initial momentum)
/// and after every local step with that step's momentum.
using LocalObserver =
    std::function<void(int round, std::size_t client, int step, const MatrixSet& momentum)>;

/// K local steps on one client starting from the broadcast state. `h.lr` is the
/// learning rate for this round.
ClientReport run_local(const FederatedTask& task, std::size_t client, const ServerState& server,
                       const Hyperparams& h, const VariantTraits& traits, Rng& rng,
                       const LocalObserver& observer = {});

/// Averages reports in ascending client-id order:
///   x^{r+1} = x^r + mean(delta_x), Delta_G^{r+1} = -sum(delta_x) / (S K lr),
///   M_bar^{r+1} = mean(decompressed momenta) when momentum is uploaded.
/// Also records the round in the ledger.
ServerState aggregate_round(std::vector<ClientReport> reports, const ServerState& server,
                            const Hyperparams& h, const VariantTraits& traits);

enum class LrSchedule { kConstant, kCosine };

std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view name);

/// Learning rate for round r (0-based) of R.
double lr_at(LrSchedule schedule, double base_lr, int round, int total_rounds);

struct RunOptions {
  Algorithm algorithm = Algorithm::kFedMuon;
  Hyperparams hyper;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  int rounds = 300;
  std::size_t clients_per_round = 10;
  std::uint64_t seed = 42;
  /// Worker threads for client execution; 0 = hardware concurrency.
  unsigned threads = 1;
  /// Emit a record every `cadence` rounds (always including 0 and R).
  int cadence = 1;
  bool record_update_condition = false;
  bool record_timing = false;
  /// First r with ||grad f(x^r)||^2 <= threshold counts as converged.
  double threshold = 1e-3;
  /// End the run at the first record that meets the threshold.
  bool stop_at_threshold = false;
};

struct RunSummary {
  ServerState final_state;
  /// R + 1 when the threshold is never reached.
  int rounds_to_threshold = 0;
  bool reached_threshold = false;
  MetricsRecord last;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Executes R rounds and streams a record at every cadence tick. Results are
/// independent of `threads`.
RunSummary run_experiment(const FederatedTask& task, const RunOptions& opts,
                          const MetricsSink& sink = {}, const LocalObserver& observer = {});

}  // namespace fedmuon
