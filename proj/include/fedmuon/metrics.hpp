#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace fedmuon {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr std::string_view kMetricsHeader =
    "round,loss,grad_norm,grad_norm_sq,opt_gap,test_acc,uplink_scalars,downlink_scalars,"
    "uplink_ratio,update_cond,elapsed_s";

/// One row of the metrics stream. Optional fields serialize as empty cells.
struct MetricsRecord {
  int round = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::optional<double> opt_gap;
  std::optional<double> test_acc;
  std::size_t uplink_scalars = 0;
  std::size_t downlink_scalars = 0;
  /// Cumulative uplink over the FedAvg (delta-only) uplink for the same rounds.
  std::optional<double> uplink_ratio;
  /// Largest condition number among the aggregated per-layer updates.
  std::optional<double> update_cond;
  /// Only filled when timing is requested; leaving it empty keeps output reproducible.
  std::optional<double> elapsed_s;

  double grad_norm_sq() const noexcept { return grad_norm * grad_norm; }
};

/// Shortest round-trippable decimal form ("%.17g"), "inf"/"nan" for non-finite values.
std::string format_double(double v);

std::string to_csv_row(const MetricsRecord& r);

/// Writes the header then streams rows; flushes after every row.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(std::ostream& out);
  void write(const MetricsRecord& r);

 private:
  std::ostream& out_;
};

}  // namespace fedmuon
