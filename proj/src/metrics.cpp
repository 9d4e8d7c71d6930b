#include "fedmuon/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace fedmuon {

namespace {

void append_optional(std::string& out, const std::optional<double>& v) {
  out += ',';
  if (v) out += format_double(*v);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.round);
  out += ',' + format_double(r.loss);
  out += ',' + format_double(r.grad_norm);
  out += ',' + format_double(r.grad_norm_sq());
  append_optional(out, r.opt_gap);
  append_optional(out, r.test_acc);
  out += ',' + std::to_string(r.uplink_scalars);
  out += ',' + std::to_string(r.downlink_scalars);
  append_optional(out, r.uplink_ratio);
  append_optional(out, r.update_cond);
  append_optional(out, r.elapsed_s);
  return out;
}

MetricsCsvWriter::MetricsCsvWriter(std::ostream& out) : out_(out) {
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsCsvWriter::write(const MetricsRecord& r) {
  out_ << to_csv_row(r) << '\n';
  out_.flush();
}

}  // namespace fedmuon
