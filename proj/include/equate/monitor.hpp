#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equate/circuit.hpp"
#include "equate/error.hpp"
#include "equate/gradients.hpp"

namespace equate {

inline constexpr double kDefaultThreshold = 1e-5;

// Population variance (divides by n). A single value has variance 0.
// Corrected two-pass: the second term removes the rounding error of the mean,
// so identical values give exactly 0.
inline double variance(std::span<const double> values) {
  if (values.empty()) throw InputError("variance of an empty sequence");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double sq = 0.0, sum = 0.0;
  for (double v : values) {
    const double d = v - mean;
    sq += d * d;
    sum += d;
  }
  return std::max(0.0, (sq - sum * sum / n) / n);
}

struct ParamVariance {
  std::size_t param_index = 0;
  GateKind kind = GateKind::RX;
  double variance = 0.0;
  bool below = false;  // variance < threshold
};

struct VarianceReport {
  std::size_t epoch = 0;
  std::vector<ParamVariance> per_param;
  std::map<GateKind, double> per_kind;  // mean variance over that kind's parameters
  double threshold = kDefaultThreshold;
  bool all_below = false;
};

struct PlateauEntry {
  std::size_t param_index = 0;
  GateKind kind = GateKind::RX;
  double variance = 0.0;
};

struct PlateauEvent {
  std::size_t epoch = 0;
  std::vector<PlateauEntry> entries;
  std::string message;
};

inline std::string format_variance(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

// One feedback line: epoch, parameter index, parameter type, variance.
inline std::string feedback_line(std::size_t epoch, std::size_t param_index, GateKind kind, double value) {
  return "epoch=" + std::to_string(epoch) + " param_index=" + std::to_string(param_index) +
         " param_type=" + std::string(to_string(kind)) + " barren_plateau_value=" + format_variance(value);
}

// A circuit without trainable parameters never reports all_below.
inline VarianceReport build_report(std::size_t epoch, std::span<const GradientSample> samples,
                                   const CircuitSpec& spec, double threshold) {
  if (samples.empty()) throw InputError("build_report: no gradient samples");
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) throw InputError("build_report: invalid threshold");
  const auto kinds = spec.parameter_kinds();
  const std::size_t n_params = kinds.size();
  for (const auto& s : samples) {
    if (s.grads.size() != n_params) throw InputError("build_report: inconsistent gradient lengths");
  }

  VarianceReport report;
  report.epoch = epoch;
  report.threshold = threshold;
  report.all_below = n_params > 0;
  std::map<GateKind, std::size_t> counts;
  std::vector<double> column(samples.size());
  for (std::size_t k = 0; k < n_params; ++k) {
    for (std::size_t i = 0; i < samples.size(); ++i) column[i] = samples[i].grads[k];
    const double v = variance(column);
    const bool below = v < threshold;
    report.per_param.push_back({k, kinds[k], v, below});
    report.all_below = report.all_below && below;
    report.per_kind[kinds[k]] += v;
    ++counts[kinds[k]];
  }
  for (auto& [kind, sum] : report.per_kind) sum /= static_cast<double>(counts[kind]);
  return report;
}

inline std::optional<PlateauEvent> detect(const VarianceReport& report) {
  if (!report.all_below || report.per_param.empty()) return std::nullopt;
  PlateauEvent event;
  event.epoch = report.epoch;
  for (const auto& p : report.per_param) {
    event.entries.push_back({p.param_index, p.kind, p.variance});
    if (!event.message.empty()) event.message += '\n';
    event.message += feedback_line(report.epoch, p.param_index, p.kind, p.variance);
  }
  return event;
}

// Threshold holder shared between the training loop and the command channel.
// set_threshold() may be called from any thread; the value only becomes
// active when the training loop calls begin_epoch().
class PlateauMonitor {
 public:
  explicit PlateauMonitor(double threshold = kDefaultThreshold) : active_(threshold), pending_(threshold) {
    if (!(threshold >= 0.0) || !std::isfinite(threshold)) throw ConfigError("threshold must be >= 0");
  }

  // Returns the acknowledged threshold; throws InputError if not positive.
  double set_threshold(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw InputError("threshold must be a positive finite number");
    }
    std::lock_guard lock(mutex_);
    pending_ = value;
    return value;
  }

  double begin_epoch() {
    std::lock_guard lock(mutex_);
    active_ = pending_;
    return active_;
  }

  double threshold() const {
    std::lock_guard lock(mutex_);
    return active_;
  }

  double pending_threshold() const {
    std::lock_guard lock(mutex_);
    return pending_;
  }

  VarianceReport report(std::size_t epoch, std::span<const GradientSample> samples, const CircuitSpec& spec) const {
    return build_report(epoch, samples, spec, threshold());
  }

 private:
  mutable std::mutex mutex_;
  double active_;
  double pending_;
};

}  // namespace equate
