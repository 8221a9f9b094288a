#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equate/circuit.hpp"
#include "equate/error.hpp"
#include "equate/gradients.hpp"
#include "equate/monitor.hpp"
#include "equate/random.hpp"
#include "equate/telemetry.hpp"

namespace equate {

struct TrainConfig {
  std::size_t n_wires = 4;
  std::size_t n_layers = 2;
  std::size_t rotations_per_layer = 4;
  std::uint64_t seed = 7;
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  double threshold = kDefaultThreshold;
  std::size_t dataset_size = 100;
  double stream_interval_seconds = 30.0;

  void validate() const {
    if (n_wires < 1 || n_wires > kMaxWires) throw ConfigError("--wires must be in [1, 20]");
    if (n_layers < 1) throw ConfigError("--layers must be >= 1");
    if (rotations_per_layer < 1) throw ConfigError("--rotations must be >= 1");
    if (epochs < 1) throw ConfigError("--epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("--batch must be >= 1");
    if (dataset_size < 2 || dataset_size % 2 != 0) throw ConfigError("--dataset must be a positive even number");
    if (batch_size > dataset_size) throw ConfigError("--batch must not exceed --dataset");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("--lr must be >= 0");
    if (!(threshold > 0.0) || !std::isfinite(threshold)) throw ConfigError("--threshold must be positive");
    if (!(stream_interval_seconds > 0.0)) throw ConfigError("--interval must be positive");
  }
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Two Gaussian blobs (means pi/4 and 3pi/4 in every coordinate, sd pi/10,
// clipped to [0, pi]). Even indices are class -1, odd are class +1; the first
// 80% of indices form the training split.
inline Dataset make_dataset(std::size_t n_wires, std::size_t size, std::uint64_t seed) {
  if (size == 0 || size % 2 != 0) throw ConfigError("dataset size must be a positive even number");
  if (n_wires < 1) throw ConfigError("dataset needs at least one feature");
  constexpr double pi = std::numbers::pi;
  Rng rng(seed);
  std::vector<Sample> all;
  all.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const int label = i % 2 == 0 ? -1 : 1;
    const double mean = label < 0 ? 0.25 * pi : 0.75 * pi;
    Sample s{std::vector<double>(n_wires), label};
    for (auto& f : s.features) f = std::clamp(mean + 0.1 * pi * standard_normal(rng), 0.0, pi);
    all.push_back(std::move(s));
  }
  const std::size_t n_train = size * 4 / 5;
  Dataset d;
  d.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return d;
}

inline ParameterVector init_params(std::size_t n_params, std::uint64_t seed) {
  Rng rng(seed);
  ParameterVector p(n_params);
  for (auto& v : p) v = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return p;
}

// sign(<Z>) with sign(0) = +1.
inline int predicted_label(double z) { return z >= 0.0 ? 1 : -1; }

// Fraction of samples whose predicted label matches.
inline double accuracy(const CircuitSpec& spec, std::span<const double> params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    const double z = prepare_state(spec, params, s.features).expectation_z(spec.output_wire());
    if (predicted_label(z) == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

struct EpochResult {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  VarianceReport report;
  std::optional<PlateauEvent> event;
  ParameterVector params_after;
};

// Sub-seed streams derived from TrainConfig::seed.
namespace seeds {
inline constexpr std::uint64_t kParams = 1;
inline constexpr std::uint64_t kData = 2;
}  // namespace seeds

// Owns the circuit, parameters, data and monitor of one training run.
// Everything except PlateauMonitor::set_threshold must be called from a
// single thread.
class Engine {
 public:
  // Called after every minibatch update with (epoch, batch index).
  using BatchObserver = std::function<void(std::size_t, std::size_t)>;

  Engine(TrainConfig config, std::optional<CircuitSpec> circuit = std::nullopt, EventSink* sink = nullptr)
      : config_(std::move(config)), sink_(sink), monitor_(config_.threshold) {
    config_.validate();
    if (circuit) {
      circuit->validate();
      if (circuit->n_wires != config_.n_wires) {
        throw ConfigError("circuit has " + std::to_string(circuit->n_wires) + " wires but the config asks for " +
                          std::to_string(config_.n_wires));
      }
      spec_ = std::move(*circuit);
    } else {
      spec_ = random_layers(config_.n_wires, config_.n_layers, config_.rotations_per_layer, config_.seed);
    }
    params_ = init_params(spec_.parameter_count(), derive_seed(config_.seed, seeds::kParams));
    data_ = make_dataset(config_.n_wires, config_.dataset_size, derive_seed(config_.seed, seeds::kData));
  }

  const TrainConfig& config() const noexcept { return config_; }
  const CircuitSpec& circuit() const noexcept { return spec_; }
  const ParameterVector& params() const noexcept { return params_; }
  const Dataset& dataset() const noexcept { return data_; }
  PlateauMonitor& monitor() noexcept { return monitor_; }
  std::size_t next_epoch() const noexcept { return epoch_; }

  void set_batch_observer(BatchObserver observer) { on_batch_ = std::move(observer); }

  EpochResult train_epoch() {
    const std::size_t epoch = epoch_;
    monitor_.begin_epoch();

    const std::span<const Sample> train(data_.train);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < train.size(); start += config_.batch_size, ++batch_index) {
      const auto batch = train.subspan(start, std::min(config_.batch_size, train.size() - start));
      const auto lg = loss_gradient(spec_, params_, batch, epoch);
      for (std::size_t k = 0; k < params_.size(); ++k) params_[k] -= config_.learning_rate * lg.mean_grads[k];
      if (on_batch_) on_batch_(epoch, batch_index);
    }

    // Full pass after the updates: loss and the variance population.
    const auto full = loss_gradient(spec_, params_, train, epoch);
    EpochResult result;
    result.epoch = epoch;
    result.train_loss = full.loss;
    result.test_accuracy = accuracy(spec_, params_, data_.test);
    result.report = monitor_.report(epoch, full.per_sample, spec_);
    result.event = detect(result.report);
    result.params_after = params_;
    emit(result);
    ++epoch_;
    return result;
  }

  // Runs the configured number of epochs. `on_epoch` sees each result as soon
  // as it is produced; `should_stop` is polled between epochs.
  std::vector<EpochResult> run(const std::function<void(const EpochResult&)>& on_epoch = {},
                               const std::function<bool()>& should_stop = {}) {
    std::vector<EpochResult> results;
    results.reserve(config_.epochs);
    for (std::size_t e = 0; e < config_.epochs; ++e) {
      if (should_stop && should_stop()) break;
      results.push_back(train_epoch());
      if (on_epoch) on_epoch(results.back());
    }
    return results;
  }

 private:
  void emit(const EpochResult& r) {
    if (!sink_) return;
    const double now = unix_now();
    const auto scalar = [&](std::string tag, double v) { sink_->record(TelemetryEvent::scalar(std::move(tag), r.epoch, v, now)); };
    scalar(std::string(tags::kTrainLoss), r.train_loss);
    scalar(std::string(tags::kTestAccuracy), r.test_accuracy);
    scalar(std::string(tags::kThreshold), r.report.threshold);
    for (const auto& [kind, v] : r.report.per_kind) {
      scalar(std::string(tags::kVariancePrefix) + std::string(to_string(kind)), v);
    }
    for (const auto& p : r.report.per_param) {
      scalar(std::string(tags::kParamPrefix) + std::to_string(p.param_index), p.variance);
    }
    if (r.event) {
      sink_->record(TelemetryEvent::text(std::string(tags::kModelFeedback), r.epoch, r.event->message, now));
    }
  }

  TrainConfig config_;
  EventSink* sink_;
  PlateauMonitor monitor_;
  CircuitSpec spec_;
  ParameterVector params_;
  Dataset data_;
  std::size_t epoch_ = 0;
  BatchObserver on_batch_;
};

inline std::vector<EpochResult> run(const TrainConfig& config, std::optional<CircuitSpec> circuit = std::nullopt,
                                    EventSink* sink = nullptr) {
  Engine engine(config, std::move(circuit), sink);
  return engine.run();
}

}  // namespace equate
