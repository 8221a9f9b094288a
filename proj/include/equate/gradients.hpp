#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "equate/circuit.hpp"
#include "equate/error.hpp"

namespace equate {

struct GradientSample {
  std::size_t epoch = 0;
  std::size_t sample_id = 0;
  std::vector<double> grads;
};

// A labelled input; labels are -1 or +1.
struct Sample {
  std::vector<double> features;
  int label = 1;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> mean_grads;
  std::vector<GradientSample> per_sample;
};

namespace detail {

inline std::size_t measured_position(const CircuitSpec& spec, std::size_t wire) {
  for (std::size_t i = 0; i < spec.measured_wires.size(); ++i) {
    if (spec.measured_wires[i] == wire) return i;
  }
  throw InputError("wire " + std::to_string(wire) + " is not measured");
}

inline double shifted_expectation(const CircuitSpec& spec, ParameterVector& params,
                                  std::span<const double> features, std::size_t wire,
                                  std::size_t k) {
  constexpr double kShift = std::numbers::pi / 2.0;
  const double saved = params[k];
  params[k] = saved + kShift;
  const double plus = prepare_state(spec, params, features).expectation_z(wire);
  params[k] = saved - kShift;
  const double minus = prepare_state(spec, params, features).expectation_z(wire);
  params[k] = saved;
  return 0.5 * (plus - minus);
}

}  // namespace detail

// d<Z_wire>/d theta_k by the two-term parameter-shift rule, exact for
// generators with eigenvalues +-1/2 (RX, RY, RZ).
inline double expectation_gradient(const CircuitSpec& spec, std::span<const double> params,
                                   std::span<const double> features, std::size_t measured_wire,
                                   std::size_t param_index) {
  if (param_index >= spec.parameter_count()) {
    throw InputError("parameter index " + std::to_string(param_index) + " out of range");
  }
  detail::measured_position(spec, measured_wire);
  ParameterVector work(params.begin(), params.end());
  return detail::shifted_expectation(spec, work, features, measured_wire, param_index);
}

// Mean squared error between <Z> on the output wire and the +-1 label, with
// per-sample parameter-shift gradients. Samples are reduced in batch order.
inline LossGradient loss_gradient(const CircuitSpec& spec, std::span<const double> params,
                                  std::span<const Sample> batch, std::size_t epoch = 0) {
  if (batch.empty()) throw InputError("loss_gradient: empty batch");
  const std::size_t n_params = spec.parameter_count();
  if (params.size() != n_params) throw InputError("loss_gradient: parameter count mismatch");
  const std::size_t wire = spec.output_wire();

  LossGradient out;
  out.mean_grads.assign(n_params, 0.0);
  out.per_sample.reserve(batch.size());
  ParameterVector work(params.begin(), params.end());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& sample = batch[i];
    const double z = prepare_state(spec, work, sample.features).expectation_z(wire);
    const double residual = z - static_cast<double>(sample.label);
    out.loss += residual * residual;

    GradientSample g{epoch, i, std::vector<double>(n_params)};
    for (std::size_t k = 0; k < n_params; ++k) {
      g.grads[k] = 2.0 * residual * detail::shifted_expectation(spec, work, sample.features, wire, k);
      out.mean_grads[k] += g.grads[k];
    }
    out.per_sample.push_back(std::move(g));
  }
  const double n = static_cast<double>(batch.size());
  out.loss /= n;
  for (auto& g : out.mean_grads) g /= n;
  return out;
}

}  // namespace equate
