#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equate/error.hpp"
#include "equate/random.hpp"
#include "equate/statevector.hpp"

namespace equate {

enum class EncoderScheme { AngleRY };

struct EncoderSpec {
  EncoderScheme scheme = EncoderScheme::AngleRY;
  double feature_scale = 1.0;

  bool operator==(const EncoderSpec&) const = default;
};

// One gate of the parameterized part of the circuit. Rotation slots carry a
// param_index into the ParameterVector; CNOT slots carry a control wire.
struct PqcGateSlot {
  GateKind kind = GateKind::RY;
  std::size_t target = 0;
  std::optional<std::size_t> control;
  std::optional<std::size_t> param_index;

  static PqcGateSlot rotation(GateKind kind, std::size_t wire, std::size_t param) {
    return {kind, wire, std::nullopt, param};
  }
  static PqcGateSlot cnot(std::size_t control, std::size_t target) {
    return {GateKind::CNOT, target, control, std::nullopt};
  }

  bool operator==(const PqcGateSlot&) const = default;
};

using ParameterVector = std::vector<double>;

struct CircuitSpec {
  std::size_t n_wires = 1;
  EncoderSpec encoder;
  std::vector<PqcGateSlot> pqc;
  std::vector<std::size_t> measured_wires;

  bool operator==(const CircuitSpec&) const = default;

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(
        std::count_if(pqc.begin(), pqc.end(), [](const auto& s) { return s.param_index.has_value(); }));
  }

  // Gate kind of each parameter, indexed by param_index.
  std::vector<GateKind> parameter_kinds() const {
    std::vector<GateKind> kinds(parameter_count(), GateKind::RX);
    for (const auto& slot : pqc) {
      if (slot.param_index) kinds.at(*slot.param_index) = slot.kind;
    }
    return kinds;
  }

  std::size_t output_wire() const { return measured_wires.front(); }

  // Throws CircuitError on the first violated structural invariant.
  void validate() const {
    if (n_wires < 1 || n_wires > kMaxWires) throw ConfigError("n_wires out of range");
    if (!(encoder.feature_scale > 0.0)) throw ConfigError("feature_scale must be positive");
    const auto check_wire = [&](std::size_t w) {
      if (w >= n_wires) throw CircuitError("wire " + std::to_string(w) + " out of range");
    };
    std::vector<bool> seen(pqc.size(), false);
    std::size_t rotations = 0;
    for (const auto& slot : pqc) {
      check_wire(slot.target);
      if (is_rotation(slot.kind)) {
        if (!slot.param_index || slot.control) throw CircuitError("rotation slot needs a parameter and no control");
        ++rotations;
        if (*slot.param_index >= seen.size() || seen[*slot.param_index]) {
          throw CircuitError("parameter indices must be unique and contiguous");
        }
        seen[*slot.param_index] = true;
      } else if (slot.kind == GateKind::CNOT) {
        if (!slot.control || slot.param_index) throw CircuitError("CNOT slot needs a control and no parameter");
        check_wire(*slot.control);
        if (*slot.control == slot.target) throw CircuitError("CNOT control equals target");
      } else {
        throw CircuitError("gate kind not allowed in the PQC");
      }
    }
    for (std::size_t k = 0; k < rotations; ++k) {
      if (!seen[k]) throw CircuitError("parameter index p" + std::to_string(k) + " missing");
    }
    if (measured_wires.empty()) throw CircuitError("no measured wires");
    std::vector<std::size_t> sorted = measured_wires;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw CircuitError("duplicate measured wire");
    }
    for (auto w : measured_wires) check_wire(w);
  }
};

// Layered ansatz: each layer draws `rotations_per_layer` rotations (kind
// uniform over RX/RY/RZ, wire uniform) and then entangles with a CNOT ring
// 0->1, 1->2, ..., (n-1)->0. A 2-wire ring is a single CNOT 0->1 followed by
// 1->0; a 1-wire circuit has no CNOTs. All wires are measured.
inline CircuitSpec random_layers(std::size_t n_wires, std::size_t n_layers,
                                 std::size_t rotations_per_layer, std::uint64_t seed) {
  if (n_wires < 1 || n_wires > kMaxWires) throw ConfigError("random_layers: n_wires out of range");
  if (n_layers < 1) throw ConfigError("random_layers: n_layers must be >= 1");
  if (rotations_per_layer < 1) throw ConfigError("random_layers: rotations_per_layer must be >= 1");

  static constexpr GateKind kRotations[] = {GateKind::RX, GateKind::RY, GateKind::RZ};
  Rng rng(seed);
  CircuitSpec spec;
  spec.n_wires = n_wires;
  std::size_t next_param = 0;
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    for (std::size_t r = 0; r < rotations_per_layer; ++r) {
      const GateKind kind = kRotations[uniform_index(rng, 3)];
      const auto wire = static_cast<std::size_t>(uniform_index(rng, n_wires));
      spec.pqc.push_back(PqcGateSlot::rotation(kind, wire, next_param++));
    }
    if (n_wires >= 2) {
      for (std::size_t w = 0; w < n_wires; ++w) {
        spec.pqc.push_back(PqcGateSlot::cnot(w, (w + 1) % n_wires));
      }
    }
  }
  for (std::size_t w = 0; w < n_wires; ++w) spec.measured_wires.push_back(w);
  return spec;
}

inline StateVector encode(std::span<const double> features, const CircuitSpec& spec) {
  if (features.size() != spec.n_wires) {
    throw InputError("expected " + std::to_string(spec.n_wires) + " features, got " +
                     std::to_string(features.size()));
  }
  StateVector state(spec.n_wires);
  for (std::size_t w = 0; w < spec.n_wires; ++w) {
    state.apply(Gate::ry(w, spec.encoder.feature_scale * features[w]));
  }
  return state;
}

// Encoded input followed by the PQC, before measurement.
inline StateVector prepare_state(const CircuitSpec& spec, std::span<const double> params,
                                 std::span<const double> features) {
  if (params.size() != spec.parameter_count()) {
    throw InputError("expected " + std::to_string(spec.parameter_count()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  StateVector state = encode(features, spec);
  for (const auto& slot : spec.pqc) {
    if (slot.kind == GateKind::CNOT) {
      state.apply(Gate::cnot(*slot.control, slot.target));
    } else {
      state.apply(Gate::rotation(slot.kind, slot.target, params[*slot.param_index]));
    }
  }
  return state;
}

// <Z> on every measured wire, in measured_wires order.
inline std::vector<double> forward(const CircuitSpec& spec, std::span<const double> params,
                                   std::span<const double> features) {
  const StateVector state = prepare_state(spec, params, features);
  std::vector<double> out;
  out.reserve(spec.measured_wires.size());
  for (auto w : spec.measured_wires) out.push_back(state.expectation_z(w));
  return out;
}

}  // namespace equate
