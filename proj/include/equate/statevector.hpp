#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "equate/error.hpp"

namespace equate {

using Complex = std::complex<double>;

inline constexpr std::size_t kMaxWires = 20;

enum class GateKind { RX, RY, RZ, CNOT, Hadamard };

inline std::string_view to_string(GateKind kind) {
  switch (kind) {
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CNOT: return "CNOT";
    case GateKind::Hadamard: return "H";
  }
  return "?";
}

inline bool is_rotation(GateKind kind) {
  return kind == GateKind::RX || kind == GateKind::RY || kind == GateKind::RZ;
}

struct Gate {
  GateKind kind = GateKind::Hadamard;
  std::size_t target = 0;
  std::optional<std::size_t> control;
  double angle = 0.0;

  static Gate rx(std::size_t wire, double theta) { return {GateKind::RX, wire, std::nullopt, theta}; }
  static Gate ry(std::size_t wire, double theta) { return {GateKind::RY, wire, std::nullopt, theta}; }
  static Gate rz(std::size_t wire, double theta) { return {GateKind::RZ, wire, std::nullopt, theta}; }
  static Gate rotation(GateKind kind, std::size_t wire, double theta) {
    return {kind, wire, std::nullopt, theta};
  }
  static Gate cnot(std::size_t control, std::size_t target) {
    return {GateKind::CNOT, target, control, 0.0};
  }
  static Gate hadamard(std::size_t wire) { return {GateKind::Hadamard, wire, std::nullopt, 0.0}; }
};

// Dense pure state of n qubits. Wire 0 is the most significant bit of the
// basis index, so |10> on two wires is amplitude index 2.
class StateVector {
 public:
  explicit StateVector(std::size_t n_wires) : n_wires_(n_wires) {
    if (n_wires < 1 || n_wires > kMaxWires) {
      throw ConfigError("n_wires must be in [1, " + std::to_string(kMaxWires) +
                        "], got " + std::to_string(n_wires));
    }
    amps_.assign(std::size_t{1} << n_wires, Complex{0.0, 0.0});
    amps_[0] = 1.0;
  }

  std::size_t n_wires() const noexcept { return n_wires_; }
  std::size_t dimension() const noexcept { return amps_.size(); }
  std::span<const Complex> amplitudes() const noexcept { return amps_; }
  const Complex& operator[](std::size_t i) const { return amps_[i]; }

  // Basis state |bits>, with bits read most-significant wire first.
  static StateVector basis(std::size_t n_wires, std::size_t index) {
    StateVector s(n_wires);
    if (index >= s.dimension()) throw InputError("basis index out of range");
    s.amps_[0] = 0.0;
    s.amps_[index] = 1.0;
    return s;
  }

  double norm() const {
    double acc = 0.0;
    for (const auto& a : amps_) acc += std::norm(a);
    return std::sqrt(acc);
  }

  std::size_t wire_mask(std::size_t wire) const {
    check_wire(wire);
    return std::size_t{1} << (n_wires_ - 1 - wire);
  }

  void apply(const Gate& gate) {
    const std::size_t tmask = wire_mask(gate.target);
    if (gate.kind == GateKind::CNOT) {
      if (!gate.control) throw CircuitError("CNOT requires a control wire");
      if (*gate.control == gate.target) throw CircuitError("CNOT control equals target");
      const std::size_t cmask = wire_mask(*gate.control);
      for (std::size_t i = 0; i < amps_.size(); ++i) {
        if ((i & cmask) && !(i & tmask)) std::swap(amps_[i], amps_[i | tmask]);
      }
      return;
    }
    if (gate.control) throw CircuitError(std::string(to_string(gate.kind)) + " takes no control wire");

    const double c = std::cos(gate.angle / 2.0);
    const double s = std::sin(gate.angle / 2.0);
    Complex m00, m01, m10, m11;
    switch (gate.kind) {
      case GateKind::RX:
        m00 = c; m01 = Complex(0.0, -s); m10 = Complex(0.0, -s); m11 = c;
        break;
      case GateKind::RY:
        m00 = c; m01 = -s; m10 = s; m11 = c;
        break;
      case GateKind::RZ:
        m00 = Complex(c, -s); m01 = 0.0; m10 = 0.0; m11 = Complex(c, s);
        break;
      case GateKind::Hadamard: {
        const double h = 1.0 / std::sqrt(2.0);
        m00 = h; m01 = h; m10 = h; m11 = -h;
        break;
      }
      case GateKind::CNOT:
        break;
    }
    for (std::size_t i = 0; i < amps_.size(); ++i) {
      if (i & tmask) continue;
      const Complex a0 = amps_[i];
      const Complex a1 = amps_[i | tmask];
      amps_[i] = m00 * a0 + m01 * a1;
      amps_[i | tmask] = m10 * a0 + m11 * a1;
    }
  }

  // <Z> on one wire: sum of |amp|^2 weighted +1 for bit 0, -1 for bit 1.
  double expectation_z(std::size_t wire) const {
    const std::size_t mask = wire_mask(wire);
    double acc = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
      const double p = std::norm(amps_[i]);
      acc += (i & mask) ? -p : p;
    }
    return acc;
  }

 private:
  void check_wire(std::size_t wire) const {
    if (wire >= n_wires_) {
      throw CircuitError("wire " + std::to_string(wire) + " out of range for " +
                         std::to_string(n_wires_) + " wires");
    }
  }

  std::size_t n_wires_;
  std::vector<Complex> amps_;
};

inline StateVector zero_state(std::size_t n_wires) { return StateVector(n_wires); }

inline StateVector apply_gate(StateVector state, const Gate& gate) {
  state.apply(gate);
  return state;
}

inline double expectation_pauli_z(const StateVector& state, std::size_t wire) {
  return state.expectation_z(wire);
}

}  // namespace equate
