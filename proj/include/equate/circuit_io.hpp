#pragma once

#include <charconv>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "equate/circuit.hpp"
#include "equate/error.hpp"

namespace equate {

// Line-oriented circuit description:
//
//   wires 4
//   encoder angle_ry scale 1.0
//   ry 0 p0
//   cnot 0 1
//   measure 0 1
//
// '#' starts a comment. `wires` must precede every other statement; the
// encoder line is optional (defaults to angle_ry scale 1.0).

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::optional<std::size_t> parse_index(std::string_view tok) {
  std::size_t v = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end || tok.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(std::string_view tok) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc{} || ptr != end || tok.empty()) return std::nullopt;
  return v;
}

// Shortest round-trip representation, always with a '.' or exponent.
inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

inline CircuitSpec parse_circuit_file(std::string_view text) {
  CircuitSpec spec;
  std::optional<std::size_t> wires;
  bool have_measure = false;
  std::map<std::size_t, std::size_t> param_lines;  // param index -> defining line
  std::size_t line_no = 0;
  std::size_t pos = 0;

  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;

    const std::string_view kw = tok[0];
    const auto need_wire = [&](std::string_view t) {
      const auto w = detail::parse_index(t);
      if (!w) throw ParseError(line_no, "expected a wire index, got '" + std::string(t) + "'");
      if (*w >= *wires) {
        throw ParseError(line_no, "wire " + std::to_string(*w) + " out of range for " +
                                      std::to_string(*wires) + " wires");
      }
      return *w;
    };
    if (kw != "wires" && !wires) throw ParseError(line_no, "'wires' must come first");

    if (kw == "wires") {
      if (wires) throw ParseError(line_no, "duplicate 'wires' statement");
      if (tok.size() != 2) throw ParseError(line_no, "usage: wires <n>");
      const auto n = detail::parse_index(tok[1]);
      if (!n || *n < 1 || *n > kMaxWires) throw ParseError(line_no, "wire count must be in [1, 20]");
      wires = *n;
      spec.n_wires = *n;
    } else if (kw == "encoder") {
      if (tok.size() != 4 || tok[1] != "angle_ry" || tok[2] != "scale") {
        throw ParseError(line_no, "usage: encoder angle_ry scale <float>");
      }
      const auto scale = detail::parse_real(tok[3]);
      if (!scale || !(*scale > 0.0)) throw ParseError(line_no, "encoder scale must be a positive number");
      spec.encoder = {EncoderScheme::AngleRY, *scale};
    } else if (kw == "rx" || kw == "ry" || kw == "rz") {
      if (tok.size() != 3) throw ParseError(line_no, "usage: " + std::string(kw) + " <wire> p<k>");
      const std::size_t wire = need_wire(tok[1]);
      const auto k = tok[2].size() > 1 && tok[2][0] == 'p' ? detail::parse_index(tok[2].substr(1)) : std::nullopt;
      if (!k) throw ParseError(line_no, "expected a parameter reference p<k>, got '" + std::string(tok[2]) + "'");
      if (param_lines.count(*k)) {
        throw ParseError(line_no, "duplicate parameter index p" + std::to_string(*k) + " (first used on line " +
                                      std::to_string(param_lines[*k]) + ")");
      }
      param_lines[*k] = line_no;
      const GateKind kind = kw == "rx" ? GateKind::RX : kw == "ry" ? GateKind::RY : GateKind::RZ;
      spec.pqc.push_back(PqcGateSlot::rotation(kind, wire, *k));
    } else if (kw == "cnot") {
      if (tok.size() != 3) throw ParseError(line_no, "usage: cnot <control> <target>");
      const std::size_t control = need_wire(tok[1]);
      const std::size_t target = need_wire(tok[2]);
      if (control == target) throw ParseError(line_no, "cnot control equals target");
      spec.pqc.push_back(PqcGateSlot::cnot(control, target));
    } else if (kw == "measure") {
      if (tok.size() < 2) throw ParseError(line_no, "usage: measure <wire> [<wire> ...]");
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const std::size_t w = need_wire(tok[i]);
        for (auto m : spec.measured_wires) {
          if (m == w) throw ParseError(line_no, "wire " + std::to_string(w) + " measured twice");
        }
        spec.measured_wires.push_back(w);
      }
      have_measure = true;
    } else {
      throw ParseError(line_no, "unknown statement '" + std::string(kw) + "'");
    }
  }

  if (!wires) throw ParseError(line_no, "missing 'wires' statement");
  if (!have_measure) throw ParseError(line_no, "missing 'measure' statement");
  std::size_t expected = 0;
  for (const auto& [k, line] : param_lines) {
    if (k != expected) {
      throw ParseError(line, "parameter p" + std::to_string(k) + " leaves a gap: p" + std::to_string(expected) +
                                 " is never defined");
    }
    ++expected;
  }
  return spec;
}

inline std::string serialize_circuit(const CircuitSpec& spec) {
  std::ostringstream out;
  out << "wires " << spec.n_wires << '\n';
  out << "encoder angle_ry scale " << detail::format_real(spec.encoder.feature_scale) << '\n';
  for (const auto& slot : spec.pqc) {
    switch (slot.kind) {
      case GateKind::RX: out << "rx "; break;
      case GateKind::RY: out << "ry "; break;
      case GateKind::RZ: out << "rz "; break;
      case GateKind::CNOT: out << "cnot " << *slot.control << ' ' << slot.target << '\n'; continue;
      case GateKind::Hadamard: throw CircuitError("Hadamard is not a PQC gate");
    }
    out << slot.target << " p" << *slot.param_index << '\n';
  }
  out << "measure";
  for (auto w : spec.measured_wires) out << ' ' << w;
  out << '\n';
  return out.str();
}

}  // namespace equate
