#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "equate/circuit.hpp"
#include "equate/error.hpp"
#include "equate/gradients.hpp"
#include "equate/monitor.hpp"
#include "equate/random.hpp"
#include "equate/trainer.hpp"

namespace equate {

inline constexpr std::size_t kMaxSweepWires = 14;

// Shifted expectations carry round-off of order 1e-16 per gate, so gradient
// spreads below 1e-12 (variance 1e-24) cannot be told apart from zero. This
// happens when theta_0 is an RZ acting on the |0> input: the gradient is
// identically zero.
inline constexpr double kNumericalZeroVariance = 1e-24;

struct SweepRow {
  std::size_t n_wires = 0;
  std::size_t n_layers = 0;
  std::size_t n_param_samples = 0;
  double log10_variance = 0.0;  // -inf when the variance is exactly zero
  double variance = 0.0;        // Var[d<Z_0>/d theta_0] over parameter samples
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Gradient variance of random circuits versus width. For each n the circuit
// is random_layers(n, n_layers, n, seed + n); each sample draws fresh uniform
// parameters and evaluates d<Z_0>/d theta_0 at the all-zero input.
inline SweepResult sweep_variance(std::span<const std::size_t> n_range, std::size_t n_layers, std::size_t samples,
                                  std::uint64_t seed) {
  if (n_range.empty()) throw ConfigError("sweep: empty wire range");
  if (samples < 30) throw ConfigError("sweep: samples must be >= 30 for a stable variance estimate");
  std::size_t prev = 0;
  for (auto n : n_range) {
    if (n < 2) throw ConfigError("sweep: wire counts must be >= 2");
    if (n > kMaxSweepWires) throw ConfigError("sweep: wire counts must be <= 14");
    if (n <= prev) throw ConfigError("sweep: wire counts must be strictly ascending");
    prev = n;
  }

  SweepResult result;
  for (auto n : n_range) {
    const CircuitSpec spec = random_layers(n, n_layers, n, seed + n);
    const std::size_t n_params = spec.parameter_count();
    const std::vector<double> features(n, 0.0);
    Rng rng(derive_seed(seed + n, seeds::kParams));
    std::vector<double> grads(samples);
    ParameterVector params(n_params);
    for (std::size_t s = 0; s < samples; ++s) {
      for (auto& p : params) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      grads[s] = expectation_gradient(spec, params, features, 0, 0);
    }
    double v = variance(grads);
    if (v <= kNumericalZeroVariance) v = 0.0;
    result.rows.push_back(
        {n, n_layers, samples, v > 0.0 ? std::log10(v) : -std::numeric_limits<double>::infinity(), v});
  }
  return result;
}

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t excluded_rows = 0;  // rows dropped for zero variance
};

// Ordinary least squares of log10(variance) on n_wires.
inline DecayFit fit_decay(const SweepResult& result) {
  std::vector<double> xs, ys;
  DecayFit fit;
  for (const auto& row : result.rows) {
    if (row.variance > 0.0) {
      xs.push_back(static_cast<double>(row.n_wires));
      ys.push_back(std::log10(row.variance));
    } else {
      ++fit.excluded_rows;
    }
  }
  if (xs.size() < 3) {
    throw FitError("need at least 3 rows with positive variance, have " + std::to_string(xs.size()));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // A perfectly flat response is explained exactly by the fit.
  fit.r_squared = syy == 0.0 ? 1.0 : std::clamp((sxy * sxy) / (sxx * syy), 0.0, 1.0);
  return fit;
}

// CSV: n_wires,n_layers,samples,variance,log10_variance
inline void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "n_wires,n_layers,samples,variance,log10_variance\n";
  for (const auto& r : result.rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g\n", r.n_wires, r.n_layers, r.n_param_samples, r.variance,
                  r.log10_variance);
    out << buf;
  }
}

}  // namespace equate
