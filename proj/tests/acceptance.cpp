// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <regex>
#include <string>
#include <vector>

#include <httplib.h>

#include "equate/equate.hpp"
#include "oracle.hpp"

namespace {

using namespace equate;
using Clock = std::chrono::steady_clock;
constexpr double kPi = std::numbers::pi;

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("equate-acceptance-" + name + "-" + std::to_string(Clock::now().time_since_epoch().count()));
  std::filesystem::create_directories(p);
  return p;
}

void simulator_correctness() {
  const auto t0 = Clock::now();
  double worst_drift = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + uniform_index(rng, 10);
    StateVector s(n);
    for (int g = 0; g < 100; ++g) {
      const auto pick = uniform_index(rng, n > 1 ? 5 : 4);
      const std::size_t w = uniform_index(rng, n);
      const double theta = uniform(rng, -2 * kPi, 2 * kPi);
      switch (pick) {
        case 0: s.apply(Gate::rx(w, theta)); break;
        case 1: s.apply(Gate::ry(w, theta)); break;
        case 2: s.apply(Gate::rz(w, theta)); break;
        case 3: s.apply(Gate::hadamard(w)); break;
        default: s.apply(Gate::cnot(w, (w + 1 + uniform_index(rng, n - 1)) % n)); break;
      }
    }
    worst_drift = std::max(worst_drift, std::abs(s.norm() - 1.0));
  }

  double worst_cos = 0;
  Rng rng(12345);
  for (int i = 0; i < 100; ++i) {
    const double theta = uniform(rng, 0.0, 2 * kPi);
    StateVector s(1);
    s.apply(Gate::ry(0, theta));
    worst_cos = std::max(worst_cos, std::abs(s.expectation_z(0) - std::cos(theta)));
  }
  const double t = seconds_since(t0);
  report("simulator correctness", worst_drift < 1e-9 && worst_cos < 1e-10 && t < 10.0,
         fmt("max norm drift %.2e (<1e-9) over 200 seeds x 100 gates, max |<Z>-cos| %.2e (<1e-10) over 100 "
             "angles, %.2fs (<10s)",
             worst_drift, worst_cos, t));
}

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t checked = 0;
  for (std::uint64_t inst = 0; inst < 50; ++inst) {
    Rng rng(derive_seed(2024, inst));
    const std::size_t n = 1 + uniform_index(rng, 6);
    const std::size_t layers = 1 + uniform_index(rng, 3);
    const std::size_t rot = 1 + uniform_index(rng, n + 2);
    const auto spec = random_layers(n, layers, rot, rng());
    std::vector<double> params(spec.parameter_count()), features(n);
    for (auto& p : params) p = uniform(rng, 0, 2 * kPi);
    for (auto& f : features) f = uniform(rng, 0, kPi);
    const std::size_t wire = spec.measured_wires[uniform_index(rng, spec.measured_wires.size())];
    const std::size_t pos = static_cast<std::size_t>(
        std::find(spec.measured_wires.begin(), spec.measured_wires.end(), wire) - spec.measured_wires.begin());
    const auto f = [&](const std::vector<double>& p) { return oracle::forward(spec, p, features)[pos]; };
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double ps = expectation_gradient(spec, params, features, wire, k);
      const double fd = oracle::central_difference(f, params, k, 1e-5);
      worst = std::max(worst, std::abs(ps - fd));
      ++checked;
    }
  }
  const double t = seconds_since(t0);
  report("gradient correctness", worst <= 1e-6 && t < 60.0,
         fmt("max |param-shift - central diff(h=1e-5)| %.2e (<=1e-6) over 50 instances (%zu partials, <=6 wires), "
             "%.2fs (<60s)",
             worst, checked, t));
}

void barren_plateau_sweep() {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> ns{2, 4, 6, 8, 10};
  const auto result = sweep_variance(ns, 8, 200, 7);
  const double t = seconds_since(t0);
  std::string rows;
  for (const auto& r : result.rows) rows += fmt(" n=%zu:%.3e", r.n_wires, r.variance);
  try {
    const auto fit = fit_decay(result);
    const bool ok = fit.slope < 0 && std::abs(fit.slope) >= 0.15 && fit.r_squared >= 0.9 && t < 300.0;
    report("barren plateau sweep", ok,
           fmt("slope %.4f (<0, |slope|>=0.15), R^2 %.4f (>=0.9), %zu row(s) excluded, %.1fs (<300s);%s", fit.slope,
               fit.r_squared, fit.excluded_rows, t, rows.c_str()));
  } catch (const FitError& e) {
    report("barren plateau sweep", false, std::string("fit error: ") + e.what() + ";" + rows);
  }
}

CircuitSpec spec_with_kinds(const std::vector<GateKind>& kinds) {
  CircuitSpec spec;
  spec.n_wires = 1;
  spec.measured_wires = {0};
  for (std::size_t k = 0; k < kinds.size(); ++k) spec.pqc.push_back(PqcGateSlot::rotation(kinds[k], 0, k));
  return spec;
}

// Checks one report/event pair against oracle variances. Returns an empty
// string on success.
std::string check_monitor_case(const CircuitSpec& spec, const std::vector<GradientSample>& samples, double threshold,
                               std::size_t epoch, bool* borderline) {
  const auto kinds = spec.parameter_kinds();
  bool expect_fire = !kinds.empty();
  *borderline = false;
  std::vector<double> oracle_var;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    std::vector<double> col;
    for (const auto& s : samples) col.push_back(s.grads[k]);
    const double v = oracle::two_pass_variance(col);
    oracle_var.push_back(v);
    if (std::abs(v - threshold) <= 1e-9 * threshold) *borderline = true;
    expect_fire = expect_fire && v < threshold;
  }
  if (*borderline) return "";
  const auto rep = build_report(epoch, samples, spec, threshold);
  const auto ev = detect(rep);
  if (ev.has_value() != expect_fire) return fmt("epoch %zu: fired=%d expected=%d", epoch, ev.has_value(), expect_fire);
  if (!ev) return "";

  static const std::regex line_re(
      R"(epoch=(\d+) param_index=(\d+) param_type=(RX|RY|RZ) barren_plateau_value=(-?\d\.\de[+-]\d+))");
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t nl; (nl = ev->message.find('\n', start)) != std::string::npos; start = nl + 1) {
    lines.push_back(ev->message.substr(start, nl - start));
  }
  lines.push_back(ev->message.substr(start));
  if (lines.size() != kinds.size()) return "feedback line count mismatch";
  for (std::size_t k = 0; k < lines.size(); ++k) {
    std::smatch m;
    if (!std::regex_match(lines[k], m, line_re)) return "malformed feedback line: " + lines[k];
    if (std::stoul(m[1]) != epoch || std::stoul(m[2]) != k || m[3].str() != to_string(kinds[k])) {
      return "wrong feedback fields: " + lines[k];
    }
    const double shown = std::stod(m[4]);
    if (std::abs(shown - oracle_var[k]) > 0.051 * std::abs(oracle_var[k]) + 1e-300) {
      return "feedback value off: " + lines[k];
    }
  }
  return "";
}

void monitor_contract() {
  std::string failure;
  std::size_t cases = 0, fired = 0, borderline_skipped = 0;
  const std::vector<GateKind> kind_set{GateKind::RX, GateKind::RY, GateKind::RZ};

  // Exhaustive small cases: every below/above pattern for up to 4 params,
  // columns {-a, +a} have population variance a^2 exactly.
  for (std::size_t p = 1; p <= 4 && failure.empty(); ++p) {
    for (std::size_t mask = 0; mask < (1u << p) && failure.empty(); ++mask) {
      std::vector<GateKind> kinds;
      std::vector<GradientSample> samples(2);
      for (std::size_t k = 0; k < p; ++k) {
        kinds.push_back(kind_set[(k + mask) % 3]);
        const double a = (mask >> k) & 1 ? 1e-4 : 1e-2;  // a^2 = 1e-8 (below) or 1e-4 (above)
        samples[0].grads.push_back(-a);
        samples[1].grads.push_back(a);
      }
      bool b = false;
      failure = check_monitor_case(spec_with_kinds(kinds), samples, 1e-5, mask, &b);
      ++cases;
      fired += mask == (1u << p) - 1;
    }
  }

  Rng rng(99);
  std::size_t random_cases = 0;
  while (random_cases < 1000 && failure.empty()) {
    const std::size_t p = 1 + uniform_index(rng, 8);
    std::vector<GateKind> kinds;
    for (std::size_t k = 0; k < p; ++k) kinds.push_back(kind_set[uniform_index(rng, 3)]);
    const std::size_t n_samples = 1 + uniform_index(rng, 40);
    const double threshold = std::pow(10.0, uniform(rng, -8, -1));
    // Scales clustered around sqrt(threshold) so both outcomes are common.
    const bool all_small = uniform01(rng) < 0.5;
    std::vector<double> scale(p);
    for (auto& s : scale) s = std::sqrt(threshold) * std::pow(10.0, all_small ? uniform(rng, -3, -0.3) : uniform(rng, -3, 1.5));
    std::vector<double> offset(p);
    for (auto& o : offset) o = uniform(rng, -1, 1);
    std::vector<GradientSample> samples(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      samples[i].sample_id = i;
      for (std::size_t k = 0; k < p; ++k) samples[i].grads.push_back(offset[k] + scale[k] * standard_normal(rng));
    }
    bool b = false;
    const std::size_t epoch = uniform_index(rng, 500);
    failure = check_monitor_case(spec_with_kinds(kinds), samples, threshold, epoch, &b);
    if (b) {
      ++borderline_skipped;
      continue;
    }
    const auto rep = build_report(epoch, samples, spec_with_kinds(kinds), threshold);
    fired += rep.all_below;
    ++random_cases;
    ++cases;
  }
  report("monitor contract", failure.empty() && random_cases == 1000,
         fmt("%zu cases (%zu randomized, %zu fired, %zu borderline redrawn); feedback lines carry epoch, param_index, "
             "param_type, barren_plateau_value%s%s",
             cases, random_cases, fired, borderline_skipped, failure.empty() ? "" : "; first failure: ",
             failure.c_str()));
}

void end_to_end_training() {
  const auto t0 = Clock::now();
  const TrainConfig config;  // 4 wires, 2 layers, seed 7, 40 epochs
  const auto a = run(config);
  const double t = seconds_since(t0);
  const auto b = run(config);

  bool decreasing = a.size() >= 5;
  for (std::size_t i = 1; i < 5 && decreasing; ++i) decreasing = a[i].train_loss < a[i - 1].train_loss;
  bool identical = a.size() == b.size();
  for (std::size_t i = 0; i < a.size() && identical; ++i) {
    identical = a[i].train_loss == b[i].train_loss && a[i].test_accuracy == b[i].test_accuracy &&
                a[i].params_after == b[i].params_after && a[i].report.per_param.size() == b[i].report.per_param.size();
    for (std::size_t k = 0; k < a[i].report.per_param.size() && identical; ++k) {
      identical = a[i].report.per_param[k].variance == b[i].report.per_param[k].variance;
    }
  }
  const double acc = a.empty() ? 0.0 : a.back().test_accuracy;
  std::string losses;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, a.size()); ++i) losses += fmt(" %.4f", a[i].train_loss);
  report("end-to-end training", acc >= 0.9 && decreasing && identical && t < 120.0,
         fmt("final test accuracy %.3f (>=0.9), first 5 losses%s strictly decreasing=%s, bitwise reproducible=%s, "
             "%.2fs (<120s)",
             acc, losses.c_str(), decreasing ? "yes" : "no", identical ? "yes" : "no", t));
}

TelemetryEvent random_event(Rng& rng) {
  static const std::vector<std::string> tags{"train_loss", "test_accuracy", "threshold", "bp_variance.RX",
                                             "bp_variance.RY", "bp_variance.RZ"};
  const double wall = uniform(rng, 1.6e9, 1.9e9);
  const std::size_t step = uniform_index(rng, 100000);
  switch (uniform_index(rng, 3)) {
    case 0: {
      std::string s;
      const std::size_t len = uniform_index(rng, 64);
      for (std::size_t i = 0; i < len; ++i) {
        const auto r = uniform_index(rng, 10);
        if (r == 0) s += "\xc3\xa9";          // two-byte UTF-8
        else if (r == 1) s += "\n\t\"\\";
        else s += static_cast<char>(' ' + uniform_index(rng, 95));
      }
      return TelemetryEvent::text("model_feedback", step, s, wall);
    }
    case 1:
      return TelemetryEvent::scalar("bp_variance.param." + std::to_string(uniform_index(rng, 64)), step,
                                    std::ldexp(uniform(rng, 0.5, 1.0), static_cast<int>(uniform_index(rng, 2000)) - 1000),
                                    wall);
    default:
      return TelemetryEvent::scalar(tags[uniform_index(rng, tags.size())], step,
                                    (uniform01(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, uniform(rng, -300, 300)),
                                    wall);
  }
}

double recorder_throughput(const std::filesystem::path& path, bool stalled_consumer, std::size_t n) {
  std::filesystem::remove(path);
  EventStream stream(64);
  std::shared_ptr<Subscription> stalled;
  if (stalled_consumer) stalled = stream.subscribe();  // never read
  Recorder rec(stream, path);
  FlushTimer timer(stream, std::chrono::duration<double>(0.001));
  const auto ev = TelemetryEvent::scalar("train_loss", 0, 0.25, 1.7e9);
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n; ++i) rec.record(ev);
  const double t = seconds_since(t0);
  timer.stop();
  return static_cast<double>(n) / t;
}

void telemetry() {
  const auto dir = scratch_dir("telemetry");

  // Round-trip identity through the run log.
  Rng rng(4242);
  std::vector<TelemetryEvent> written;
  {
    EventStream stream;
    Recorder rec(stream, dir / "roundtrip.jsonl");
    for (int i = 0; i < 10000; ++i) {
      written.push_back(random_event(rng));
      rec.record(written.back());
    }
  }
  const auto log = read_run_log(dir / "roundtrip.jsonl");
  const bool roundtrip = log.skipped == 0 && log.events == written;

  // Late subscriber receives the full flushed history first, then the tail.
  EventStream stream;
  for (std::size_t i = 0; i < 500; ++i) stream.append(TelemetryEvent::scalar("train_loss", i, 1.0, 1.0));
  stream.flush();
  stream.append(TelemetryEvent::scalar("train_loss", 500, 1.0, 1.0));
  stream.flush();
  auto late = stream.subscribe();
  stream.append(TelemetryEvent::scalar("train_loss", 501, 1.0, 1.0));
  stream.flush();
  std::vector<std::size_t> steps;
  while (auto d = late->next(std::chrono::milliseconds(0))) {
    for (const auto& e : *d->events) steps.push_back(e.step);
  }
  bool full_history = steps.size() == 502;
  for (std::size_t i = 0; i < steps.size() && full_history; ++i) full_history = steps[i] == i;

  // Recorder throughput with and without a consumer that never reads.
  constexpr std::size_t kEvents = 20000;
  constexpr int kTrials = 9;
  recorder_throughput(dir / "warmup.jsonl", false, kEvents);
  std::vector<double> free_rates, stalled_rates;
  for (int i = 0; i < kTrials; ++i) {
    free_rates.push_back(recorder_throughput(dir / "free.jsonl", false, kEvents));
    stalled_rates.push_back(recorder_throughput(dir / "stalled.jsonl", true, kEvents));
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double free_rate = median(free_rates), stalled_rate = median(stalled_rates);
  const double ratio = stalled_rate / free_rate;
  std::filesystem::remove_all(dir);

  report("telemetry", roundtrip && full_history && std::abs(ratio - 1.0) <= 0.10,
         fmt("round-trip of 10000 random events %s (skipped %zu), late subscriber got %zu/502 in order %s, recorder "
             "throughput %.0f ev/s free vs %.0f ev/s with stalled consumer (ratio %.3f, within +-10%%)",
             roundtrip ? "identical" : "MISMATCH", log.skipped, steps.size(), full_history ? "yes" : "no", free_rate,
             stalled_rate, ratio));
}

void threshold_command() {
  const auto dir = scratch_dir("command");
  TrainConfig config;
  config.epochs = 6;
  constexpr std::size_t kCommandEpoch = 2;
  constexpr double kNew = 0.5;

  EventStream stream;
  Recorder rec(stream, dir / "events.jsonl");
  Engine engine(config, std::nullopt, &rec);
  RunStatus status;
  status.run_id = "acceptance";
  status.threshold = config.threshold;
  LiveServer server(stream, status, [&](double v) {
    const double applied = engine.monitor().set_threshold(v);
    status.threshold = applied;
    return applied;
  });
  const int port = server.start("127.0.0.1", 0);

  int http_status = 0;
  double acked = 0;
  engine.set_batch_observer([&](std::size_t epoch, std::size_t batch) {
    if (epoch != kCommandEpoch || batch != 1) return;
    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/command", fmt("{\"set_threshold\": %g}", kNew), "application/json");
    if (!res) return;
    http_status = res->status;
    acked = nlohmann::json::parse(res->body, nullptr, false).value("threshold", 0.0);
  });
  engine.run();
  server.stop();

  std::vector<double> thresholds(config.epochs, -1);
  std::vector<bool> feedback(config.epochs, false);
  for (const auto& e : read_run_log(dir / "events.jsonl").events) {
    if (e.step >= config.epochs) continue;
    if (e.tag == tags::kThreshold) thresholds[e.step] = std::get<double>(e.value);
    if (e.tag == tags::kModelFeedback) feedback[e.step] = true;
  }
  std::filesystem::remove_all(dir);

  bool ok = http_status == 200 && acked == kNew;
  std::string seen;
  for (std::size_t ep = 0; ep < config.epochs; ++ep) {
    const double want = ep <= kCommandEpoch ? config.threshold : kNew;
    ok = ok && thresholds[ep] == want && feedback[ep] == (ep > kCommandEpoch);
    seen += fmt(" %zu:%g%s", ep, thresholds[ep], feedback[ep] ? "*" : "");
  }
  report("threshold command", ok,
         fmt("POST /command set_threshold=%g during epoch %zu -> HTTP %d ack %g; per-epoch threshold in run log "
             "(* = plateau feedback):%s",
             kNew, kCommandEpoch, http_status, acked, seen.c_str()));
}

}  // namespace

int main() {
  simulator_correctness();
  gradient_correctness();
  barren_plateau_sweep();
  monitor_contract();
  end_to_end_training();
  telemetry();
  threshold_command();
  std::printf("%s: %d failure(s)\n", g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures);
  return g_failures == 0 ? 0 : 1;
}
