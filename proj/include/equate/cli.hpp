#pragma once

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "equate/circuit_io.hpp"
#include "equate/server.hpp"
#include "equate/sweep.hpp"
#include "equate/telemetry.hpp"
#include "equate/trainer.hpp"

namespace equate::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

inline constexpr const char* kRunDirEnv = "EQUATE_RUN_DIR";
inline constexpr int kDefaultPort = 8321;

inline std::atomic<bool>& interrupted() {
  static std::atomic<bool> flag{false};
  return flag;
}

extern "C" inline void on_interrupt(int) { interrupted().store(true); }

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

struct TrainOptions {
  TrainConfig config;
  std::optional<std::string> circuit_path;
  std::optional<std::string> run_dir;
  std::string host = "127.0.0.1";
  int port = kDefaultPort;
  bool serve = true;
  double linger_seconds = 0.0;
};

struct SweepOptions {
  std::vector<std::size_t> wires{2, 4, 6, 8, 10};
  std::size_t layers = 8;
  std::size_t samples = 200;
  std::uint64_t seed = 7;
  std::string out = "sweep.csv";
};

struct ReplayOptions {
  std::string log_path;
  std::string host = "127.0.0.1";
  int port = kDefaultPort;
  bool serve = true;
  double serve_seconds = 0.0;  // 0 = until interrupted
};

struct ValidateOptions {
  std::string path;
  bool json = false;
};

inline std::string make_run_id(std::uint64_t seed) {
  const auto t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&t));
  return std::string("run-") + buf + "-s" + std::to_string(seed);
}

inline std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Waits until `seconds` elapse (0 = forever) or an interrupt arrives.
inline void wait_or_interrupt(double seconds) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (!interrupted().load()) {
    if (seconds > 0.0 && std::chrono::steady_clock::now() >= deadline) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

inline int cmd_train(const TrainOptions& opt, Streams io = {}) {
  std::optional<CircuitSpec> circuit;
  if (opt.circuit_path) {
    const auto text = read_file(*opt.circuit_path);
    if (!text) {
      io.err << "error: cannot read circuit file " << *opt.circuit_path << '\n';
      return kUsageError;
    }
    try {
      circuit = parse_circuit_file(*text);
    } catch (const ParseError& e) {
      io.err << "error: " << *opt.circuit_path << ": " << e.what() << '\n';
      return kUsageError;
    }
  }

  const std::string run_id = make_run_id(opt.config.seed);
  std::filesystem::path run_dir;
  if (opt.run_dir) {
    run_dir = *opt.run_dir;
  } else if (const char* env = std::getenv(kRunDirEnv); env && *env) {
    run_dir = env;
  } else {
    run_dir = std::filesystem::path("runs") / run_id;
  }

  EventStream stream;
  Recorder recorder(stream, run_dir / "events.jsonl", [&](const std::string& m) { io.err << "telemetry: " << m << '\n'; });

  std::optional<Engine> engine;
  try {
    engine.emplace(opt.config, circuit, &recorder);
  } catch (const ConfigError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const CircuitError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    RunStatus status;
    status.run_id = run_id;
    status.threshold = opt.config.threshold;
    FlushTimer timer(stream, std::chrono::duration<double>(opt.config.stream_interval_seconds));
    std::optional<LiveServer> server;
    if (opt.serve) {
      server.emplace(stream, status, [&](double v) {
        const double applied = engine->monitor().set_threshold(v);
        status.threshold = applied;
        return applied;
      });
      const int port = server->start(opt.host, opt.port);
      io.out << "live stream: http://" << opt.host << ':' << port << "/events\n";
    }
    io.out << "run log: " << (run_dir / "events.jsonl").string() << '\n';

    std::size_t events = 0;
    const auto results = engine->run(
        [&](const EpochResult& r) {
          status.epoch = r.epoch;
          if (r.event) ++events;
        },
        [] { return interrupted().load(); });
    timer.stop();

    if (results.empty()) {
      io.err << "interrupted before the first epoch\n";
      return kRuntimeFailure;
    }
    const auto& last = results.back();
    char line[256];
    std::snprintf(line, sizeof line, "train: epochs=%zu final_train_loss=%.6f final_test_accuracy=%.4f plateau_events=%zu\n",
                  results.size(), last.train_loss, last.test_accuracy, events);
    io.out << line;
    if (recorder.io_errors() > 0) io.err << "warning: " << recorder.io_errors() << " run-log write failures\n";
    if (server && opt.linger_seconds > 0.0) wait_or_interrupt(opt.linger_seconds);
    return kOk;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

inline int cmd_sweep(const SweepOptions& opt, Streams io = {}) {
  SweepResult result;
  try {
    result = sweep_variance(opt.wires, opt.layers, opt.samples, opt.seed);
  } catch (const ConfigError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  std::ofstream csv(opt.out, std::ios::binary);
  if (!csv) {
    io.err << "error: cannot write " << opt.out << '\n';
    return kRuntimeFailure;
  }
  write_sweep_csv(csv, result);
  csv.close();
  for (const auto& r : result.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "n_wires=%zu variance=%.6e log10_variance=%.4f\n", r.n_wires, r.variance,
                  r.log10_variance);
    io.out << line;
  }
  io.out << "csv: " << opt.out << '\n';
  try {
    const auto fit = fit_decay(result);
    if (fit.excluded_rows > 0) {
      io.err << "warning: " << fit.excluded_rows << " row(s) with zero variance excluded from the fit\n";
    }
    char line[128];
    std::snprintf(line, sizeof line, "slope=%.6f intercept=%.6f r_squared=%.6f\n", fit.slope, fit.intercept,
                  fit.r_squared);
    io.out << line;
    return kOk;
  } catch (const FitError& e) {
    io.err << "fit error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

inline int cmd_replay(const ReplayOptions& opt, Streams io = {}) {
  if (!std::filesystem::exists(opt.log_path)) {
    io.err << "error: no such run log " << opt.log_path << '\n';
    return kUsageError;
  }
  RunLog log;
  try {
    log = read_run_log(opt.log_path);
  } catch (const IoError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  io.out << "replay: " << log.events.size() << " events";
  if (log.skipped > 0) io.out << ", skipped " << log.skipped << " malformed line(s)";
  io.out << '\n';
  if (!opt.serve) return kOk;

  try {
    EventStream stream;
    for (const auto& e : log.events) stream.append(e);
    stream.flush();
    RunStatus status;
    status.run_id = std::filesystem::path(opt.log_path).parent_path().filename().string();
    for (const auto& e : log.events) {
      status.epoch = std::max(status.epoch.load(), e.step);
      if (e.tag == tags::kThreshold) status.threshold = std::get<double>(e.value);
    }
    LiveServer server(stream, status, [](double) -> double {
      throw InputError("replay is read-only; threshold commands are not accepted");
    });
    const int port = server.start(opt.host, opt.port);
    io.out << "serving: http://" << opt.host << ':' << port << "/events\n" << std::flush;
    wait_or_interrupt(opt.serve_seconds);
    return kOk;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

inline nlohmann::json circuit_census(const CircuitSpec& spec) {
  std::map<std::string, std::size_t> gates;
  for (const auto& slot : spec.pqc) ++gates[std::string(to_string(slot.kind))];
  return {{"wires", spec.n_wires},
          {"parameters", spec.parameter_count()},
          {"gates", gates},
          {"measured_wires", spec.measured_wires},
          {"encoder", {{"scheme", "angle_ry"}, {"scale", spec.encoder.feature_scale}}}};
}

inline int cmd_validate(const ValidateOptions& opt, Streams io = {}) {
  const auto text = read_file(opt.path);
  if (!text) {
    io.err << "error: cannot read " << opt.path << '\n';
    return kUsageError;
  }
  CircuitSpec spec;
  try {
    spec = parse_circuit_file(*text);
  } catch (const ParseError& e) {
    if (opt.json) {
      io.out << nlohmann::json{{"valid", false}, {"line", e.line()}, {"error", e.what()}}.dump() << '\n';
    }
    io.err << "error: " << opt.path << ": " << e.what() << '\n';
    return kUsageError;
  }
  auto census = circuit_census(spec);
  if (opt.json) {
    census["valid"] = true;
    io.out << census.dump() << '\n';
    return kOk;
  }
  io.out << "wires: " << spec.n_wires << '\n' << "parameters: " << spec.parameter_count() << '\n' << "gates:";
  for (const auto& [kind, count] : census["gates"].items()) io.out << ' ' << kind << '=' << count.get<std::size_t>();
  io.out << "\nmeasured:";
  for (auto w : spec.measured_wires) io.out << ' ' << w;
  io.out << '\n';
  return kOk;
}

// Parses argv and dispatches. Usage errors exit with 2, --help with 0.
inline int main(int argc, char** argv, Streams io = {}) {
  CLI::App app{"Quantum classifier training engine with barren-plateau monitoring"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a variational classifier and monitor gradient variances");
  auto& cfg = train.config;
  train_cmd->add_option("--wires", cfg.n_wires, "Qubit count")->capture_default_str();
  train_cmd->add_option("--layers", cfg.n_layers, "Random layers")->capture_default_str();
  train_cmd->add_option("--rotations", cfg.rotations_per_layer, "Rotations per layer")->capture_default_str();
  train_cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--threshold", cfg.threshold, "Barren-plateau variance threshold")->capture_default_str();
  train_cmd->add_option("--dataset", cfg.dataset_size, "Synthetic dataset size (even)")->capture_default_str();
  train_cmd->add_option("--interval", cfg.stream_interval_seconds, "Live stream flush interval, seconds")
      ->capture_default_str();
  train_cmd->add_option("--seed", cfg.seed)->capture_default_str();
  train_cmd->add_option("--circuit", train.circuit_path, "Circuit file overriding the random layers");
  train_cmd->add_option("--run-dir", train.run_dir, std::string("Run directory (env ") + kRunDirEnv + ")");
  train_cmd->add_option("--host", train.host)->capture_default_str();
  train_cmd->add_option("--port", train.port, "Live server port, 0 = any")->capture_default_str();
  train_cmd->add_flag("!--no-server", train.serve, "Do not start the live server");
  train_cmd->add_option("--linger", train.linger_seconds, "Keep serving this many seconds after training");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Gradient variance versus qubit count");
  sweep_cmd->add_option("--wires", sweep.wires, "Comma-separated qubit counts")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--layers", sweep.layers)->capture_default_str();
  sweep_cmd->add_option("--samples", sweep.samples)->capture_default_str();
  sweep_cmd->add_option("--seed", sweep.seed)->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out, "CSV output path")->capture_default_str();

  ReplayOptions replay;
  auto* replay_cmd = app.add_subcommand("replay", "Serve a finished run log on the live endpoint");
  replay_cmd->add_option("log", replay.log_path, "events.jsonl")->required();
  replay_cmd->add_option("--host", replay.host)->capture_default_str();
  replay_cmd->add_option("--port", replay.port)->capture_default_str();
  replay_cmd->add_flag("!--no-serve", replay.serve, "Only parse and summarize the log");
  replay_cmd->add_option("--serve-seconds", replay.serve_seconds, "Stop serving after this long (0 = until Ctrl-C)");

  ValidateOptions validate;
  auto* validate_cmd = app.add_subcommand("validate", "Check a circuit file and print its gate census");
  validate_cmd->add_option("file", validate.path)->required();
  validate_cmd->add_flag("--json", validate.json, "Machine-readable census");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  if (*train_cmd) return cmd_train(train, io);
  if (*sweep_cmd) return cmd_sweep(sweep, io);
  if (*replay_cmd) return cmd_replay(replay, io);
  return cmd_validate(validate, io);
}

}  // namespace equate::cli
