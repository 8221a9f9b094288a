#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "equate/error.hpp"
#include "equate/telemetry.hpp"

namespace equate {

// Live state published on GET /status.
struct RunStatus {
  std::string run_id;
  std::atomic<std::size_t> epoch{0};
  std::atomic<double> threshold{0.0};
};

// Applies a threshold command and returns the acknowledged value; throws
// (any std::exception) to reject it.
using ThresholdCommand = std::function<double(double)>;

inline std::string sse_message(const TelemetryEvent& e) { return "data: " + to_jsonl(e) + "\n\n"; }

inline std::string sse_gap_message(std::size_t dropped_batches) {
  return "event: gap\ndata: {\"dropped_batches\":" + std::to_string(dropped_batches) + "}\n\n";
}

// HTTP front end for one run:
//   GET  /events   server-sent events, replay-then-tail, one JSON event per message
//   GET  /status   {"run_id", "epoch", "threshold", "connected_consumers"}
//   POST /command  {"set_threshold": <float>} -> 200 {"threshold": x} | 400 {"error": ...}
class LiveServer {
 public:
  LiveServer(EventStream& stream, RunStatus& status, ThresholdCommand on_threshold)
      : stream_(stream), status_(status), on_threshold_(std::move(on_threshold)) {
    install_routes();
  }
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;
  ~LiveServer() { stop(); }

  // Binds and starts serving on a background thread. Port 0 picks a free
  // port. Returns the bound port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    stream_.close_all();
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  void install_routes() {
    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json j{{"run_id", status_.run_id},
                       {"epoch", status_.epoch.load()},
                       {"threshold", status_.threshold.load()},
                       {"connected_consumers", stream_.consumer_count()}};
      res.set_content(j.dump(), "application/json");
    });

    server_.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
      const auto reject = [&](const std::string& why) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", why}}.dump(), "application/json");
      };
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("set_threshold") ||
          !body["set_threshold"].is_number()) {
        return reject("expected {\"set_threshold\": <number>}");
      }
      try {
        const double applied = on_threshold_(body["set_threshold"].get<double>());
        res.set_content(nlohmann::json{{"threshold", applied}}.dump(), "application/json");
      } catch (const std::exception& e) {
        reject(e.what());
      }
    });

    server_.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = stream_.subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            auto delivery = sub->next(std::chrono::milliseconds(250));
            if (!delivery) {
              if (sub->closed() || stopping_) {
                sink.done();
                return true;
              }
              const std::string keepalive = ": keepalive\n\n";
              return sink.write(keepalive.data(), keepalive.size());
            }
            std::string chunk;
            if (delivery->dropped_batches > 0) chunk += sse_gap_message(delivery->dropped_batches);
            for (const auto& e : *delivery->events) chunk += sse_message(e);
            return sink.write(chunk.data(), chunk.size());
          },
          [sub](bool) { sub->close(); });
    });
  }

  EventStream& stream_;
  RunStatus& status_;
  ThresholdCommand on_threshold_;
  httplib::Server server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;
};

}  // namespace equate
