#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "equate/error.hpp"

namespace equate {

enum class EventKind { Scalar, Text };

struct TelemetryEvent {
  EventKind kind = EventKind::Scalar;
  std::string tag;
  std::size_t step = 0;
  std::variant<double, std::string> value = 0.0;
  double wall_time = 0.0;

  bool operator==(const TelemetryEvent&) const = default;

  static TelemetryEvent scalar(std::string tag, std::size_t step, double value, double wall_time) {
    return {EventKind::Scalar, std::move(tag), step, value, wall_time};
  }
  static TelemetryEvent text(std::string tag, std::size_t step, std::string value, double wall_time) {
    return {EventKind::Text, std::move(tag), step, std::move(value), wall_time};
  }
};

namespace tags {
inline constexpr std::string_view kTrainLoss = "train_loss";
inline constexpr std::string_view kTestAccuracy = "test_accuracy";
inline constexpr std::string_view kModelFeedback = "model_feedback";
inline constexpr std::string_view kThreshold = "threshold";
inline constexpr std::string_view kVariancePrefix = "bp_variance.";
inline constexpr std::string_view kParamPrefix = "bp_variance.param.";
}  // namespace tags

inline double unix_now() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

inline bool is_valid_tag(std::string_view tag) {
  if (tag == tags::kTrainLoss || tag == tags::kTestAccuracy || tag == tags::kModelFeedback ||
      tag == tags::kThreshold || tag == "bp_variance.RX" || tag == "bp_variance.RY" || tag == "bp_variance.RZ") {
    return true;
  }
  if (tag.substr(0, tags::kParamPrefix.size()) != tags::kParamPrefix) return false;
  const auto digits = tag.substr(tags::kParamPrefix.size());
  if (digits.empty()) return false;
  for (char c : digits) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

inline bool is_valid(const TelemetryEvent& e) {
  if (!is_valid_tag(e.tag) || !std::isfinite(e.wall_time)) return false;
  if (e.kind == EventKind::Scalar) {
    const auto* v = std::get_if<double>(&e.value);
    return v && std::isfinite(*v);
  }
  return std::holds_alternative<std::string>(e.value);
}

// Field order is part of the log format: kind, tag, step, value, wall_time.
inline nlohmann::ordered_json to_json(const TelemetryEvent& e) {
  nlohmann::ordered_json j;
  j["kind"] = e.kind == EventKind::Scalar ? "scalar" : "text";
  j["tag"] = e.tag;
  j["step"] = e.step;
  if (e.kind == EventKind::Scalar) {
    j["value"] = std::get<double>(e.value);
  } else {
    j["value"] = std::get<std::string>(e.value);
  }
  j["wall_time"] = e.wall_time;
  return j;
}

inline std::optional<TelemetryEvent> from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 5) return std::nullopt;
  for (const char* key : {"kind", "tag", "step", "value", "wall_time"}) {
    if (!j.contains(key)) return std::nullopt;
  }
  const auto& kind = j["kind"];
  if (!kind.is_string() || !j["tag"].is_string() || !j["step"].is_number_unsigned() ||
      !j["wall_time"].is_number()) {
    return std::nullopt;
  }
  TelemetryEvent e;
  e.tag = j["tag"].get<std::string>();
  e.step = j["step"].get<std::size_t>();
  e.wall_time = j["wall_time"].get<double>();
  if (kind == "scalar" && j["value"].is_number()) {
    e.kind = EventKind::Scalar;
    e.value = j["value"].get<double>();
  } else if (kind == "text" && j["value"].is_string()) {
    e.kind = EventKind::Text;
    e.value = j["value"].get<std::string>();
  } else {
    return std::nullopt;
  }
  if (!is_valid(e)) return std::nullopt;
  return e;
}

inline std::string to_jsonl(const TelemetryEvent& e) {
  return to_json(e).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

inline std::optional<TelemetryEvent> parse_jsonl(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return std::nullopt;
  return from_json(j);
}

struct RunLog {
  std::vector<TelemetryEvent> events;
  std::size_t skipped = 0;
};

inline RunLog read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read run log " + path.string());
  RunLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (auto e = parse_jsonl(line)) {
      log.events.push_back(std::move(*e));
    } else {
      ++log.skipped;
    }
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  return log;
}

// ---------------------------------------------------------------------------
// Live distribution.

using EventBatch = std::shared_ptr<const std::vector<TelemetryEvent>>;

struct Delivery {
  std::size_t dropped_batches = 0;  // batches lost to overflow before this one
  EventBatch events;
};

// One live consumer. Holds a bounded queue of batches; when the queue is full
// the oldest batch is dropped and the loss is reported with the next delivery.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  // Waits up to `timeout` for the next batch. Returns nullopt on timeout or
  // once the subscription is closed and drained.
  std::optional<Delivery> next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    Delivery d{dropped_, std::move(queue_.front())};
    queue_.pop_front();
    dropped_ = 0;
    return d;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  std::size_t queued() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

  void push(EventBatch batch) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      if (queue_.size() >= capacity_) {
        queue_.pop_front();
        ++dropped_;
      }
      queue_.push_back(std::move(batch));
    }
    cv_.notify_one();
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<EventBatch> queue_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

// The in-memory run buffer plus its live consumers. append() is called by the
// producer; flush() hands everything appended since the previous flush to each
// subscriber as one batch. A new subscriber first receives the flushed history
// as a single batch, then every later delta (replay-then-tail).
class EventStream {
 public:
  explicit EventStream(std::size_t queue_capacity = 64) : capacity_(queue_capacity) {}

  std::size_t append(TelemetryEvent event) {
    std::lock_guard lock(mutex_);
    history_.push_back(std::move(event));
    return history_.size() - 1;
  }

  std::vector<TelemetryEvent> flush() {
    std::vector<std::shared_ptr<Subscription>> targets;
    EventBatch batch;
    {
      std::lock_guard lock(mutex_);
      if (flushed_ == history_.size()) return {};
      batch = std::make_shared<const std::vector<TelemetryEvent>>(history_.begin() + flushed_, history_.end());
      flushed_ = history_.size();
      targets = live_subscribers_locked();
      // Deliver while holding the lock so a concurrent subscribe() cannot
      // observe this batch twice or miss it.
      for (auto& s : targets) s->push(batch);
    }
    return *batch;
  }

  std::shared_ptr<Subscription> subscribe() {
    auto sub = std::make_shared<Subscription>(capacity_);
    std::lock_guard lock(mutex_);
    if (flushed_ > 0) {
      sub->push(std::make_shared<const std::vector<TelemetryEvent>>(history_.begin(), history_.begin() + flushed_));
    }
    subscribers_.push_back(sub);
    return sub;
  }

  std::size_t consumer_count() const {
    std::lock_guard lock(mutex_);
    return live_subscribers_locked().size();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return history_.size();
  }

  std::vector<TelemetryEvent> snapshot() const {
    std::lock_guard lock(mutex_);
    return history_;
  }

  void close_all() {
    std::lock_guard lock(mutex_);
    for (auto& s : live_subscribers_locked()) s->close();
  }

 private:
  std::vector<std::shared_ptr<Subscription>> live_subscribers_locked() const {
    std::vector<std::shared_ptr<Subscription>> live;
    std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& w) {
      auto s = w.lock();
      if (!s || s->closed()) return true;
      live.push_back(std::move(s));
      return false;
    });
    return live;
  }

  mutable std::mutex mutex_;
  std::vector<TelemetryEvent> history_;
  std::size_t flushed_ = 0;
  mutable std::vector<std::weak_ptr<Subscription>> subscribers_;
  std::size_t capacity_;
};

// Calls EventStream::flush() every `interval` on its own thread, and once
// more when stopped.
class FlushTimer {
 public:
  FlushTimer(EventStream& stream, std::chrono::duration<double> interval)
      : stream_(stream), interval_(std::chrono::duration_cast<std::chrono::nanoseconds>(interval)) {
    if (interval_.count() <= 0) throw ConfigError("stream interval must be positive");
    thread_ = std::thread([this] { loop(); });
  }
  FlushTimer(const FlushTimer&) = delete;
  FlushTimer& operator=(const FlushTimer&) = delete;
  ~FlushTimer() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    stream_.flush();
  }

 private:
  void loop() {
    std::unique_lock lock(mutex_);
    while (!stopping_) {
      if (cv_.wait_for(lock, interval_, [&] { return stopping_; })) break;
      lock.unlock();
      stream_.flush();
      lock.lock();
    }
  }

  EventStream& stream_;
  std::chrono::nanoseconds interval_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

// ---------------------------------------------------------------------------
// Recording.

class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual std::size_t record(const TelemetryEvent& event) = 0;
};

// Write-through recorder: every valid event is appended to the stream buffer
// and to `<run_dir>/events.jsonl` before record() returns. File errors are
// reported to the error handler and counted; they never throw, so a broken
// disk does not stop training.
class Recorder : public EventSink {
 public:
  using ErrorHandler = std::function<void(const std::string&)>;

  Recorder(EventStream& stream, std::optional<std::filesystem::path> log_path,
           ErrorHandler on_error = default_error_handler)
      : stream_(stream), path_(std::move(log_path)), on_error_(std::move(on_error)) {
    if (!path_) return;
    std::error_code ec;
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path(), ec);
    file_.open(*path_, std::ios::out | std::ios::app | std::ios::binary);
    if (!file_) report_error("cannot open run log " + path_->string());
  }

  // Throws InputError for invalid events (unknown tag, non-finite scalar).
  std::size_t record(const TelemetryEvent& event) override {
    if (!is_valid(event)) throw InputError("invalid telemetry event for tag '" + event.tag + "'");
    if (path_) {
      if (file_) {
        file_ << to_jsonl(event) << '\n';
        file_.flush();
      }
      if (!file_) report_error("write to " + path_->string() + " failed");
    }
    return stream_.append(event);
  }

  std::size_t io_errors() const noexcept { return io_errors_; }
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

  static void default_error_handler(const std::string& message) {
    std::cerr << "telemetry: " << message << '\n';
  }

 private:
  void report_error(const std::string& message) {
    if (io_errors_++ == 0 && on_error_) on_error_(message);
  }

  EventStream& stream_;
  std::optional<std::filesystem::path> path_;
  std::ofstream file_;
  ErrorHandler on_error_;
  std::size_t io_errors_ = 0;
};

}  // namespace equate
