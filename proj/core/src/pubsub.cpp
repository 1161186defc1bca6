#include "fediot/pubsub.hpp"

#include <algorithm>

#include "fediot/error.hpp"

namespace fediot::transport {

bool topic_matches(std::string_view filter, std::string_view topic) {
  while (true) {
    const auto fslash = filter.find('/');
    const auto tslash = topic.find('/');
    const std::string_view flevel = filter.substr(0, fslash);
    const std::string_view tlevel = topic.substr(0, tslash);
    if (flevel == "#") return true;
    if (flevel != "+" && flevel != tlevel) return false;
    const bool fend = fslash == std::string_view::npos;
    const bool tend = tslash == std::string_view::npos;
    if (fend || tend) {
      // "a/#" also matches "a" itself.
      return fend && tend ? true : (tend && filter.substr(fslash + 1) == "#");
    }
    filter.remove_prefix(fslash + 1);
    topic.remove_prefix(tslash + 1);
  }
}

std::string server_topic(std::string_view run_id, MsgType type) {
  std::string t = "fediot/";
  t.append(run_id).append("/server/").append(to_string(type));
  return t;
}

std::string client_topic(std::string_view run_id, std::string_view client_id, MsgType type) {
  std::string t = "fediot/";
  t.append(run_id).append("/client/").append(client_id).append("/").append(to_string(type));
  return t;
}

void MessageQueue::push(Envelope env) {
  {
    std::lock_guard lock(mu_);
    items_.push_back(std::move(env));
  }
  cv_.notify_one();
}

std::optional<Envelope> MessageQueue::try_pop() {
  std::lock_guard lock(mu_);
  if (items_.empty()) return std::nullopt;
  Envelope e = std::move(items_.front());
  items_.pop_front();
  return e;
}

std::optional<Envelope> MessageQueue::pop_for(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
  if (items_.empty()) return std::nullopt;
  Envelope e = std::move(items_.front());
  items_.pop_front();
  return e;
}

void MessageQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool MessageQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

// ---- loopback ----

namespace {

struct LoopbackEndpoint {
  MessageQueue queue;
  std::vector<std::string> filters;  // guarded by Hub::mu
};

}  // namespace

struct LoopbackTransport::Hub {
  std::mutex mu;
  std::vector<std::weak_ptr<LoopbackEndpoint>> endpoints;
};

namespace {

class LoopbackConnection : public Connection {
 public:
  LoopbackConnection(std::string name, std::shared_ptr<LoopbackTransport::Hub> hub)
      : Connection(std::move(name)), hub_(std::move(hub)), self_(std::make_shared<LoopbackEndpoint>()) {
    std::lock_guard lock(hub_->mu);
    hub_->endpoints.push_back(self_);
  }

  void subscribe(const std::string& filter) override {
    std::lock_guard lock(hub_->mu);
    self_->filters.push_back(filter);
  }

  void publish(Envelope env) override {
    if (env.topic.empty()) throw TransportError("publish: empty topic");
    env.received_at = std::chrono::steady_clock::now();
    count_sent(frame_size(env));
    std::lock_guard lock(hub_->mu);
    std::erase_if(hub_->endpoints, [](const auto& w) { return w.expired(); });
    for (const auto& weak : hub_->endpoints) {
      auto ep = weak.lock();
      if (!ep) continue;
      const bool wanted = std::any_of(ep->filters.begin(), ep->filters.end(),
                                      [&](const std::string& f) { return topic_matches(f, env.topic); });
      if (wanted) ep->queue.push(env);
    }
  }

  std::optional<Envelope> try_receive() override { return counted(self_->queue.try_pop()); }

  std::optional<Envelope> receive(std::chrono::milliseconds timeout) override {
    return counted(self_->queue.pop_for(timeout));
  }

 private:
  std::optional<Envelope> counted(std::optional<Envelope> env) {
    if (env) count_received(frame_size(*env));
    return env;
  }

  std::shared_ptr<LoopbackTransport::Hub> hub_;
  std::shared_ptr<LoopbackEndpoint> self_;
};

class DelayedConnection : public Connection {
 public:
  DelayedConnection(std::unique_ptr<Connection> inner, std::chrono::microseconds delay)
      : Connection(inner->name()), inner_(std::move(inner)), delay_(delay) {}

  void subscribe(const std::string& filter) override { inner_->subscribe(filter); }
  void publish(Envelope env) override {
    std::this_thread::sleep_for(delay_);
    count_sent(frame_size(env));
    inner_->publish(std::move(env));
  }
  std::optional<Envelope> try_receive() override { return counted(inner_->try_receive()); }
  std::optional<Envelope> receive(std::chrono::milliseconds timeout) override {
    return counted(inner_->receive(timeout));
  }

 private:
  std::optional<Envelope> counted(std::optional<Envelope> env) {
    if (env) count_received(frame_size(*env));
    return env;
  }

  std::unique_ptr<Connection> inner_;
  std::chrono::microseconds delay_;
};

}  // namespace

LoopbackTransport::LoopbackTransport() : hub_(std::make_shared<Hub>()) {}
LoopbackTransport::~LoopbackTransport() = default;

std::unique_ptr<Connection> LoopbackTransport::connect(const std::string& client_name) {
  return std::make_unique<LoopbackConnection>(client_name, hub_);
}

std::unique_ptr<Connection> DelayedTransport::connect(const std::string& client_name) {
  return std::make_unique<DelayedConnection>(inner_.connect(client_name), delay_);
}

// ---- instrumentation ----

double CommStats::comm_ratio() const {
  const double total = comm_seconds + compute_seconds;
  return total > 0.0 ? comm_seconds / total : 0.0;
}

double CommStats::compute_ratio() const {
  const double total = comm_seconds + compute_seconds;
  return total > 0.0 ? compute_seconds / total : 0.0;
}

void measure_round(CommStats& stats, const RoundMarks& marks) {
  if (marks.train_end < marks.train_start || marks.upload_start < marks.train_end ||
      marks.global_receipt < marks.upload_start) {
    throw std::invalid_argument("measure_round: timestamps are not monotonic for round " +
                                std::to_string(marks.round));
  }
  using Seconds = std::chrono::duration<double>;
  RoundTiming rt;
  rt.round = marks.round;
  rt.compute_seconds = Seconds(marks.train_end - marks.train_start).count();
  const double interval = Seconds(marks.global_receipt - marks.upload_start).count();
  if (marks.server_aggregation_seconds >= 0.0) {
    rt.aggregation_seconds = std::min(marks.server_aggregation_seconds, interval);
  }
  rt.comm_seconds = interval - rt.aggregation_seconds;
  rt.bytes_up = marks.bytes_up;
  rt.bytes_down = marks.bytes_down;

  stats.compute_seconds += rt.compute_seconds;
  stats.comm_seconds += rt.comm_seconds;
  stats.aggregation_seconds += rt.aggregation_seconds;
  stats.bytes_up += rt.bytes_up;
  stats.bytes_down += rt.bytes_down;
  stats.per_round.push_back(rt);
}

}  // namespace fediot::transport
