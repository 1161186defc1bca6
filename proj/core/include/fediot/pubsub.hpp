#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fediot/wire.hpp"

namespace fediot::transport {

/// MQTT-style filter match: '+' matches one level, a trailing '#' matches the rest.
bool topic_matches(std::string_view filter, std::string_view topic);

/// fediot/<run_id>/server/<msg_type>
std::string server_topic(std::string_view run_id, MsgType type);
/// fediot/<run_id>/client/<client_id>/<msg_type>
std::string client_topic(std::string_view run_id, std::string_view client_id, MsgType type);

/// Thread-safe FIFO of delivered envelopes.
class MessageQueue {
 public:
  void push(Envelope env);
  std::optional<Envelope> try_pop();
  std::optional<Envelope> pop_for(std::chrono::milliseconds timeout);
  /// Wakes blocked readers; later pops drain what is left, then return nullopt.
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Envelope> items_;
  bool closed_ = false;
};

/// One client's session with a broker. Inbound messages land in a single queue.
class Connection {
 public:
  virtual ~Connection() = default;

  virtual void subscribe(const std::string& filter) = 0;
  virtual void publish(Envelope env) = 0;
  virtual std::optional<Envelope> try_receive() = 0;
  /// Throws TransportError if the link is gone and nothing is queued.
  virtual std::optional<Envelope> receive(std::chrono::milliseconds timeout) = 0;

  const std::string& name() const { return name_; }
  /// Frame bytes published / delivered on this connection.
  std::uint64_t bytes_sent() const { return bytes_sent_.load(); }
  std::uint64_t bytes_received() const { return bytes_received_.load(); }

 protected:
  explicit Connection(std::string name) : name_(std::move(name)) {}
  void count_sent(std::size_t n) { bytes_sent_ += n; }
  void count_received(std::size_t n) { bytes_received_ += n; }

 private:
  std::string name_;
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::unique_ptr<Connection> connect(const std::string& client_name) = 0;
  /// True when publish() has delivered to every subscriber queue by the time it returns.
  virtual bool synchronous() const { return false; }
};

/// In-process broker. Delivery happens inside publish(), so a single thread can
/// drive every endpoint deterministically.
class LoopbackTransport : public Transport {
 public:
  LoopbackTransport();
  ~LoopbackTransport() override;
  std::unique_ptr<Connection> connect(const std::string& client_name) override;
  bool synchronous() const override { return true; }

  struct Hub;

 private:
  std::shared_ptr<Hub> hub_;
};

/// Sleeps `delay` inside every publish of the wrapped transport's connections.
class DelayedTransport : public Transport {
 public:
  DelayedTransport(Transport& inner, std::chrono::microseconds delay) : inner_(inner), delay_(delay) {}
  std::unique_ptr<Connection> connect(const std::string& client_name) override;
  bool synchronous() const override { return inner_.synchronous(); }

 private:
  Transport& inner_;
  std::chrono::microseconds delay_;
};

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds max_backoff{2000};
};

/// Connects to a Broker over TCP, retrying with bounded exponential backoff.
class TcpTransport : public Transport {
 public:
  TcpTransport(std::string host, std::uint16_t port, RetryPolicy retry = {})
      : host_(std::move(host)), port_(port), retry_(retry) {}
  std::unique_ptr<Connection> connect(const std::string& client_name) override;

 private:
  std::string host_;
  std::uint16_t port_;
  RetryPolicy retry_;
};

inline constexpr std::uint16_t kDefaultBrokerPort = 1883;

/// Length-prefixed framing broker: routes each published envelope to every
/// connection holding a matching subscription.
class Broker {
 public:
  Broker();
  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Binds and starts serving in background threads. Port 0 picks a free port.
  void start(const std::string& host, std::uint16_t port);
  void stop();
  std::uint16_t port() const { return port_; }
  std::size_t connection_count() const;

 private:
  struct Session;
  void accept_loop();
  void serve(std::shared_ptr<Session> session);
  void route(const Envelope& env, const std::vector<std::uint8_t>& frame);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> workers_;
};

/// Parses "host:port" (port optional).
std::pair<std::string, std::uint16_t> parse_address(const std::string& addr);

// ---- communication instrumentation ----

struct RoundTiming {
  int round = 0;
  double compute_seconds = 0.0;
  double comm_seconds = 0.0;
  double aggregation_seconds = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

struct CommStats {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double comm_seconds = 0.0;
  double compute_seconds = 0.0;
  /// Server aggregation time observed by the client; kept apart from comm.
  double aggregation_seconds = 0.0;
  std::vector<RoundTiming> per_round;

  double comm_ratio() const;
  double compute_ratio() const;
};

/// Timestamps from one completed round on one client.
struct RoundMarks {
  using Clock = std::chrono::steady_clock;
  int round = 0;
  Clock::time_point train_start;
  Clock::time_point train_end;
  Clock::time_point upload_start;
  Clock::time_point global_receipt;
  /// Negative when unknown; then the whole interval counts as communication.
  double server_aggregation_seconds = -1.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

/// compute += train interval; comm += (receipt - upload) - aggregation.
void measure_round(CommStats& stats, const RoundMarks& marks);

}  // namespace fediot::transport
