#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "fediot/bytes.hpp"
#include "fediot/error.hpp"
#include "fediot/pubsub.hpp"

namespace fediot::transport {

namespace {

bool write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

bool read_exact(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    const ssize_t n = ::recv(fd, out + off, len - off, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Returns nullopt on orderly or abrupt close.
std::optional<std::vector<std::uint8_t>> read_frame_body(int fd) {
  std::uint8_t prefix[4];
  if (!read_exact(fd, prefix, sizeof prefix)) return std::nullopt;
  std::uint32_t len = 0;
  std::memcpy(&len, prefix, sizeof len);
  if (len > kMaxFrameBytes) throw WireError(WireErrorCode::kMalformed, "oversized frame");
  std::vector<std::uint8_t> body(len);
  if (!read_exact(fd, body.data(), body.size())) return std::nullopt;
  return body;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

int dial(const std::string& host, std::uint16_t port, std::string& error) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
    error = ::gai_strerror(rc);
    return -1;
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) set_nodelay(fd);
  return fd;
}

class TcpConnection : public Connection {
 public:
  TcpConnection(std::string name, int fd) : Connection(std::move(name)), fd_(fd) {
    reader_ = std::thread([this] { read_loop(); });
  }

  ~TcpConnection() override {
    ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
  }

  void subscribe(const std::string& filter) override {
    Envelope env;
    env.topic = filter;
    env.msg_type = MsgType::kSubscribe;
    env.sender_id = name();
    send(env);
  }

  void publish(Envelope env) override {
    if (env.topic.empty()) throw TransportError("publish: empty topic");
    count_sent(frame_size(env));
    send(env);
  }

  std::optional<Envelope> try_receive() override { return inbox_.try_pop(); }

  std::optional<Envelope> receive(std::chrono::milliseconds timeout) override {
    auto env = inbox_.pop_for(timeout);
    if (!env && inbox_.closed()) throw TransportError(name() + ": connection to broker lost");
    return env;
  }

 private:
  void send(const Envelope& env) {
    const auto frame = encode_frame(env);
    std::lock_guard lock(write_mu_);
    if (!write_all(fd_, frame)) throw TransportError(name() + ": write to broker failed");
  }

  void read_loop() {
    try {
      while (auto body = read_frame_body(fd_)) {
        Envelope env = decode_frame_body(*body);
        env.received_at = std::chrono::steady_clock::now();
        count_received(body->size() + 4);
        inbox_.push(std::move(env));
      }
    } catch (const std::exception&) {
      // Malformed input from the broker ends the session like a disconnect.
    }
    inbox_.close();
  }

  int fd_;
  std::mutex write_mu_;
  MessageQueue inbox_;
  std::thread reader_;
};

}  // namespace

std::unique_ptr<Connection> TcpTransport::connect(const std::string& client_name) {
  auto backoff = retry_.initial_backoff;
  std::string error;
  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, retry_.max_backoff);
    }
    const int fd = dial(host_, port_, error);
    if (fd >= 0) return std::make_unique<TcpConnection>(client_name, fd);
  }
  throw TransportError("broker " + host_ + ":" + std::to_string(port_) + " unreachable after " +
                       std::to_string(retry_.max_retries + 1) + " attempts: " + error);
}

// ---- broker ----

struct Broker::Session {
  int fd = -1;
  std::mutex write_mu;
  std::mutex filter_mu;
  std::vector<std::string> filters;
  std::atomic<bool> alive{true};

  bool wants(std::string_view topic) {
    std::lock_guard lock(filter_mu);
    return std::any_of(filters.begin(), filters.end(),
                       [&](const std::string& f) { return topic_matches(f, topic); });
  }
};

Broker::Broker() = default;

Broker::~Broker() { stop(); }

void Broker::start(const std::string& host, std::uint16_t port) {
  if (running_) throw TransportError("broker already running");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError(std::string("broker socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw TransportError("broker: invalid IPv4 listen address " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw TransportError("broker: cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Broker::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (auto& s : sessions_) ::shutdown(s->fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  std::lock_guard lock(mu_);
  for (auto& s : sessions_) ::close(s->fd);
  sessions_.clear();
}

std::size_t Broker::connection_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(sessions_.begin(), sessions_.end(), [](const auto& s) { return s->alive.load(); }));
}

void Broker::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    auto session = std::make_shared<Session>();
    session->fd = fd;
    std::lock_guard lock(mu_);
    sessions_.push_back(session);
    workers_.emplace_back([this, session] { serve(session); });
  }
}

void Broker::serve(std::shared_ptr<Session> session) {
  try {
    while (auto body = read_frame_body(session->fd)) {
      Envelope env = decode_frame_body(*body);
      if (env.msg_type == MsgType::kSubscribe) {
        std::lock_guard lock(session->filter_mu);
        session->filters.push_back(env.topic);
      } else if (env.msg_type == MsgType::kUnsubscribe) {
        std::lock_guard lock(session->filter_mu);
        std::erase(session->filters, env.topic);
      } else {
        std::vector<std::uint8_t> frame(4 + body->size());
        const auto len = static_cast<std::uint32_t>(body->size());
        std::memcpy(frame.data(), &len, 4);
        std::copy(body->begin(), body->end(), frame.begin() + 4);
        route(env, frame);
      }
    }
  } catch (const std::exception&) {
    // Protocol violation: drop the session.
  }
  session->alive = false;
  ::shutdown(session->fd, SHUT_RDWR);
}

void Broker::route(const Envelope& env, const std::vector<std::uint8_t>& frame) {
  std::vector<std::shared_ptr<Session>> targets;
  {
    std::lock_guard lock(mu_);
    for (const auto& s : sessions_) {
      if (s->alive && s->wants(env.topic)) targets.push_back(s);
    }
  }
  for (const auto& s : targets) {
    std::lock_guard lock(s->write_mu);
    if (!write_all(s->fd, frame)) s->alive = false;
  }
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) return {addr, kDefaultBrokerPort};
  const std::string port_str = addr.substr(colon + 1);
  int port = 0;
  try {
    port = std::stoi(port_str);
  } catch (const std::exception&) {
    throw ConfigError("invalid broker address '" + addr + "'");
  }
  if (port < 0 || port > 65535) throw ConfigError("broker port out of range in '" + addr + "'");
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace fediot::transport
