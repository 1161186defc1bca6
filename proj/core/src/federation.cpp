#include "fediot/federation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "fediot/error.hpp"
#include "fediot/hash.hpp"
#include "fediot/protocol.hpp"

namespace fediot::fed {

using Clock = std::chrono::steady_clock;
using Seconds = std::chrono::duration<double>;
using transport::Envelope;
using transport::MsgType;

namespace {

double seconds_since(Clock::time_point t0) { return Seconds(Clock::now() - t0).count(); }

// Mini-batch Adam over `train`; returns the size-weighted mean batch loss of the last epoch.
double run_epochs(const nn::AutoencoderConfig& ae, ModelParams& params, nn::AdamState& adam, const Matrix& train,
                  double lr, int epochs, int batch_size, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(train.rows());
  std::vector<std::size_t> order(n);
  double last_loss = 0.0;
  Matrix batch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t len = std::min(n - start, static_cast<std::size_t>(batch_size));
      batch.resize(static_cast<Eigen::Index>(len), train.cols());
      for (std::size_t i = 0; i < len; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = train.row(static_cast<Eigen::Index>(order[start + i]));
      }
      auto lg = nn::backward(ae, params, batch);
      nn::adam_step(params, lg.grads, adam, lr);
      loss_sum += lg.loss * static_cast<double>(len);
    }
    last_loss = loss_sum / static_cast<double>(n);
  }
  return last_loss;
}

double mean_of(const nn::Vector& v) { return v.size() == 0 ? 0.0 : v.mean(); }

std::vector<double> to_std(const nn::Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix vstack(std::span<const Matrix* const> parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto* p : parts) {
    rows += p->rows();
    cols = p->cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

}  // namespace

void FederationConfig::validate() const {
  if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (total_rounds < 1) throw ConfigError("total_rounds must be >= 1");
  if (local_epochs < 0) throw ConfigError("local_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (schedule.total_rounds != total_rounds) throw ConfigError("schedule.total_rounds must equal total_rounds");
  if (!(schedule.eta_max > 0.0) || schedule.eta_min < 0.0 || schedule.eta_min > schedule.eta_max) {
    throw ConfigError("learning rate schedule needs 0 <= eta_min <= eta_max, eta_max > 0");
  }
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
}

std::string client_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "client-%02zu", index);
  return buf;
}

std::uint64_t client_round_seed(std::uint64_t run_seed, std::size_t device_index, int round) {
  return mix_seed(mix_seed(run_seed, device_index), static_cast<std::uint64_t>(round));
}

RoundUpdate local_train(const nn::AutoencoderConfig& ae, const ModelParams& global_params, const Matrix& train,
                        double lr, int epochs, int batch_size, std::uint64_t seed) {
  if (train.rows() == 0) throw DataError("local_train: empty training split");
  const auto t0 = Clock::now();
  RoundUpdate update;
  update.params = global_params;
  auto adam = nn::AdamState::fresh_for(update.params);
  try {
    if (epochs > 0) {
      update.local_loss = run_epochs(ae, update.params, adam, train, lr, epochs, batch_size, seed);
    } else {
      update.local_loss = mean_of(nn::reconstruction_errors(ae, update.params, train));
    }
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string("local training diverged: ") + e.what());
  }
  update.train_seconds = seconds_since(t0);
  return update;
}

ModelParams aggregate(std::span<const RoundUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  std::vector<const RoundUpdate*> sorted;
  sorted.reserve(updates.size());
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const RoundUpdate* a, const RoundUpdate* b) { return a->client_id < b->client_id; });

  const auto& first = *sorted.front();
  for (const auto* u : sorted) {
    if (!u->params.same_shape(first.params) || u->params.config_fingerprint != first.params.config_fingerprint) {
      throw std::invalid_argument("aggregate: update from " + u->client_id + " has a different shape");
    }
    if (u->round != first.round) {
      throw std::invalid_argument("aggregate: update from " + u->client_id + " is for round " +
                                  std::to_string(u->round) + ", expected " + std::to_string(first.round));
    }
  }
  // Pairwise sum in client_id order: identical inputs with power-of-two K stay bit-exact.
  std::vector<ModelParams> level;
  level.reserve(sorted.size());
  for (const auto* u : sorted) level.push_back(u->params);
  while (level.size() > 1) {
    std::vector<ModelParams> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      ModelParams sum = std::move(level[i]);
      for (std::size_t k = 0; k < sum.layers.size(); ++k) {
        sum.layers[k].weight += level[i + 1].layers[k].weight;
        sum.layers[k].bias += level[i + 1].layers[k].bias;
      }
      next.push_back(std::move(sum));
    }
    if (level.size() % 2) next.push_back(std::move(level.back()));
    level = std::move(next);
  }
  ModelParams mean = std::move(level.front());
  const auto count = static_cast<double>(sorted.size());
  for (auto& l : mean.layers) {
    l.weight /= count;
    l.bias /= count;
  }
  return mean;
}

GlobalThresholdReport global_threshold(const std::map<std::string, std::vector<double>>& per_client_mse,
                                       double alpha, std::size_t expected_clients) {
  if (per_client_mse.size() != expected_clients) {
    throw std::invalid_argument("global_threshold: " + std::to_string(per_client_mse.size()) + " of " +
                                std::to_string(expected_clients) + " clients reported");
  }
  std::vector<double> all;
  for (const auto& [client, scores] : per_client_mse) {
    if (scores.empty()) throw std::invalid_argument("global_threshold: empty MSE sequence from " + client);
    all.insert(all.end(), scores.begin(), scores.end());
  }
  // Sorting fixes the summation order, making tr independent of client order.
  std::sort(all.begin(), all.end());
  return {per_client_mse, anomaly::compute_threshold(all, alpha)};
}

Evaluation evaluate(const nn::AutoencoderConfig& ae, const ModelParams& model,
                    const anomaly::DetectionThreshold& threshold, const data::LabeledSet& test) {
  const auto scores = nn::reconstruction_errors(ae, model, test.features);
  const auto pred = anomaly::detect({scores.data(), static_cast<std::size_t>(scores.size())}, threshold);
  Evaluation ev;
  ev.cm = anomaly::confusion(pred, test.labels);
  ev.metrics = anomaly::metrics(ev.cm);
  return ev;
}

// ---- server ----

ServerManager::ServerManager(ServerOptions options, transport::Connection& conn,
                             std::vector<data::DeviceDataset> devices)
    : opt_(std::move(options)), conn_(conn), devices_(std::move(devices)) {
  opt_.fed.validate();
  if (devices_.size() != static_cast<std::size_t>(opt_.fed.n_clients)) {
    throw ConfigError("server has " + std::to_string(devices_.size()) + " device datasets for " +
                      std::to_string(opt_.fed.n_clients) + " clients");
  }
  global_ = nn::init_autoencoder(opt_.ae);
}

void ServerManager::start() {
  started_at_ = Clock::now();
  phase_deadline_ = started_at_ + opt_.registration_timeout;
  conn_.subscribe("fediot/" + opt_.run_id + "/client/#");
}

void ServerManager::publish(MsgType type, std::uint32_t round, std::vector<std::uint8_t> payload) {
  Envelope env;
  env.topic = transport::server_topic(opt_.run_id, type);
  env.msg_type = type;
  env.round = round;
  env.sender_id = "server";
  env.payload = std::move(payload);
  conn_.publish(std::move(env));
}

void ServerManager::handle(const Envelope& env) {
  switch (env.msg_type) {
    case MsgType::kRegister: on_register(env); break;
    case MsgType::kModelUpdate: on_model_update(env); break;
    case MsgType::kMseSequence: on_mse_sequence(env); break;
    default: break;  // not addressed to the server
  }
}

void ServerManager::tick() {
  if (phase_ == Phase::kDone || Clock::now() < phase_deadline_) return;
  std::ostringstream os;
  if (phase_ == Phase::kRegistering) {
    os << "registration timeout: " << clients_.size() << " of " << opt_.fed.n_clients
       << " clients registered (" << (opt_.fed.n_clients - static_cast<int>(clients_.size())) << " missing)";
    for (const auto& c : clients_) os << " " << c;
  } else {
    os << "round " << round_ << " timeout; missing reports from:";
    for (const auto& c : clients_) {
      const bool reported = phase_ == Phase::kTraining ? round_buffer_.contains(c) : mse_.contains(c);
      if (!reported) os << " " << c;
    }
  }
  throw TransportError(os.str());
}

void ServerManager::on_register(const Envelope& env) {
  const bool known = std::find(clients_.begin(), clients_.end(), env.sender_id) != clients_.end();
  if (!known) {
    if (phase_ != Phase::kRegistering) return;  // full participation, no late joiners
    clients_.push_back(env.sender_id);
  }
  publish(MsgType::kRegisterAck, 0, protocol::encode(protocol::RegisterAck{env.sender_id}));
  if (!known && clients_.size() == static_cast<std::size_t>(opt_.fed.n_clients)) {
    std::sort(clients_.begin(), clients_.end());
    assign_datasets();
    phase_ = Phase::kTraining;
    round_ = 0;
    broadcast_model(false, -1.0);
  }
}

void ServerManager::assign_datasets() {
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    protocol::DatasetAssign msg;
    msg.client_id = clients_[i];
    msg.device_index = static_cast<std::uint32_t>(i);
    msg.device_id = devices_[i].device_id;
    msg.train = devices_[i].train;
    msg.eval = devices_[i].eval;
    publish(MsgType::kDatasetAssign, 0, protocol::encode(msg));
  }
}

void ServerManager::broadcast_model(bool final_model, double aggregation_seconds) {
  protocol::GlobalModel msg;
  msg.lr = final_model ? 0.0 : nn::cosine_lr(opt_.fed.schedule, round_);
  msg.total_rounds = static_cast<std::uint32_t>(opt_.fed.total_rounds);
  msg.aggregation_seconds = aggregation_seconds;
  msg.final_model = final_model;
  msg.model = global_;
  round_started_at_ = Clock::now();
  phase_deadline_ = round_started_at_ + opt_.round_timeout;
  publish(MsgType::kGlobalModel, static_cast<std::uint32_t>(round_), protocol::encode(msg));
}

void ServerManager::on_model_update(const Envelope& env) {
  if (phase_ != Phase::kTraining || static_cast<int>(env.round) != round_) return;
  if (!std::binary_search(clients_.begin(), clients_.end(), env.sender_id)) return;
  if (round_buffer_.contains(env.sender_id)) return;  // at-least-once duplicate

  auto msg = protocol::decode_model_update(env.payload, opt_.ae.fingerprint());
  RoundUpdate u;
  u.client_id = env.sender_id;
  u.round = round_;
  u.params = std::move(msg.model);
  u.local_loss = msg.local_loss;
  u.train_seconds = msg.train_seconds;
  u.bytes_uploaded = transport::frame_size(env);
  round_buffer_.emplace(env.sender_id, std::move(u));
  if (round_buffer_.size() < clients_.size()) return;

  // Round barrier reached.
  std::vector<RoundUpdate> updates;
  updates.reserve(round_buffer_.size());
  for (auto& [id, update] : round_buffer_) updates.push_back(std::move(update));
  round_buffer_.clear();

  const auto agg_start = Clock::now();
  global_ = aggregate(updates);
  const double agg_seconds = seconds_since(agg_start);

  RoundRecord rec;
  rec.round = round_;
  rec.lr = nn::cosine_lr(opt_.fed.schedule, round_);
  rec.updates = updates.size();
  std::vector<std::string> senders;
  for (const auto& u : updates) {
    rec.mean_local_loss += u.local_loss / static_cast<double>(updates.size());
    senders.push_back(u.client_id);
  }
  std::sort(senders.begin(), senders.end());
  rec.distinct_senders = static_cast<std::size_t>(std::unique(senders.begin(), senders.end()) - senders.begin());
  rec.aggregation_seconds = agg_seconds;
  rec.wall_seconds = seconds_since(round_started_at_);

  ++round_;
  if (round_ < opt_.fed.total_rounds) {
    broadcast_model(false, agg_seconds);
  } else {
    phase_ = Phase::kThreshold;
    broadcast_model(true, agg_seconds);
  }

  // Diagnostics after the broadcast so clients never wait on them.
  double eval_sum = 0.0;
  Eigen::Index eval_rows = 0;
  for (const auto& d : devices_) {
    eval_sum += nn::reconstruction_errors(opt_.ae, global_, d.eval).sum();
    eval_rows += d.eval.rows();
  }
  rec.eval_loss = eval_rows > 0 ? eval_sum / static_cast<double>(eval_rows) : 0.0;
  result_.stats.rounds.push_back(rec);
}

void ServerManager::on_mse_sequence(const Envelope& env) {
  if (phase_ != Phase::kThreshold) return;
  if (!std::binary_search(clients_.begin(), clients_.end(), env.sender_id)) return;
  if (mse_.contains(env.sender_id)) return;
  auto msg = protocol::decode_mse_sequence(env.payload);
  mse_.emplace(env.sender_id, std::move(msg.scores));
  result_.stats.per_client[env.sender_id] = std::move(msg.comm);
  if (mse_.size() < clients_.size()) return;

  result_.threshold = global_threshold(mse_, opt_.fed.alpha, clients_.size());
  publish(MsgType::kGlobalThreshold, static_cast<std::uint32_t>(round_),
          protocol::encode(result_.threshold.tr_global));

  const auto test = data::build_global_testset(devices_);
  result_.evaluation = evaluate(opt_.ae, global_, result_.threshold.tr_global, test);
  result_.model = global_;

  // Seconds are per-client means; bytes are totals over clients.
  auto& comm = result_.stats.comm;
  const auto k = static_cast<double>(result_.stats.per_client.size());
  for (const auto& [id, c] : result_.stats.per_client) {
    comm.bytes_up += c.bytes_up;
    comm.bytes_down += c.bytes_down;
    comm.comm_seconds += c.comm_seconds / k;
    comm.compute_seconds += c.compute_seconds / k;
    comm.aggregation_seconds += c.aggregation_seconds / k;
    if (comm.per_round.size() < c.per_round.size()) comm.per_round.resize(c.per_round.size());
    for (std::size_t i = 0; i < c.per_round.size(); ++i) {
      auto& dst = comm.per_round[i];
      dst.round = c.per_round[i].round;
      dst.compute_seconds += c.per_round[i].compute_seconds / k;
      dst.comm_seconds += c.per_round[i].comm_seconds / k;
      dst.aggregation_seconds += c.per_round[i].aggregation_seconds / k;
      dst.bytes_up += c.per_round[i].bytes_up;
      dst.bytes_down += c.per_round[i].bytes_down;
    }
  }
  result_.stats.wall_seconds = seconds_since(started_at_);
  publish(MsgType::kDone, static_cast<std::uint32_t>(round_), {});
  phase_ = Phase::kDone;
}

FedResult ServerManager::result() const {
  if (phase_ != Phase::kDone) throw std::logic_error("ServerManager::result before completion");
  return result_;
}

// ---- client ----

ClientManager::ClientManager(ClientOptions options, transport::Connection& conn)
    : opt_(std::move(options)), conn_(conn) {
  if (opt_.client_id.empty()) throw ConfigError("client id must not be empty");
}

void ClientManager::publish(MsgType type, std::uint32_t round, std::vector<std::uint8_t> payload) {
  Envelope env;
  env.topic = transport::client_topic(opt_.run_id, opt_.client_id, type);
  env.msg_type = type;
  env.round = round;
  env.sender_id = opt_.client_id;
  env.payload = std::move(payload);
  conn_.publish(std::move(env));
}

void ClientManager::start() {
  conn_.subscribe("fediot/" + opt_.run_id + "/server/#");
  last_register_ = Clock::now();
  publish(MsgType::kRegister, 0, {});
}

void ClientManager::tick() {
  if (acked_ || done_) return;
  if (Clock::now() - last_register_ >= opt_.register_resend) {
    last_register_ = Clock::now();
    publish(MsgType::kRegister, 0, {});
  }
}

void ClientManager::handle(const Envelope& env) {
  switch (env.msg_type) {
    case MsgType::kRegisterAck:
      if (protocol::decode_register_ack(env.payload).client_id == opt_.client_id) acked_ = true;
      break;
    case MsgType::kDatasetAssign: {
      auto msg = protocol::decode_dataset_assign(env.payload);
      if (msg.client_id != opt_.client_id || train_) break;
      device_index_ = msg.device_index;
      device_id_ = msg.device_id;
      train_ = std::move(msg.train);
      eval_ = std::move(msg.eval);
      break;
    }
    case MsgType::kGlobalModel: on_global_model(env); break;
    case MsgType::kGlobalThreshold: threshold_ = protocol::decode_threshold(env.payload); break;
    case MsgType::kDone: done_ = true; break;
    default: break;
  }
}

void ClientManager::on_global_model(const Envelope& env) {
  const int round = static_cast<int>(env.round);
  if (round <= last_round_handled_) return;  // duplicate delivery
  const auto receipt = env.received_at == Clock::time_point{} ? Clock::now() : env.received_at;
  if (!train_) throw TransportError(opt_.client_id + ": global model arrived before dataset assignment");
  last_round_handled_ = round;
  auto msg = protocol::decode_global_model(env.payload, opt_.ae.fingerprint());

  if (pending_) {
    pending_->global_receipt = receipt;
    pending_->server_aggregation_seconds = msg.aggregation_seconds;
    transport::measure_round(comm_, *pending_);
    pending_.reset();
  }

  if (msg.final_model) {
    const auto scores = nn::reconstruction_errors(opt_.ae, msg.model, *eval_);
    protocol::MseSequence out{to_std(scores), comm_};
    publish(MsgType::kMseSequence, env.round, protocol::encode(out));
    return;
  }

  transport::RoundMarks marks;
  marks.round = round;
  marks.bytes_down = transport::frame_size(env);
  marks.train_start = Clock::now();
  auto update = local_train(opt_.ae, msg.model, *train_, msg.lr, opt_.fed.local_epochs, opt_.fed.batch_size,
                            client_round_seed(opt_.seed, device_index_, round));
  marks.train_end = Clock::now();

  protocol::ModelUpdate up{update.local_loss, update.train_seconds, std::move(update.params)};
  auto payload = protocol::encode(up);
  marks.upload_start = Clock::now();
  const auto sent_before = conn_.bytes_sent();
  publish(MsgType::kModelUpdate, env.round, std::move(payload));
  marks.bytes_up = conn_.bytes_sent() - sent_before;
  pending_ = marks;
}

// ---- drivers ----

FedResult run_feddetect(const FederationConfig& config, const nn::AutoencoderConfig& ae,
                        std::span<const data::DeviceDataset> devices, transport::Transport& transport,
                        std::uint64_t seed, const std::string& run_id) {
  config.validate();
  const auto k = static_cast<std::size_t>(config.n_clients);
  if (devices.size() != k) {
    throw ConfigError("run_feddetect: " + std::to_string(devices.size()) + " devices for K=" + std::to_string(k));
  }

  ServerOptions sopt;
  sopt.run_id = run_id;
  sopt.fed = config;
  sopt.ae = ae;
  auto server_conn = transport.connect("server");
  ServerManager server(sopt, *server_conn, {devices.begin(), devices.end()});

  std::vector<std::unique_ptr<transport::Connection>> conns;
  std::vector<std::unique_ptr<ClientManager>> clients;
  for (std::size_t i = 0; i < k; ++i) {
    ClientOptions copt;
    copt.run_id = run_id;
    copt.client_id = client_name(i);
    copt.fed = config;
    copt.ae = ae;
    copt.seed = seed;
    conns.push_back(transport.connect(copt.client_id));
    clients.push_back(std::make_unique<ClientManager>(copt, *conns.back()));
  }

  server.start();
  for (auto& c : clients) c->start();

  auto last_progress = Clock::now();
  constexpr auto kStallTimeout = std::chrono::seconds(120);
  auto all_done = [&] {
    return server.finished() &&
           std::all_of(clients.begin(), clients.end(), [](const auto& c) { return c->finished(); });
  };
  while (!all_done()) {
    bool progressed = false;
    while (auto env = server_conn->try_receive()) {
      server.handle(*env);
      progressed = true;
    }
    for (std::size_t i = 0; i < k; ++i) {
      while (auto env = conns[i]->try_receive()) {
        clients[i]->handle(*env);
        progressed = true;
      }
    }
    if (progressed) {
      last_progress = Clock::now();
      continue;
    }
    if (transport.synchronous()) throw TransportError("federation stalled: no deliverable messages");
    if (Clock::now() - last_progress > kStallTimeout) throw TransportError("federation stalled: no traffic for 120 s");
    server.tick();
    for (auto& c : clients) c->tick();
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
  return server.result();
}

void run_server_loop(ServerManager& server, transport::Connection& conn) {
  server.start();
  while (!server.finished()) {
    if (auto env = conn.receive(std::chrono::milliseconds(100))) server.handle(*env);
    server.tick();
  }
}

void run_client_loop(ClientManager& client, transport::Connection& conn, std::chrono::milliseconds idle_timeout) {
  client.start();
  auto last = Clock::now();
  while (!client.finished()) {
    if (auto env = conn.receive(std::chrono::milliseconds(100))) {
      client.handle(*env);
      last = Clock::now();
    } else if (Clock::now() - last > idle_timeout) {
      throw TransportError("client idle for too long waiting for the server");
    }
    client.tick();
  }
}

// ---- centralized baselines ----

ModelParams train_centralized(const nn::AutoencoderConfig& ae, const Matrix& train, const FederationConfig& config,
                              std::uint64_t seed, std::vector<double>* segment_loss) {
  config.validate();
  if (train.rows() == 0) throw DataError("centralized training: empty training split");
  ModelParams params = nn::init_autoencoder(ae);
  auto adam = nn::AdamState::fresh_for(params);
  for (int t = 0; t < config.total_rounds; ++t) {
    const double lr = nn::cosine_lr(config.schedule, t);
    const double loss = run_epochs(ae, params, adam, train, lr, config.local_epochs, config.batch_size,
                                   mix_seed(seed, 0xc100 + static_cast<std::uint64_t>(t)));
    if (segment_loss != nullptr) segment_loss->push_back(loss);
  }
  return params;
}

namespace {

CentralizedResult run_centralized(std::string label, const Matrix& train, const Matrix& eval,
                                  const data::LabeledSet& global_test, const FederationConfig& config,
                                  const nn::AutoencoderConfig& ae, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CentralizedResult r;
  r.label = std::move(label);
  r.model = train_centralized(ae, train, config, seed, &r.segment_loss);
  const auto scores = nn::reconstruction_errors(ae, r.model, eval);
  r.threshold = anomaly::compute_threshold({scores.data(), static_cast<std::size_t>(scores.size())}, config.alpha);
  r.evaluation = evaluate(ae, r.model, r.threshold, global_test);
  r.wall_seconds = seconds_since(t0);
  return r;
}

}  // namespace

CentralizedResult run_cl_single(const data::DeviceDataset& device, const data::LabeledSet& global_test,
                                const FederationConfig& config, const nn::AutoencoderConfig& ae, std::uint64_t seed) {
  return run_centralized(device.device_id, device.train, device.eval, global_test, config, ae, seed);
}

CentralizedResult run_cl_combined(std::span<const data::DeviceDataset> devices, const data::LabeledSet& global_test,
                                  const FederationConfig& config, const nn::AutoencoderConfig& ae, std::uint64_t seed) {
  if (devices.empty()) throw DataError("run_cl_combined: no devices");
  std::vector<const Matrix*> trains;
  std::vector<const Matrix*> evals;
  for (const auto& d : devices) {
    trains.push_back(&d.train);
    evals.push_back(&d.eval);
  }
  return run_centralized("combined", vstack(trains), vstack(evals), global_test, config, ae, seed);
}

}  // namespace fediot::fed
