#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fediot/anomaly.hpp"
#include "fediot/data.hpp"
#include "fediot/nn.hpp"
#include "fediot/pubsub.hpp"

namespace fediot::fed {

using nn::Matrix;
using nn::ModelParams;

struct FederationConfig {
  int n_clients = 9;
  int total_rounds = 30;
  int local_epochs = 120;
  int batch_size = 64;
  nn::LrSchedule schedule{1e-3, 0.0, 30};
  double alpha = anomaly::kDefaultAlpha;

  /// Throws ConfigError. Also forces schedule.total_rounds == total_rounds.
  void validate() const;
};

struct RoundUpdate {
  std::string client_id;
  int round = 0;
  ModelParams params;
  double local_loss = 0.0;
  double train_seconds = 0.0;
  std::uint64_t bytes_uploaded = 0;
};

struct GlobalThresholdReport {
  std::map<std::string, std::vector<double>> per_client_mse;
  anomaly::DetectionThreshold tr_global;
};

/// `epochs` of mini-batch Adam at fixed `lr` from a fresh optimizer state.
RoundUpdate local_train(const nn::AutoencoderConfig& ae, const ModelParams& global_params,
                        const Matrix& train, double lr, int epochs, int batch_size, std::uint64_t seed);

/// Uniform 1/K mean, summed in client_id order.
ModelParams aggregate(std::span<const RoundUpdate> updates);

/// Threshold over the concatenation of every client's MSE sequence.
GlobalThresholdReport global_threshold(const std::map<std::string, std::vector<double>>& per_client_mse,
                                       double alpha, std::size_t expected_clients);

struct Evaluation {
  anomaly::ConfusionMatrix cm;
  anomaly::Metrics metrics;
};

Evaluation evaluate(const nn::AutoencoderConfig& ae, const ModelParams& model,
                    const anomaly::DetectionThreshold& threshold, const data::LabeledSet& test);

/// Seed for one client's shuffles in one round.
std::uint64_t client_round_seed(std::uint64_t run_seed, std::size_t device_index, int round);

// ---- FedDetect over a pub/sub transport ----

struct RoundRecord {
  int round = 0;
  double lr = 0.0;
  double mean_local_loss = 0.0;
  double eval_loss = 0.0;  // global model on all eval splits, diagnostics only
  double wall_seconds = 0.0;
  double aggregation_seconds = 0.0;
  std::size_t updates = 0;
  std::size_t distinct_senders = 0;
};

struct RunStats {
  std::vector<RoundRecord> rounds;
  double wall_seconds = 0.0;
  std::map<std::string, transport::CommStats> per_client;
  /// Per-client mean of the client-side measurements.
  transport::CommStats comm;
};

struct FedResult {
  ModelParams model;
  GlobalThresholdReport threshold;
  Evaluation evaluation;
  RunStats stats;
};

struct ServerOptions {
  std::string run_id = "run";
  FederationConfig fed;
  nn::AutoencoderConfig ae;
  std::chrono::milliseconds registration_timeout{60'000};
  std::chrono::milliseconds round_timeout{600'000};
};

/// FL server state machine: registration, dataset assignment, round barrier,
/// aggregation, global threshold and final evaluation.
class ServerManager {
 public:
  ServerManager(ServerOptions options, transport::Connection& conn, std::vector<data::DeviceDataset> devices);

  void start();
  void handle(const transport::Envelope& env);
  /// Enforces registration / round timeouts; throws TransportError.
  void tick();
  bool finished() const { return phase_ == Phase::kDone; }

  /// Valid once finished().
  FedResult result() const;
  int current_round() const { return round_; }

 private:
  enum class Phase { kRegistering, kTraining, kThreshold, kDone };

  void on_register(const transport::Envelope& env);
  void on_model_update(const transport::Envelope& env);
  void on_mse_sequence(const transport::Envelope& env);
  void assign_datasets();
  void broadcast_model(bool final_model, double aggregation_seconds);
  void publish(transport::MsgType type, std::uint32_t round, std::vector<std::uint8_t> payload);

  ServerOptions opt_;
  transport::Connection& conn_;
  std::vector<data::DeviceDataset> devices_;
  Phase phase_ = Phase::kRegistering;
  int round_ = 0;
  ModelParams global_;
  std::vector<std::string> clients_;  // sorted after registration completes
  std::map<std::string, RoundUpdate> round_buffer_;
  std::map<std::string, std::vector<double>> mse_;
  FedResult result_;
  std::chrono::steady_clock::time_point started_at_;
  std::chrono::steady_clock::time_point phase_deadline_;
  std::chrono::steady_clock::time_point round_started_at_;
};

struct ClientOptions {
  std::string run_id = "run";
  std::string client_id;
  FederationConfig fed;
  nn::AutoencoderConfig ae;
  std::uint64_t seed = 0;
  std::chrono::milliseconds register_resend{1000};
};

/// FL client: register, wait for model, train, upload, repeat; then report its
/// MSE sequence under the final model.
class ClientManager {
 public:
  ClientManager(ClientOptions options, transport::Connection& conn);

  void start();
  void handle(const transport::Envelope& env);
  /// Re-sends REGISTER until acknowledged.
  void tick();
  bool finished() const { return done_; }

  const transport::CommStats& comm_stats() const { return comm_; }
  const std::optional<anomaly::DetectionThreshold>& global_threshold() const { return threshold_; }
  const std::string& device_id() const { return device_id_; }

 private:
  void on_global_model(const transport::Envelope& env);
  void publish(transport::MsgType type, std::uint32_t round, std::vector<std::uint8_t> payload);

  ClientOptions opt_;
  transport::Connection& conn_;
  bool acked_ = false;
  bool done_ = false;
  std::chrono::steady_clock::time_point last_register_{};
  std::size_t device_index_ = 0;
  std::string device_id_;
  std::optional<Matrix> train_;
  std::optional<Matrix> eval_;
  int last_round_handled_ = -1;
  std::optional<transport::RoundMarks> pending_;
  std::uint64_t bytes_sent_mark_ = 0;
  std::uint64_t bytes_recv_mark_ = 0;
  transport::CommStats comm_;
  std::optional<anomaly::DetectionThreshold> threshold_;
};

/// Runs server and K clients in this thread, pumping their connections until DONE.
FedResult run_feddetect(const FederationConfig& config, const nn::AutoencoderConfig& ae,
                        std::span<const data::DeviceDataset> devices, transport::Transport& transport,
                        std::uint64_t seed, const std::string& run_id = "run");

/// Blocking single-role loops for one-process-per-role deployments.
void run_server_loop(ServerManager& server, transport::Connection& conn);
void run_client_loop(ClientManager& client, transport::Connection& conn,
                     std::chrono::milliseconds idle_timeout = std::chrono::minutes(30));

std::string client_name(std::size_t index);

// ---- centralized baselines ----

struct CentralizedResult {
  std::string label;
  ModelParams model;
  anomaly::DetectionThreshold threshold;
  Evaluation evaluation;
  std::vector<double> segment_loss;
  double wall_seconds = 0.0;
};

/// T segments of E epochs with one Adam state, LR from cosine_lr per segment.
ModelParams train_centralized(const nn::AutoencoderConfig& ae, const Matrix& train, const FederationConfig& config,
                              std::uint64_t seed, std::vector<double>* segment_loss = nullptr);

CentralizedResult run_cl_single(const data::DeviceDataset& device, const data::LabeledSet& global_test,
                                const FederationConfig& config, const nn::AutoencoderConfig& ae, std::uint64_t seed);

CentralizedResult run_cl_combined(std::span<const data::DeviceDataset> devices, const data::LabeledSet& global_test,
                                  const FederationConfig& config, const nn::AutoencoderConfig& ae, std::uint64_t seed);

}  // namespace fediot::fed
