#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fediot/anomaly.hpp"
#include "fediot/data.hpp"
#include "fediot/federation.hpp"
#include "fediot/nn.hpp"
#include "fediot/pubsub.hpp"

namespace fediot::app {

enum class Mode { kFl, kClSingle, kClCombined };
enum class DatasetKind { kNbaiot, kSynthetic };
enum class TransportKind { kLoopback, kTcp };
enum class Profile { kPaper, kFast };

std::string to_string(Mode m);
std::string to_string(DatasetKind d);
std::string to_string(TransportKind t);
std::string to_string(Profile p);

inline constexpr const char* kDataRootEnv = "FEDIOT_DATA_ROOT";

struct ExperimentConfig {
  Mode mode = Mode::kFl;
  DatasetKind dataset = DatasetKind::kSynthetic;
  std::filesystem::path data_root;
  std::filesystem::path cache_dir = "cache";
  fed::FederationConfig fed;
  nn::AutoencoderConfig ae;
  TransportKind transport = TransportKind::kLoopback;
  std::string broker_addr = "127.0.0.1:1883";
  bool attach_broker = false;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "runs";
  Profile profile = Profile::kFast;
  std::string run_id;
  int synthetic_devices = 9;
  double inject_delay_ms = 0.0;
  double registration_timeout_s = 60.0;
  int connect_retries = 5;

  /// Defaults for the given profile: paper = T30/E120/B64/alpha3/tanh, fast = T5/E5.
  static ExperimentConfig for_profile(Profile profile);

  /// Sets one "section.key" value; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Applies every key of an INI-style config file (sections become key prefixes).
  void load_file(const std::filesystem::path& path);

  void validate() const;
  std::string effective_run_id() const;
  /// Flat key/value snapshot; feeding it back through set() reproduces the config.
  std::map<std::string, std::string> snapshot() const;
};

/// Profile is applied first, then the config file, then `overrides` in order.
ExperimentConfig resolve_config(Profile profile, const std::optional<std::filesystem::path>& file,
                                const std::vector<std::pair<std::string, std::string>>& overrides);

struct DeviceRun {
  std::string device_id;
  anomaly::Metrics metrics;
  anomaly::ConfusionMatrix cm;
  double tr = 0.0;
};

struct RunReport {
  std::string run_id;
  std::string mode;
  std::map<std::string, std::string> config;
  anomaly::ConfusionMatrix cm;
  anomaly::Metrics metrics;
  std::optional<anomaly::DetectionThreshold> threshold;
  transport::CommStats comm;
  double wall_seconds = 0.0;
  std::vector<fed::RoundRecord> rounds;
  std::vector<double> loss_curve;
  std::vector<DeviceRun> devices;
  std::string manifest_hash;
  std::vector<std::string> data_hashes;
  std::string model_hash;
};

std::string render_report(const RunReport& report);
RunReport parse_report(const std::string& text);
RunReport read_report(const std::filesystem::path& path);
std::string metrics_line(const RunReport& report);

/// Renders the detection table (rows = runs, columns Acc/FPR/TPR/TNR) and the
/// timing breakdown. Throws DataError if the reports used different datasets.
std::string render_comparison(std::span<const RunReport> reports);

// ---- commands ----

data::Manifest cmd_prepare_data(const ExperimentConfig& config, std::ostream& log);

/// Runs the configured mode and writes <output_dir>/<run_id>/{report.txt, metrics.line, model.bin, threshold.txt}.
RunReport cmd_train(const ExperimentConfig& config, std::ostream& log);

fed::Evaluation cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& model_path,
                             const std::filesystem::path& threshold_path);

/// Blocks until `stop` becomes true.
void cmd_broker(const std::string& addr, const std::atomic<bool>& stop, std::ostream& log);

RunReport cmd_server(const ExperimentConfig& config, std::ostream& log);
void cmd_client(const ExperimentConfig& config, const std::string& client_id, std::ostream& log);

void write_threshold(const std::filesystem::path& path, const anomaly::DetectionThreshold& t);
anomaly::DetectionThreshold read_threshold(const std::filesystem::path& path);

}  // namespace fediot::app
