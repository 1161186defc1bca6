// fediot: prepare data, train FL / centralized detectors, evaluate, compare runs,
// and run broker / server / client as separate processes.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fediot/error.hpp"
#include "fediot/experiment.hpp"
#include "fediot/wire.hpp"

namespace {

namespace app = fediot::app;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Common {
  std::string profile = "fast";
  std::string config_file;
  std::vector<std::string> sets;
  std::string mode, dataset, data_root, cache_dir, transport, broker, output_dir, run_id;
  std::optional<std::uint64_t> seed;
  std::optional<int> clients, rounds, epochs;
  std::optional<double> delay_ms;
  bool attach = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--profile", c.profile, "paper or fast")->check(CLI::IsMember({"paper", "fast"}));
  cmd->add_option("-c,--config", c.config_file, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override: section.key=value (repeatable)");
  cmd->add_option("--mode", c.mode, "fl, cl-single, cl-combined");
  cmd->add_option("--dataset", c.dataset, "nbaiot or synthetic");
  cmd->add_option("--data-root", c.data_root, "N-BaIoT root (else $FEDIOT_DATA_ROOT)");
  cmd->add_option("--cache-dir", c.cache_dir, "prepared dataset cache");
  cmd->add_option("--transport", c.transport, "loopback or tcp");
  cmd->add_option("--broker", c.broker, "broker host:port");
  cmd->add_flag("--attach-broker", c.attach, "use a running broker instead of an in-process one");
  cmd->add_option("--output-dir", c.output_dir, "run output root");
  cmd->add_option("--run-id", c.run_id);
  cmd->add_option("--seed", c.seed);
  cmd->add_option("--clients", c.clients);
  cmd->add_option("--rounds", c.rounds);
  cmd->add_option("--epochs", c.epochs);
  cmd->add_option("--inject-delay-ms", c.delay_ms, "sleep per published message");
}

app::ExperimentConfig resolve(const Common& c) {
  std::vector<std::pair<std::string, std::string>> ov;
  auto add = [&](const char* key, const std::string& v) {
    if (!v.empty()) ov.emplace_back(key, v);
  };
  add("experiment.mode", c.mode);
  add("experiment.dataset", c.dataset);
  add("experiment.data_root", c.data_root);
  add("experiment.cache_dir", c.cache_dir);
  add("experiment.transport", c.transport);
  add("experiment.broker", c.broker);
  add("experiment.output_dir", c.output_dir);
  add("experiment.run_id", c.run_id);
  if (c.attach) ov.emplace_back("experiment.attach_broker", "true");
  if (c.seed) ov.emplace_back("experiment.seed", std::to_string(*c.seed));
  if (c.clients) ov.emplace_back("federation.clients", std::to_string(*c.clients));
  if (c.rounds) ov.emplace_back("federation.rounds", std::to_string(*c.rounds));
  if (c.epochs) ov.emplace_back("federation.epochs", std::to_string(*c.epochs));
  if (c.delay_ms) ov.emplace_back("experiment.inject_delay_ms", std::to_string(*c.delay_ms));
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw fediot::ConfigError("--set expects key=value, got '" + s + "'");
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  std::optional<std::filesystem::path> file;
  if (!c.config_file.empty()) file = c.config_file;
  return app::resolve_config(c.profile == "paper" ? app::Profile::kPaper : app::Profile::kFast, file, ov);
}

int exit_code(fediot::ErrorKind kind) {
  switch (kind) {
    case fediot::ErrorKind::kConfig: return 2;
    case fediot::ErrorKind::kData: return 3;
    case fediot::ErrorKind::kTransport: return 4;
    case fediot::ErrorKind::kDivergence: return 5;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Federated autoencoder anomaly detection for IoT traffic"};
  cli.require_subcommand(1);

  Common prep_opts, train_opts, eval_opts, server_opts, client_opts;
  auto* prep = cli.add_subcommand("prepare-data", "normalize, split and cache a dataset");
  add_common(prep, prep_opts);
  auto* train = cli.add_subcommand("train", "run FL or a centralized baseline");
  add_common(train, train_opts);

  auto* eval = cli.add_subcommand("evaluate", "score a saved model on the global test set");
  add_common(eval, eval_opts);
  std::string model_path, threshold_path;
  eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", threshold_path)->required()->check(CLI::ExistingFile);

  auto* report = cli.add_subcommand("report", "compare run reports");
  std::vector<std::string> report_paths;
  report->add_option("reports", report_paths, "report.txt files")->required()->check(CLI::ExistingFile);

  auto* broker = cli.add_subcommand("broker", "run a standalone pub/sub broker");
  std::string broker_addr = "127.0.0.1:1883";
  broker->add_option("--listen", broker_addr, "host:port");

  auto* server = cli.add_subcommand("server", "FL server process (connects to a broker)");
  add_common(server, server_opts);
  double reg_timeout = 60.0;
  server->add_option("--registration-timeout", reg_timeout, "seconds");

  auto* client = cli.add_subcommand("client", "FL client process (connects to a broker)");
  add_common(client, client_opts);
  std::string client_id;
  client->add_option("--id", client_id)->required();

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*prep) {
      app::cmd_prepare_data(resolve(prep_opts), std::cout);
    } else if (*train) {
      app::cmd_train(resolve(train_opts), std::cout);
    } else if (*eval) {
      const auto config = resolve(eval_opts);
      const auto ev = app::cmd_evaluate(config, model_path, threshold_path);
      app::RunReport r;
      r.run_id = "evaluate";
      r.mode = app::to_string(config.mode);
      r.metrics = ev.metrics;
      std::cout << app::metrics_line(r) << "\n"
                << "tp=" << ev.cm.tp << " tn=" << ev.cm.tn << " fp=" << ev.cm.fp << " fn=" << ev.cm.fn << "\n";
    } else if (*report) {
      std::vector<app::RunReport> reports;
      for (const auto& p : report_paths) reports.push_back(app::read_report(p));
      std::cout << app::render_comparison(reports);
    } else if (*broker) {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      app::cmd_broker(broker_addr, g_stop, std::cout);
    } else if (*server) {
      auto config = resolve(server_opts);
      config.registration_timeout_s = reg_timeout;
      app::cmd_server(config, std::cout);
    } else if (*client) {
      app::cmd_client(resolve(client_opts), client_id, std::cout);
    }
  } catch (const fediot::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fediot::transport::WireError& e) {
    std::cerr << "wire error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
