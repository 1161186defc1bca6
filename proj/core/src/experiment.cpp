#include "fediot/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fediot/error.hpp"
#include "fediot/hash.hpp"
#include "fediot/wire.hpp"

namespace fediot::app {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "n/a"; }

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

std::optional<double> parse_opt(const std::string& key, const std::string& value) {
  if (value == "n/a") return std::nullopt;
  return parse_double(key, value);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
}

Mode parse_mode(const std::string& v) {
  if (v == "fl") return Mode::kFl;
  if (v == "cl-single") return Mode::kClSingle;
  if (v == "cl-combined") return Mode::kClCombined;
  throw ConfigError("unknown mode '" + v + "' (fl, cl-single, cl-combined)");
}

Profile parse_profile(const std::string& v) {
  if (v == "paper") return Profile::kPaper;
  if (v == "fast") return Profile::kFast;
  throw ConfigError("unknown profile '" + v + "' (paper, fast)");
}

void apply_profile(ExperimentConfig& c, Profile p) {
  c.profile = p;
  c.fed.total_rounds = p == Profile::kPaper ? 30 : 5;
  c.fed.local_epochs = p == Profile::kPaper ? 120 : 5;
  c.fed.batch_size = 64;
  c.fed.alpha = 3.0;
  c.fed.schedule.total_rounds = c.fed.total_rounds;
  c.ae.activation = nn::Activation::kTanh;
}

// Ordered, duplicate-tolerant INI writer output via property_tree.
void put(pt::ptree& section, const std::string& key, const std::string& value) {
  section.push_back({key, pt::ptree(value)});
}

const pt::ptree* section_of(const pt::ptree& root, const std::string& name) {
  auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

std::string get(const pt::ptree& section, const std::string& key) {
  auto it = section.find(key);
  if (it == section.not_found()) throw DataError("report is missing key '" + key + "'");
  return it->second.data();
}

std::map<std::string, std::string> kv_fields(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct LoadedData {
  std::vector<data::DeviceDataset> devices;
  data::Manifest manifest;
};

LoadedData load_for_run(const ExperimentConfig& config) {
  LoadedData d;
  d.devices = data::load_prepared(config.cache_dir, &d.manifest);
  const auto k = static_cast<std::size_t>(config.fed.n_clients);
  if (k > d.devices.size()) {
    throw ConfigError("configured " + std::to_string(k) + " clients but the cache holds " +
                      std::to_string(d.devices.size()) + " devices");
  }
  d.devices.resize(k);
  return d;
}

RunReport base_report(const ExperimentConfig& config, const data::Manifest& manifest) {
  RunReport r;
  r.run_id = config.effective_run_id();
  r.mode = to_string(config.mode);
  r.config = config.snapshot();
  r.manifest_hash = manifest.hash();
  for (const auto& e : manifest.entries) r.data_hashes.push_back(e.device_id + ":" + e.cache_hash);
  return r;
}

RunReport fl_report(const ExperimentConfig& config, const data::Manifest& manifest, const fed::FedResult& res) {
  RunReport r = base_report(config, manifest);
  r.cm = res.evaluation.cm;
  r.metrics = res.evaluation.metrics;
  r.threshold = res.threshold.tr_global;
  r.comm = res.stats.comm;
  r.wall_seconds = res.stats.wall_seconds;
  r.rounds = res.stats.rounds;
  for (const auto& rec : r.rounds) r.loss_curve.push_back(rec.mean_local_loss);
  r.model_hash = transport::model_hash(res.model);
  return r;
}

fs::path write_outputs(const ExperimentConfig& config, const RunReport& report) {
  const fs::path dir = config.output_dir / report.run_id;
  fs::create_directories(dir);
  write_text(dir / "report.txt", render_report(report));
  write_text(dir / "metrics.line", metrics_line(report) + "\n");
  return dir;
}

std::unique_ptr<transport::TcpTransport> tcp_transport(const ExperimentConfig& config) {
  auto [host, port] = transport::parse_address(config.broker_addr);
  transport::RetryPolicy retry;
  retry.max_retries = config.connect_retries;
  return std::make_unique<transport::TcpTransport>(host, port, retry);
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kFl: return "fl";
    case Mode::kClSingle: return "cl-single";
    case Mode::kClCombined: return "cl-combined";
  }
  return "?";
}

std::string to_string(DatasetKind d) { return d == DatasetKind::kNbaiot ? "nbaiot" : "synthetic"; }
std::string to_string(TransportKind t) { return t == TransportKind::kTcp ? "tcp" : "loopback"; }
std::string to_string(Profile p) { return p == Profile::kPaper ? "paper" : "fast"; }

ExperimentConfig ExperimentConfig::for_profile(Profile profile) {
  ExperimentConfig c;
  apply_profile(c, profile);
  if (const char* root = std::getenv(kDataRootEnv)) c.data_root = root;
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "experiment.mode") mode = parse_mode(value);
  else if (key == "experiment.dataset") {
    if (value == "nbaiot") dataset = DatasetKind::kNbaiot;
    else if (value == "synthetic") dataset = DatasetKind::kSynthetic;
    else throw ConfigError("unknown dataset '" + value + "' (nbaiot, synthetic)");
  } else if (key == "experiment.profile") apply_profile(*this, parse_profile(value));
  else if (key == "experiment.data_root") data_root = value;
  else if (key == "experiment.cache_dir") cache_dir = value;
  else if (key == "experiment.transport") {
    if (value == "loopback") transport = TransportKind::kLoopback;
    else if (value == "tcp") transport = TransportKind::kTcp;
    else throw ConfigError("unknown transport '" + value + "' (loopback, tcp)");
  } else if (key == "experiment.broker") broker_addr = value;
  else if (key == "experiment.attach_broker") attach_broker = parse_bool(key, value);
  else if (key == "experiment.seed") seed = parse_int<std::uint64_t>(key, value);
  else if (key == "experiment.output_dir") output_dir = value;
  else if (key == "experiment.run_id") run_id = value;
  else if (key == "experiment.synthetic_devices") synthetic_devices = parse_int<int>(key, value);
  else if (key == "experiment.inject_delay_ms") inject_delay_ms = parse_double(key, value);
  else if (key == "experiment.registration_timeout_s") registration_timeout_s = parse_double(key, value);
  else if (key == "experiment.connect_retries") connect_retries = parse_int<int>(key, value);
  else if (key == "federation.clients") fed.n_clients = parse_int<int>(key, value);
  else if (key == "federation.rounds") {
    fed.total_rounds = parse_int<int>(key, value);
    fed.schedule.total_rounds = fed.total_rounds;
  } else if (key == "federation.epochs") fed.local_epochs = parse_int<int>(key, value);
  else if (key == "federation.batch_size") fed.batch_size = parse_int<int>(key, value);
  else if (key == "federation.lr_max") fed.schedule.eta_max = parse_double(key, value);
  else if (key == "federation.lr_min") fed.schedule.eta_min = parse_double(key, value);
  else if (key == "federation.alpha") fed.alpha = parse_double(key, value);
  else if (key == "model.input_dim") ae.input_dim = parse_int<std::size_t>(key, value);
  else if (key == "model.encoder_rates") {
    ae.encoder_rates.clear();
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      ae.encoder_rates.push_back(parse_double(key, item));
    }
  } else if (key == "model.activation") {
    if (value == "tanh") ae.activation = nn::Activation::kTanh;
    else if (value == "sigmoid") ae.activation = nn::Activation::kSigmoid;
    else throw ConfigError("unknown activation '" + value + "' (tanh, sigmoid)");
  } else if (key == "model.output_activation") ae.output_activation = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::load_file(const fs::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      set(section, body.data());  // top-level "section.key = value"
      continue;
    }
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void ExperimentConfig::validate() const {
  fed.validate();
  ae.validate();
  if (synthetic_devices < 1) throw ConfigError("synthetic_devices must be >= 1");
  if (inject_delay_ms < 0.0) throw ConfigError("inject_delay_ms must be >= 0");
}

std::string ExperimentConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return to_string(mode) + "-" + to_string(dataset) + "-" + to_string(profile) + "-s" + std::to_string(seed);
}

std::map<std::string, std::string> ExperimentConfig::snapshot() const {
  std::map<std::string, std::string> s;
  s["experiment.mode"] = to_string(mode);
  s["experiment.dataset"] = to_string(dataset);
  s["experiment.profile"] = to_string(profile);
  s["experiment.data_root"] = data_root.string();
  s["experiment.cache_dir"] = cache_dir.string();
  s["experiment.transport"] = to_string(transport);
  s["experiment.broker"] = broker_addr;
  s["experiment.seed"] = std::to_string(seed);
  s["experiment.run_id"] = effective_run_id();
  s["experiment.synthetic_devices"] = std::to_string(synthetic_devices);
  s["experiment.inject_delay_ms"] = fmt_double(inject_delay_ms);
  s["federation.clients"] = std::to_string(fed.n_clients);
  s["federation.rounds"] = std::to_string(fed.total_rounds);
  s["federation.epochs"] = std::to_string(fed.local_epochs);
  s["federation.batch_size"] = std::to_string(fed.batch_size);
  s["federation.lr_max"] = fmt_double(fed.schedule.eta_max);
  s["federation.lr_min"] = fmt_double(fed.schedule.eta_min);
  s["federation.alpha"] = fmt_double(fed.alpha);
  s["model.input_dim"] = std::to_string(ae.input_dim);
  std::string rates;
  for (std::size_t i = 0; i < ae.encoder_rates.size(); ++i) rates += (i ? "," : "") + fmt_double(ae.encoder_rates[i]);
  s["model.encoder_rates"] = rates;
  s["model.activation"] = ae.activation == nn::Activation::kTanh ? "tanh" : "sigmoid";
  s["model.output_activation"] = ae.output_activation ? "true" : "false";
  return s;
}

ExperimentConfig resolve_config(Profile profile, const std::optional<fs::path>& file,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  auto config = ExperimentConfig::for_profile(profile);
  if (file) config.load_file(*file);
  for (const auto& [k, v] : overrides) config.set(k, v);
  config.ae.seed = config.seed;
  config.validate();
  return config;
}

// ---- reports ----

std::string render_report(const RunReport& r) {
  pt::ptree root;
  pt::ptree run, config, metrics, threshold, timing, rounds, devices, dataset;
  put(run, "run_id", r.run_id);
  put(run, "mode", r.mode);
  put(run, "model_hash", r.model_hash.empty() ? "n/a" : r.model_hash);
  for (const auto& [k, v] : r.config) put(config, k, v);

  put(metrics, "acc", fmt_double(r.metrics.acc));
  put(metrics, "fpr", fmt_opt(r.metrics.fpr));
  put(metrics, "tpr", fmt_opt(r.metrics.tpr));
  put(metrics, "tnr", fmt_opt(r.metrics.tnr));
  put(metrics, "tp", std::to_string(r.cm.tp));
  put(metrics, "tn", std::to_string(r.cm.tn));
  put(metrics, "fp", std::to_string(r.cm.fp));
  put(metrics, "fn", std::to_string(r.cm.fn));

  if (r.threshold) {
    put(threshold, "tr", fmt_double(r.threshold->tr));
    put(threshold, "mean_mse", fmt_double(r.threshold->mean_mse));
    put(threshold, "std_mse", fmt_double(r.threshold->std_mse));
    put(threshold, "alpha", fmt_double(r.threshold->alpha));
    put(threshold, "n_samples", std::to_string(r.threshold->n_samples));
  }

  put(timing, "end_to_end_seconds", fmt_double(r.wall_seconds));
  put(timing, "comm_seconds", fmt_double(r.comm.comm_seconds));
  put(timing, "compute_seconds", fmt_double(r.comm.compute_seconds));
  put(timing, "aggregation_seconds", fmt_double(r.comm.aggregation_seconds));
  put(timing, "comm_ratio", fmt_double(r.comm.comm_ratio()));
  put(timing, "compute_ratio", fmt_double(r.comm.compute_ratio()));
  put(timing, "bytes_up", std::to_string(r.comm.bytes_up));
  put(timing, "bytes_down", std::to_string(r.comm.bytes_down));

  for (std::size_t i = 0; i < r.rounds.size(); ++i) {
    const auto& rec = r.rounds[i];
    std::ostringstream os;
    os << "lr=" << fmt_double(rec.lr) << " loss=" << fmt_double(rec.mean_local_loss)
       << " eval_loss=" << fmt_double(rec.eval_loss) << " seconds=" << fmt_double(rec.wall_seconds)
       << " aggregation_seconds=" << fmt_double(rec.aggregation_seconds) << " updates=" << rec.updates
       << " senders=" << rec.distinct_senders;
    if (i < r.comm.per_round.size()) {
      os << " comm_seconds=" << fmt_double(r.comm.per_round[i].comm_seconds)
         << " compute_seconds=" << fmt_double(r.comm.per_round[i].compute_seconds);
    }
    char key[24];
    std::snprintf(key, sizeof key, "round.%03d", rec.round);
    put(rounds, key, os.str());
  }
  if (r.rounds.empty()) {
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
      char key[24];
      std::snprintf(key, sizeof key, "segment.%03zu", i);
      put(rounds, key, "loss=" + fmt_double(r.loss_curve[i]));
    }
  }

  for (const auto& d : r.devices) {
    put(devices, d.device_id,
        "acc=" + fmt_double(d.metrics.acc) + " fpr=" + fmt_opt(d.metrics.fpr) + " tpr=" + fmt_opt(d.metrics.tpr) +
            " tnr=" + fmt_opt(d.metrics.tnr) + " tp=" + std::to_string(d.cm.tp) + " tn=" + std::to_string(d.cm.tn) +
            " fp=" + std::to_string(d.cm.fp) + " fn=" + std::to_string(d.cm.fn) + " tr=" + fmt_double(d.tr));
  }

  put(dataset, "manifest_hash", r.manifest_hash);
  for (std::size_t i = 0; i < r.data_hashes.size(); ++i) put(dataset, "cache." + std::to_string(i), r.data_hashes[i]);

  root.push_back({"run", run});
  root.push_back({"config", config});
  root.push_back({"metrics", metrics});
  if (r.threshold) root.push_back({"threshold", threshold});
  root.push_back({"timing", timing});
  if (!rounds.empty()) root.push_back({"rounds", rounds});
  if (!devices.empty()) root.push_back({"devices", devices});
  root.push_back({"data", dataset});

  std::ostringstream os;
  os << "# fediot run report\n";
  pt::write_ini(os, root);
  return os.str();
}

namespace {

RunReport parse_report_fields(const std::string& text) {
  pt::ptree root;
  std::istringstream is(text);
  try {
    pt::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  auto require = [&](const char* name) -> const pt::ptree& {
    const auto* s = section_of(root, name);
    if (s == nullptr) throw DataError(std::string("report is missing section [") + name + "]");
    return *s;
  };
  RunReport r;
  const auto& run = require("run");
  r.run_id = get(run, "run_id");
  r.mode = get(run, "mode");
  r.model_hash = get(run, "model_hash");
  if (r.model_hash == "n/a") r.model_hash.clear();
  if (const auto* config = section_of(root, "config")) {
    for (const auto& [k, v] : *config) r.config[k] = v.data();
  }

  const auto& m = require("metrics");
  r.metrics.acc = parse_double("acc", get(m, "acc"));
  r.metrics.fpr = parse_opt("fpr", get(m, "fpr"));
  r.metrics.tpr = parse_opt("tpr", get(m, "tpr"));
  r.metrics.tnr = parse_opt("tnr", get(m, "tnr"));
  r.cm.tp = parse_int<std::size_t>("tp", get(m, "tp"));
  r.cm.tn = parse_int<std::size_t>("tn", get(m, "tn"));
  r.cm.fp = parse_int<std::size_t>("fp", get(m, "fp"));
  r.cm.fn = parse_int<std::size_t>("fn", get(m, "fn"));

  if (const auto* t = section_of(root, "threshold")) {
    anomaly::DetectionThreshold th;
    th.tr = parse_double("tr", get(*t, "tr"));
    th.mean_mse = parse_double("mean_mse", get(*t, "mean_mse"));
    th.std_mse = parse_double("std_mse", get(*t, "std_mse"));
    th.alpha = parse_double("alpha", get(*t, "alpha"));
    th.n_samples = parse_int<std::size_t>("n_samples", get(*t, "n_samples"));
    r.threshold = th;
  }

  const auto& timing = require("timing");
  r.wall_seconds = parse_double("end_to_end_seconds", get(timing, "end_to_end_seconds"));
  r.comm.comm_seconds = parse_double("comm_seconds", get(timing, "comm_seconds"));
  r.comm.compute_seconds = parse_double("compute_seconds", get(timing, "compute_seconds"));
  r.comm.aggregation_seconds = parse_double("aggregation_seconds", get(timing, "aggregation_seconds"));
  r.comm.bytes_up = parse_int<std::uint64_t>("bytes_up", get(timing, "bytes_up"));
  r.comm.bytes_down = parse_int<std::uint64_t>("bytes_down", get(timing, "bytes_down"));

  if (const auto* rounds = section_of(root, "rounds")) {
    for (const auto& [key, value] : *rounds) {
      const auto f = kv_fields(value.data());
      if (key.starts_with("round.")) {
        fed::RoundRecord rec;
        rec.round = parse_int<int>(key, key.substr(6));
        rec.lr = parse_double("lr", f.at("lr"));
        rec.mean_local_loss = parse_double("loss", f.at("loss"));
        rec.eval_loss = parse_double("eval_loss", f.at("eval_loss"));
        rec.wall_seconds = parse_double("seconds", f.at("seconds"));
        rec.aggregation_seconds = parse_double("aggregation_seconds", f.at("aggregation_seconds"));
        rec.updates = parse_int<std::size_t>("updates", f.at("updates"));
        rec.distinct_senders = parse_int<std::size_t>("senders", f.at("senders"));
        r.loss_curve.push_back(rec.mean_local_loss);
        r.rounds.push_back(rec);
      } else {
        r.loss_curve.push_back(parse_double("loss", f.at("loss")));
      }
    }
  }
  if (const auto* devices = section_of(root, "devices")) {
    for (const auto& [key, value] : *devices) {
      const auto f = kv_fields(value.data());
      DeviceRun d;
      d.device_id = key;
      d.metrics.acc = parse_double("acc", f.at("acc"));
      d.metrics.fpr = parse_opt("fpr", f.at("fpr"));
      d.metrics.tpr = parse_opt("tpr", f.at("tpr"));
      d.metrics.tnr = parse_opt("tnr", f.at("tnr"));
      d.cm = {parse_int<std::size_t>("tp", f.at("tp")), parse_int<std::size_t>("tn", f.at("tn")),
              parse_int<std::size_t>("fp", f.at("fp")), parse_int<std::size_t>("fn", f.at("fn"))};
      d.tr = parse_double("tr", f.at("tr"));
      r.devices.push_back(d);
    }
  }
  const auto& dataset = require("data");
  r.manifest_hash = get(dataset, "manifest_hash");
  for (const auto& [key, value] : dataset) {
    if (key.starts_with("cache.")) r.data_hashes.push_back(value.data());
  }
  return r;
}

}  // namespace

RunReport parse_report(const std::string& text) {
  try {
    return parse_report_fields(text);
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed report value: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("report line is missing a field: ") + e.what());
  }
}

RunReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

std::string metrics_line(const RunReport& r) {
  std::ostringstream os;
  os << "run_id=" << r.run_id << " mode=" << r.mode << " acc=" << fmt_double(r.metrics.acc)
     << " fpr=" << fmt_opt(r.metrics.fpr) << " tpr=" << fmt_opt(r.metrics.tpr) << " tnr=" << fmt_opt(r.metrics.tnr)
     << " tr=" << (r.threshold ? fmt_double(r.threshold->tr) : "n/a") << " wall_seconds=" << fmt_double(r.wall_seconds)
     << " manifest=" << r.manifest_hash;
  return os.str();
}

std::string render_comparison(std::span<const RunReport> reports) {
  if (reports.empty()) throw ConfigError("report: no run reports given");
  for (const auto& r : reports) {
    if (r.manifest_hash != reports.front().manifest_hash) {
      throw DataError("report: " + r.run_id + " used dataset " + r.manifest_hash + " but " + reports.front().run_id +
                      " used " + reports.front().manifest_hash);
    }
  }
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
    return std::string(buf);
  };
  int run_w = 5;
  for (const auto& r : reports) run_w = std::max(run_w, static_cast<int>(r.run_id.size()) + 2);
  auto secs = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f s", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "Detection performance\n";
  os << std::left << std::setw(run_w) << "run" << std::setw(14) << "mode" << std::right << std::setw(9) << "Acc"
     << std::setw(9) << "FPR" << std::setw(9) << "TPR" << std::setw(9) << "TNR" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(run_w) << r.run_id << std::setw(14) << r.mode << std::right << std::setw(9)
       << pct(r.metrics.acc) << std::setw(9) << pct(r.metrics.fpr) << std::setw(9) << pct(r.metrics.tpr)
       << std::setw(9) << pct(r.metrics.tnr) << "\n";
  }
  os << "\nEnd-to-end training time breakdown\n";
  for (const auto& r : reports) {
    os << "[" << r.run_id << "]\n";
    os << "  end-to-end time          " << secs(r.wall_seconds) << "\n";
    os << "  communication time ratio " << pct(r.comm.comm_ratio()) << "\n";
    os << "  computation time ratio   " << pct(r.comm.compute_ratio()) << "\n";
    os << "  aggregation time         " << secs(r.comm.aggregation_seconds) << "\n";
    os << "  bytes up / down          " << r.comm.bytes_up << " / " << r.comm.bytes_down << "\n";
  }
  return os.str();
}

// ---- commands ----

data::Manifest cmd_prepare_data(const ExperimentConfig& config, std::ostream& log) {
  std::vector<data::RawDeviceData> raws;
  std::string name;
  if (config.dataset == DatasetKind::kSynthetic) {
    name = "synthetic";
    raws = data::generate_synthetic_corpus(static_cast<std::size_t>(config.synthetic_devices), config.seed);
  } else {
    name = "nbaiot";
    if (config.data_root.empty()) {
      throw ConfigError(std::string("nbaiot needs --data-root or $") + kDataRootEnv);
    }
    std::vector<std::string> missing;
    for (const auto& dev : data::kNbaiotDevices) {
      if (!fs::is_directory(config.data_root / dev)) missing.push_back(dev);
    }
    if (!missing.empty()) {
      std::string msg = "missing N-BaIoT device directories under " + config.data_root.string() + ":";
      for (const auto& m : missing) msg += " " + m;
      throw DataError(msg);
    }
    for (const auto& dev : data::kNbaiotDevices) {
      log << "loading " << dev << "\n";
      raws.push_back(data::load_device_dir(config.data_root, dev));
    }
  }
  const auto prepared = data::prepare_datasets(raws, config.seed);
  auto manifest = data::write_prepared(config.cache_dir, name, config.seed, raws, prepared);
  for (const auto& e : manifest.entries) {
    log << e.device_id << ": train=" << e.train_rows << " eval=" << e.eval_rows << " test=" << e.test_rows << "\n";
  }
  log << "manifest " << manifest.hash() << " -> " << (config.cache_dir / "manifest.txt").string() << "\n";
  return manifest;
}

RunReport cmd_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  auto loaded = load_for_run(config);
  const auto test = data::build_global_testset(loaded.devices);
  RunReport report;
  fs::path dir;

  switch (config.mode) {
    case Mode::kFl: {
      std::unique_ptr<transport::Transport> base;
      transport::Broker broker;
      ExperimentConfig effective = config;
      if (config.transport == TransportKind::kTcp) {
        if (!config.attach_broker) {
          auto [host, port] = transport::parse_address(config.broker_addr);
          broker.start(host, port);
          effective.broker_addr = host + ":" + std::to_string(broker.port());
          log << "broker listening on " << effective.broker_addr << "\n";
        }
        base = tcp_transport(effective);
      } else {
        base = std::make_unique<transport::LoopbackTransport>();
      }
      std::unique_ptr<transport::DelayedTransport> delayed;
      transport::Transport* t = base.get();
      if (config.inject_delay_ms > 0.0) {
        delayed = std::make_unique<transport::DelayedTransport>(
            *base, std::chrono::microseconds(static_cast<std::int64_t>(config.inject_delay_ms * 1000.0)));
        t = delayed.get();
      }
      const auto res = fed::run_feddetect(config.fed, config.ae, loaded.devices, *t, config.seed,
                                          config.effective_run_id());
      report = fl_report(config, loaded.manifest, res);
      dir = write_outputs(config, report);
      write_bytes(dir / "model.bin", transport::encode_model(res.model));
      write_threshold(dir / "threshold.txt", res.threshold.tr_global);
      break;
    }
    case Mode::kClSingle: {
      report = base_report(config, loaded.manifest);
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<fed::CentralizedResult> runs;
      for (const auto& d : loaded.devices) {
        log << "cl-single " << d.device_id << "\n";
        runs.push_back(fed::run_cl_single(d, test, config.fed, config.ae, config.seed));
      }
      std::vector<anomaly::Metrics> per;
      for (const auto& r : runs) {
        per.push_back(r.evaluation.metrics);
        report.devices.push_back({r.label, r.evaluation.metrics, r.evaluation.cm, r.threshold.tr});
        report.cm.tp += r.evaluation.cm.tp;
        report.cm.tn += r.evaluation.cm.tn;
        report.cm.fp += r.evaluation.cm.fp;
        report.cm.fn += r.evaluation.cm.fn;
      }
      report.metrics = anomaly::average(per);
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.comm.compute_seconds = report.wall_seconds;
      dir = write_outputs(config, report);
      for (const auto& r : runs) {
        write_bytes(dir / ("model." + r.label + ".bin"), transport::encode_model(r.model));
        write_threshold(dir / ("threshold." + r.label + ".txt"), r.threshold);
      }
      break;
    }
    case Mode::kClCombined: {
      report = base_report(config, loaded.manifest);
      const auto r = fed::run_cl_combined(loaded.devices, test, config.fed, config.ae, config.seed);
      report.cm = r.evaluation.cm;
      report.metrics = r.evaluation.metrics;
      report.threshold = r.threshold;
      report.wall_seconds = r.wall_seconds;
      report.comm.compute_seconds = r.wall_seconds;
      report.loss_curve = r.segment_loss;
      report.model_hash = transport::model_hash(r.model);
      dir = write_outputs(config, report);
      write_bytes(dir / "model.bin", transport::encode_model(r.model));
      write_threshold(dir / "threshold.txt", r.threshold);
      break;
    }
  }
  log << metrics_line(report) << "\n" << "outputs in " << dir.string() << "\n";
  return report;
}

fed::Evaluation cmd_evaluate(const ExperimentConfig& config, const fs::path& model_path, const fs::path& threshold_path) {
  const auto model = transport::decode_model(read_bytes(model_path), config.ae.fingerprint());
  const auto threshold = read_threshold(threshold_path);
  auto loaded = load_for_run(config);
  return fed::evaluate(config.ae, model, threshold, data::build_global_testset(loaded.devices));
}

void cmd_broker(const std::string& addr, const std::atomic<bool>& stop, std::ostream& log) {
  auto [host, port] = transport::parse_address(addr);
  transport::Broker broker;
  broker.start(host, port);
  log << "broker listening on " << host << ":" << broker.port() << std::endl;
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  broker.stop();
}

RunReport cmd_server(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  auto loaded = load_for_run(config);
  auto transport = tcp_transport(config);
  auto conn = transport->connect("server");
  fed::ServerOptions opt;
  opt.run_id = config.effective_run_id();
  opt.fed = config.fed;
  opt.ae = config.ae;
  opt.registration_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(config.registration_timeout_s * 1000));
  fed::ServerManager server(opt, *conn, loaded.devices);
  log << "server waiting for " << config.fed.n_clients << " clients on run " << opt.run_id << std::endl;
  fed::run_server_loop(server, *conn);
  const auto res = server.result();
  auto report = fl_report(config, loaded.manifest, res);
  const auto dir = write_outputs(config, report);
  write_bytes(dir / "model.bin", transport::encode_model(res.model));
  write_threshold(dir / "threshold.txt", res.threshold.tr_global);
  log << metrics_line(report) << std::endl;
  return report;
}

void cmd_client(const ExperimentConfig& config, const std::string& client_id, std::ostream& log) {
  config.validate();
  auto transport = tcp_transport(config);
  auto conn = transport->connect(client_id);
  fed::ClientOptions opt;
  opt.run_id = config.effective_run_id();
  opt.client_id = client_id;
  opt.fed = config.fed;
  opt.ae = config.ae;
  opt.seed = config.seed;
  fed::ClientManager client(opt, *conn);
  log << client_id << " connected" << std::endl;
  fed::run_client_loop(client, *conn);
  log << client_id << " done (device " << client.device_id() << ")" << std::endl;
}

void write_threshold(const fs::path& path, const anomaly::DetectionThreshold& t) {
  std::ostringstream os;
  os << "tr = " << fmt_double(t.tr) << "\nmean_mse = " << fmt_double(t.mean_mse) << "\nstd_mse = "
     << fmt_double(t.std_mse) << "\nalpha = " << fmt_double(t.alpha) << "\nn_samples = " << t.n_samples << "\n";
  write_text(path, os.str());
}

anomaly::DetectionThreshold read_threshold(const fs::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(std::string("threshold file: ") + e.what());
  }
  anomaly::DetectionThreshold t;
  t.tr = parse_double("tr", get(tree, "tr"));
  t.mean_mse = parse_double("mean_mse", get(tree, "mean_mse"));
  t.std_mse = parse_double("std_mse", get(tree, "std_mse"));
  t.alpha = parse_double("alpha", get(tree, "alpha"));
  t.n_samples = parse_int<std::size_t>("n_samples", get(tree, "n_samples"));
  return t;
}

}  // namespace fediot::app
