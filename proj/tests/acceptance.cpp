// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fediot/anomaly.hpp"
#include "fediot/data.hpp"
#include "fediot/experiment.hpp"
#include "fediot/federation.hpp"
#include "fediot/nn.hpp"
#include "fediot/pubsub.hpp"
#include "fediot/wire.hpp"
#include "oracles.hpp"

using namespace fediot;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  criterion %d  %-34s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

void guarded(int id, const char* name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> to_vec(const nn::Vector& v) { return {v.data(), v.data() + v.size()}; }

bool fpr_tnr_identity(const anomaly::Metrics& m) {
  return !m.fpr || (m.tnr && std::abs(*m.fpr + *m.tnr - 1.0) < 1e-12);
}

// Shared state from the fast-profile run, reused by later criteria.
struct FastRun {
  app::ExperimentConfig config;
  std::vector<data::DeviceDataset> devices;
  fed::FedResult loopback;
  bool ok = false;
};

void criterion2(FastRun& run) {
  guarded(2, "fast-profile synthetic FL", [&] {
    const auto t0 = Clock::now();
    run.config = app::ExperimentConfig::for_profile(app::Profile::kFast);
    run.config.ae.seed = run.config.seed;
    const auto raws = data::generate_synthetic_corpus(9, run.config.seed);
    run.devices = data::prepare_datasets(raws, run.config.seed).devices;
    transport::LoopbackTransport t;
    run.loopback = fed::run_feddetect(run.config.fed, run.config.ae, run.devices, t, run.config.seed, "accept-fast");
    const double wall = seconds(t0);
    const double acc = run.loopback.evaluation.metrics.acc;
    run.ok = true;
    report(2, "fast-profile synthetic FL", acc >= 0.95 && wall <= 300.0,
           fmt("acc=%.4f (>= 0.95) wall=%.1fs (<= 300s)", acc, wall));
  });
}

void criterion3() {
  guarded(3, "gradient vs finite differences", [] {
    std::mt19937_64 rng(314);
    double worst = 0.0;
    int configs = 0;
    while (configs < 24) {
      nn::AutoencoderConfig c;
      c.input_dim = std::uniform_int_distribution<std::size_t>(3, 10)(rng);
      const int depth = std::uniform_int_distribution<int>(1, 3)(rng);
      double r = 0.9;
      c.encoder_rates.clear();
      for (int i = 0; i < depth; ++i) {
        r *= std::uniform_real_distribution<double>(0.45, 0.85)(rng);
        c.encoder_rates.push_back(r);
      }
      c.activation = rng() % 2 ? nn::Activation::kTanh : nn::Activation::kSigmoid;
      c.output_activation = rng() % 3 != 0;
      c.seed = rng();
      try {
        c.validate();
      } catch (const std::exception&) {
        continue;
      }
      ++configs;
      auto m = nn::init_autoencoder(c);
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      for (auto& L : m.layers) {
        for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = u(rng);
      }
      const auto rows = std::uniform_int_distribution<Eigen::Index>(2, 6)(rng);
      nn::Matrix x(rows, static_cast<Eigen::Index>(c.input_dim));
      std::vector<oracle::Row> xr;
      for (Eigen::Index i = 0; i < rows; ++i) {
        oracle::Row row;
        for (Eigen::Index j = 0; j < x.cols(); ++j) row.push_back(x(i, j) = std::uniform_real_distribution<double>(0, 1)(rng));
        xr.push_back(row);
      }
      const bool sig = c.activation == nn::Activation::kSigmoid;
      const auto g = nn::backward(c, m, x).grads;
      const double h = 1e-5;
      auto check = [&](double& p, double analytic) {
        const double p0 = p;
        p = p0 + h;
        const double up = oracle::batch_loss(m, xr, sig, c.output_activation);
        p = p0 - h;
        const double dn = oracle::batch_loss(m, xr, sig, c.output_activation);
        p = p0;
        const double numeric = (up - dn) / (2 * h);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
      };
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (Eigen::Index i = 0; i < m.layers[l].weight.size(); ++i) {
          check(m.layers[l].weight.data()[i], g.layers[l].weight.data()[i]);
        }
        for (Eigen::Index i = 0; i < m.layers[l].bias.size(); ++i) check(m.layers[l].bias[i], g.layers[l].bias[i]);
      }
    }
    report(3, "gradient vs finite differences", worst < 1e-4,
           fmt("%.0f configs, max rel err=%.2e (< 1e-4)", configs, worst));
  });
}

void criterion4() {
  guarded(4, "Adam vs reference", [] {
    // First step at |g| >> eps moves each weight by lr against the gradient sign.
    nn::AutoencoderConfig c;
    c.input_dim = 12;
    c.encoder_rates = {0.5};
    auto m = nn::init_autoencoder(c);
    const auto before = m.flatten();
    auto g = m.zeros_like();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (auto& L : g.layers) {
      for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = (rng() % 2 ? 1 : -1) * u(rng);
      for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = (rng() % 2 ? 1 : -1) * u(rng);
    }
    auto st = nn::AdamState::fresh_for(m);
    nn::adam_step(m, g, st, 1e-3);
    const auto after = m.flatten();
    const auto gf = g.flatten();
    double first_err = 0.0;
    for (std::size_t i = 0; i < gf.size(); ++i) {
      const double expect = -1e-3 * (gf[i] > 0 ? 1.0 : -1.0);
      first_err = std::max(first_err, std::abs((after[i] - before[i]) - expect));
    }

    // 100-step scalar trajectory on f(w) = (w - 3)^2 + 0.5 sin(w).
    nn::ModelParams s;
    s.layers.resize(1);
    s.layers[0].weight = nn::Matrix::Constant(1, 1, -2.0);
    s.layers[0].bias = nn::Vector::Constant(1, 0.5);
    auto sst = nn::AdamState::fresh_for(s);
    oracle::ScalarAdam ref_w, ref_b;
    double w = -2.0, b = 0.5, traj_err = 0.0;
    auto grad = [](double x) { return 2 * (x - 3) + 0.5 * std::cos(x); };
    for (int t = 0; t < 100; ++t) {
      auto gs = s.zeros_like();
      gs.layers[0].weight(0, 0) = grad(s.layers[0].weight(0, 0));
      gs.layers[0].bias[0] = grad(s.layers[0].bias[0]);
      nn::adam_step(s, gs, sst, 0.05);
      w = ref_w.step(w, grad(w), 0.05);
      b = ref_b.step(b, grad(b), 0.05);
      traj_err = std::max({traj_err, std::abs(s.layers[0].weight(0, 0) - w), std::abs(s.layers[0].bias[0] - b)});
    }
    report(4, "Adam vs reference", first_err < 1e-10 && traj_err < 1e-10 && sst.step_count == 100,
           fmt("first-step err=%.1e, 100-step err=%.1e (< 1e-10)", first_err, traj_err));
  });
}

void criterion5(const FastRun& run) {
  guarded(5, "aggregation and threshold", [&] {
    std::mt19937_64 rng(55);
    nn::AutoencoderConfig c;
    std::vector<fed::RoundUpdate> ups;
    for (int k = 0; k < 9; ++k) {
      c.seed = rng();
      fed::RoundUpdate u;
      u.client_id = fed::client_name(static_cast<std::size_t>(k));
      u.params = nn::init_autoencoder(c);
      for (auto& L : u.params.layers) L.bias.setRandom();
      ups.push_back(std::move(u));
    }
    std::vector<std::vector<double>> flats;
    for (const auto& u : ups) flats.push_back(u.params.flatten());
    const auto ref = oracle::elementwise_mean(flats);
    const auto agg = fed::aggregate(ups).flatten();
    double mean_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) mean_err = std::max(mean_err, std::abs(agg[i] - ref[i]));

    // Identical inputs: bit-exact for power-of-two K, within 1e-15 otherwise.
    bool fixed_point = true;
    const auto w = ups[0].params.flatten();
    for (std::size_t k_count : {8u, 9u}) {
      std::vector<fed::RoundUpdate> same(k_count, ups[0]);
      for (std::size_t k = 0; k < same.size(); ++k) same[k].client_id = fed::client_name(k);
      const auto agg = fed::aggregate(same);
      if (k_count == 8) {
        fixed_point &= agg == ups[0].params;
      } else {
        const auto a = agg.flatten();
        for (std::size_t i = 0; i < a.size(); ++i) fixed_point &= std::abs(a[i] - w[i]) <= 1e-15;
      }
    }

    // Threshold checks on real eval MSE sequences under the trained global model.
    std::map<std::string, std::vector<double>> per;
    std::vector<double> all;
    double worst_flag_rate = 0.0;
    const auto& model = run.loopback.model;
    for (std::size_t d = 0; d < run.devices.size(); ++d) {
      const auto s = to_vec(nn::reconstruction_errors(run.config.ae, model, run.devices[d].eval));
      per[fed::client_name(d)] = s;
      all.insert(all.end(), s.begin(), s.end());
      const auto own = anomaly::compute_threshold(s, 3.0);
      const auto flags = anomaly::detect(s, own);
      const double rate = static_cast<double>(std::count(flags.begin(), flags.end(), 1)) / static_cast<double>(s.size());
      worst_flag_rate = std::max(worst_flag_rate, rate);
    }
    const auto g = fed::global_threshold(per, 3.0, per.size()).tr_global;
    const auto [mean, sd] = oracle::mean_std(all);
    const double tr_err = std::abs(g.tr - (mean + 3.0 * sd));

    bool perm_ok = true;
    for (int t = 0; t < 5; ++t) {
      std::vector<std::string> names;
      for (const auto& [k, v] : per) names.push_back(k);
      std::shuffle(names.begin(), names.end(), rng);
      std::map<std::string, std::vector<double>> moved;
      std::size_t i = 0;
      for (const auto& [k, v] : per) {
        auto shuffled = v;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        moved[names[i++] + "-x"] = std::move(shuffled);
      }
      perm_ok &= fed::global_threshold(moved, 3.0, moved.size()).tr_global.tr == g.tr;
    }
    const bool ok = run.ok && mean_err <= 1e-15 && fixed_point && tr_err < 1e-10 && perm_ok &&
                    worst_flag_rate <= 1.0 / 9.0;
    report(5, "aggregation and threshold", ok,
           fmt("mean err=%.1e, tr err=%.1e, max own-threshold flag rate=%.4f (<= 1/9)", mean_err, tr_err,
               worst_flag_rate) +
               (fixed_point ? "" : " fixed-point broken") + (perm_ok ? "" : " permutation-variant"));
  });
}

void criterion6() {
  guarded(6, "strict detection boundary", [] {
    std::mt19937_64 rng(66);
    int cases = 0, bad = 0;
    for (int t = 0; t < 2000; ++t) {
      std::vector<double> s(std::uniform_int_distribution<int>(2, 50)(rng));
      std::lognormal_distribution<double> d(std::uniform_real_distribution<double>(-8, 0)(rng), 1.0);
      for (auto& x : s) x = d(rng);
      const auto thr = anomaly::compute_threshold(s, std::uniform_real_distribution<double>(0, 5)(rng));
      const std::vector<double> probe{thr.tr, std::nextafter(thr.tr, INFINITY), std::nextafter(thr.tr, -INFINITY)};
      const auto out = anomaly::detect(probe, thr);
      bad += !(out[0] == 0 && out[1] == 1 && out[2] == 0);
      ++cases;
    }
    report(6, "strict detection boundary", bad == 0, fmt("%.0f random thresholds, %.0f violations", cases, bad));
  });
}

anomaly::Metrics criterion7(const FastRun& run) {
  anomaly::Metrics tcp_metrics;
  guarded(7, "transport", [&] {
    std::mt19937_64 rng(77);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
      nn::AutoencoderConfig c;
      c.input_dim = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
      c.encoder_rates = {std::uniform_real_distribution<double>(0.5, 0.9)(rng)};
      c.seed = rng();
      auto m = nn::init_autoencoder(c);
      for (auto& L : m.layers) L.bias.setRandom();
      const auto back = transport::decode_model(transport::encode_model(m), c.fingerprint());
      mismatches += !(back == m);
    }

    transport::Broker broker;
    broker.start("127.0.0.1", 0);
    transport::TcpTransport tcp("127.0.0.1", broker.port());
    const auto over_tcp =
        fed::run_feddetect(run.config.fed, run.config.ae, run.devices, tcp, run.config.seed, "accept-fast");
    broker.stop();
    tcp_metrics = over_tcp.evaluation.metrics;
    const auto h_loop = transport::model_hash(run.loopback.model);
    const auto h_tcp = transport::model_hash(over_tcp.model);

    bool barrier = run.loopback.stats.rounds.size() == static_cast<std::size_t>(run.config.fed.total_rounds);
    for (const auto* res : {&run.loopback, &over_tcp}) {
      for (const auto& r : res->stats.rounds) barrier &= r.updates == 9 && r.distinct_senders == 9;
    }
    const bool ok = run.ok && mismatches == 0 && h_loop == h_tcp && barrier &&
                    fpr_tnr_identity(over_tcp.evaluation.metrics);
    report(7, "transport", ok,
           "1000 round trips, " + std::to_string(mismatches) + " mismatches; loopback " + h_loop + " tcp " + h_tcp +
               "; barrier " + (barrier ? "9/9 every round" : "VIOLATED"));
  });
  return tcp_metrics;
}

void criterion8(const FastRun& run, const std::vector<anomaly::Metrics>& extra) {
  guarded(8, "metrics identities", [&] {
    bool ok = run.ok && fpr_tnr_identity(run.loopback.evaluation.metrics);
    for (const auto& m : extra) ok &= fpr_tnr_identity(m);
    // Per-device views of the fast run.
    for (const auto& d : run.devices) {
      const auto ev = fed::evaluate(run.config.ae, run.loopback.model, run.loopback.threshold.tr_global,
                                    data::LabeledSet{d.test_features, d.test_labels});
      ok &= fpr_tnr_identity(ev.metrics);
    }
    // A published-style row written as text, read back through the report parser.
    app::RunReport row;
    row.run_id = "reference-fl";
    row.mode = "fl";
    row.cm = {100, 9655, 345, 0};
    row.metrics = anomaly::metrics(row.cm);
    row.manifest_hash = "n/a";
    const auto parsed = app::parse_report(app::render_report(row));
    const bool row_ok = parsed.metrics.fpr && std::abs(*parsed.metrics.fpr - 0.0345) < 1e-12 &&
                        std::abs(*parsed.metrics.tnr - 0.9655) < 1e-12 && fpr_tnr_identity(parsed.metrics);
    report(8, "metrics identities", ok && row_ok,
           fmt("fpr+tnr=1 on %.0f evaluations; reference row 3.45%% + 96.55%% parses to %.12f",
               1.0 + static_cast<double>(run.devices.size() + extra.size()),
               *parsed.metrics.fpr + *parsed.metrics.tnr));
  });
}

void criterion9(const FastRun& run) {
  guarded(9, "timing breakdown", [&] {
    // K=1, 10 rounds, 100 ms per published message: two delayed messages per
    // round (upload + next global model) -> 2.0 s of communication.
    auto fed = run.config.fed;
    fed.n_clients = 1;
    fed.total_rounds = 10;
    fed.schedule.total_rounds = 10;
    fed.local_epochs = 1;
    std::vector<data::DeviceDataset> one{run.devices.at(0)};
    one[0].train.conservativeResize(500, Eigen::NoChange);
    transport::LoopbackTransport base;
    transport::DelayedTransport delayed(base, std::chrono::milliseconds(100));
    const auto t0 = Clock::now();
    const auto res = fed::run_feddetect(fed, run.config.ae, one, delayed, 1, "accept-timing");
    const double wall = seconds(t0);

    app::RunReport r;
    r.run_id = "accept-timing";
    r.mode = "fl";
    r.comm = res.stats.comm;
    r.wall_seconds = wall;
    r.manifest_hash = "n/a";
    const auto text = app::render_report(r);
    bool fields = true;
    for (const char* key : {"end_to_end_seconds=", "comm_ratio=", "compute_ratio=", "bytes_up=", "bytes_down="}) {
      fields &= text.find(key) != std::string::npos;
    }
    const double comm = res.stats.comm.comm_seconds;
    const double injected = 2.0;
    const bool ok = fields && std::abs(comm - injected) <= 0.1 * injected && res.stats.comm.bytes_up > 0;
    report(9, "timing breakdown", ok,
           fmt("comm=%.3fs vs injected %.1fs (+-10%%), comm ratio=%.3f, wall=%.2fs", comm, injected,
               res.stats.comm.comm_ratio(), wall));
  });
}

}  // namespace

int main() {
  std::printf("fediot acceptance suite\n");
  FastRun run;
  criterion2(run);
  criterion3();
  criterion4();
  criterion5(run);
  criterion6();
  const auto tcp_metrics = criterion7(run);
  criterion8(run, {tcp_metrics});
  criterion9(run);
  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
