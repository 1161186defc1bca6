#include "fediot/anomaly.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fediot::anomaly {

DetectionThreshold compute_threshold(std::span<const double> mse_scores, double alpha) {
  if (mse_scores.size() < 2) {
    throw std::invalid_argument("compute_threshold: need at least 2 scores, got " +
                                std::to_string(mse_scores.size()));
  }
  // Welford's update; tests check it against a two-pass computation.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double s : mse_scores) {
    if (!std::isfinite(s) || s < 0.0) {
      throw std::invalid_argument("compute_threshold: scores must be finite and non-negative");
    }
    ++n;
    const double delta = s - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (s - mean);
  }
  DetectionThreshold t;
  t.mean_mse = mean;
  t.std_mse = std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
  t.alpha = alpha;
  t.n_samples = n;
  t.tr = t.mean_mse + alpha * t.std_mse;
  return t;
}

std::vector<std::uint8_t> detect(std::span<const double> scores, const DetectionThreshold& threshold) {
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold.tr ? 1 : 0;
  return out;
}

ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                                std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++cm.tp;
    else if (!p && !t) ++cm.tn;
    else if (p) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.acc = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  m.fpr = ratio(cm.fp, cm.tn + cm.fp);
  m.tpr = ratio(cm.tp, cm.tp + cm.fn);
  m.tnr = ratio(cm.tn, cm.tn + cm.fp);
  return m;
}

Metrics average(std::span<const Metrics> runs) {
  if (runs.empty()) throw std::invalid_argument("average: no metrics");
  Metrics out;
  auto mean_of = [&](auto field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (const auto& v = r.*field; v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  double acc = 0.0;
  for (const auto& r : runs) acc += r.acc;
  out.acc = acc / static_cast<double>(runs.size());
  out.fpr = mean_of(&Metrics::fpr);
  out.tpr = mean_of(&Metrics::tpr);
  out.tnr = mean_of(&Metrics::tnr);
  return out;
}

}  // namespace fediot::anomaly
