#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fediot::anomaly {

inline constexpr double kDefaultAlpha = 3.0;

/// Anomaly cutoff tr = mean + alpha * sigma over a benign MSE sequence.
struct DetectionThreshold {
  double tr = 0.0;
  double mean_mse = 0.0;
  double std_mse = 0.0;  // population (1/N)
  double alpha = kDefaultAlpha;
  std::size_t n_samples = 0;
};

/// Positive class is "malicious".
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Ratios with an undefined denominator are std::nullopt (not-applicable), never a silent 0.
struct Metrics {
  double acc = 0.0;
  std::optional<double> fpr;
  std::optional<double> tpr;
  std::optional<double> tnr;
};

DetectionThreshold compute_threshold(std::span<const double> mse_scores, double alpha = kDefaultAlpha);

/// label = 1 iff score > tr.
std::vector<std::uint8_t> detect(std::span<const double> scores, const DetectionThreshold& threshold);

ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

Metrics metrics(const ConfusionMatrix& cm);

/// Element-wise mean of per-model metrics; optional ratios average over models where defined.
Metrics average(std::span<const Metrics> runs);

}  // namespace fediot::anomaly
