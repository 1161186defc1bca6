#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fediot::nn {

/// Row-major dense matrix; rows are samples, columns are features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint8_t { kTanh = 0, kSigmoid = 1 };

struct AutoencoderConfig {
  std::size_t input_dim = 115;
  std::vector<double> encoder_rates{0.75, 0.50, 0.33, 0.25};
  Activation activation = Activation::kTanh;
  /// Apply the activation on the reconstruction layer as well.
  bool output_activation = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an empty/non-decreasing rate list or a zero dimension.
  void validate() const;

  /// Full dimension chain, input to output, e.g. [115, 86, 58, 38, 29, 38, 58, 86, 115].
  std::vector<std::size_t> layer_dims() const;

  /// Hash of the architecture (dims and activations). The seed is not part of it.
  std::uint64_t fingerprint() const;
};

struct Layer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

/// Ordered layer weights of an autoencoder; the unit exchanged between clients and server.
struct ModelParams {
  std::vector<Layer> layers;
  std::uint64_t config_fingerprint = 0;

  std::size_t size() const;
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;
  /// Weights (row-major) then bias, layer by layer.
  std::vector<double> flatten() const;

  ModelParams zeros_like() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

using Gradients = ModelParams;

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh_for(const ModelParams& model);
};

struct LrSchedule {
  double eta_max = 1e-3;
  double eta_min = 0.0;
  int total_rounds = 30;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

std::size_t param_count(const AutoencoderConfig& config);

ModelParams init_autoencoder(const AutoencoderConfig& config);

/// Reconstruction of `batch` (B x input_dim).
Matrix forward(const AutoencoderConfig& config, const ModelParams& model, const Matrix& batch);

/// Per-row mean squared error: (1/d) * sum_i (x - x_hat)^2.
Vector mse_per_sample(const Matrix& x, const Matrix& x_hat);

/// Convenience: mse_per_sample(batch, forward(batch)), evaluated in chunks.
Vector reconstruction_errors(const AutoencoderConfig& config, const ModelParams& model,
                             const Matrix& data);

/// Analytic gradient of the batch-mean reconstruction MSE. Throws DivergenceError on non-finite values.
LossAndGradients backward(const AutoencoderConfig& config, const ModelParams& model,
                          const Matrix& batch);

/// One bias-corrected Adam update, in place.
void adam_step(ModelParams& model, const Gradients& grads, AdamState& state, double lr);

/// Cross-round cosine learning rate: eta_min + (eta_max - eta_min) * (1 + cos(pi t / (T-1))) / 2.
double cosine_lr(const LrSchedule& schedule, int round);

}  // namespace fediot::nn
