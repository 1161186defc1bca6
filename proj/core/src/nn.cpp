#include "fediot/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fediot/error.hpp"
#include "fediot/hash.hpp"

namespace fediot::nn {

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::kTanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::kSigmoid:
      z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      break;
  }
}

// Derivative expressed through the activation output y = act(z).
void multiply_activation_grad(Activation act, const Matrix& y, Matrix& grad) {
  switch (act) {
    case Activation::kTanh:
      grad.array() *= (1.0 - y.array().square());
      break;
    case Activation::kSigmoid:
      grad.array() *= y.array() * (1.0 - y.array());
      break;
  }
}

bool activated(const AutoencoderConfig& config, std::size_t layer, std::size_t n_layers) {
  return layer + 1 < n_layers || config.output_activation;
}

void check_batch(const ModelParams& model, const Matrix& batch) {
  if (model.layers.empty()) throw std::invalid_argument("model has no layers");
  if (static_cast<std::size_t>(batch.cols()) != model.layers.front().in_dim()) {
    std::ostringstream os;
    os << "batch width " << batch.cols() << " does not match model input dim "
       << model.layers.front().in_dim();
    throw std::invalid_argument(os.str());
  }
}

// activations[0] is the input; activations[k] is the output of layer k-1.
std::vector<Matrix> forward_cached(const AutoencoderConfig& config, const ModelParams& model,
                                   const Matrix& batch) {
  check_batch(model, batch);
  std::vector<Matrix> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(batch);
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& layer = model.layers[k];
    Matrix z = acts.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (activated(config, k, model.layers.size())) apply_activation(config.activation, z);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("autoencoder input_dim must be positive");
  if (encoder_rates.empty()) throw ConfigError("autoencoder needs at least one encoder rate");
  for (std::size_t i = 0; i < encoder_rates.size(); ++i) {
    const double r = encoder_rates[i];
    if (!(r > 0.0 && r < 1.0)) {
      throw ConfigError("encoder rate " + std::to_string(r) + " outside (0, 1)");
    }
    if (i > 0 && !(r < encoder_rates[i - 1])) {
      throw ConfigError("encoder rates must be strictly decreasing");
    }
    if (std::lround(r * static_cast<double>(input_dim)) < 1) {
      throw ConfigError("encoder rate " + std::to_string(r) + " yields a zero-width layer");
    }
  }
}

std::vector<std::size_t> AutoencoderConfig::layer_dims() const {
  validate();
  std::vector<std::size_t> dims{input_dim};
  for (double r : encoder_rates) {
    dims.push_back(static_cast<std::size_t>(std::lround(r * static_cast<double>(input_dim))));
  }
  // Decoder mirrors the encoder, ending at input_dim.
  for (std::size_t i = encoder_rates.size(); i-- > 0;) dims.push_back(dims[i]);
  return dims;
}

std::uint64_t AutoencoderConfig::fingerprint() const {
  Fnv1a h;
  h.update("fediot-autoencoder-v1");
  for (std::uint64_t d : layer_dims()) h.update_pod(d);
  h.update_pod(static_cast<std::uint8_t>(activation));
  h.update_pod(static_cast<std::uint8_t>(output_activation ? 1 : 0));
  return h.digest();
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].weight.rows() != other.layers[k].weight.rows() ||
        layers[k].weight.cols() != other.layers[k].weight.cols() ||
        layers[k].bias.size() != other.layers[k].bias.size()) {
      return false;
    }
  }
  return true;
}

bool ModelParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.config_fingerprint = config_fingerprint;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return z;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.config_fingerprint != b.config_fingerprint || !a.same_shape(b)) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weight != b.layers[k].weight || a.layers[k].bias != b.layers[k].bias) {
      return false;
    }
  }
  return true;
}

AdamState AdamState::fresh_for(const ModelParams& model) {
  AdamState s;
  s.m = model.zeros_like();
  s.v = model.zeros_like();
  return s;
}

std::size_t param_count(const AutoencoderConfig& config) {
  const auto dims = config.layer_dims();
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) n += dims[k + 1] * dims[k] + dims[k + 1];
  return n;
}

ModelParams init_autoencoder(const AutoencoderConfig& config) {
  const auto dims = config.layer_dims();
  std::mt19937_64 rng(config.seed);
  ModelParams model;
  model.config_fingerprint = config.fingerprint();
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const auto in = static_cast<Eigen::Index>(dims[k]);
    const auto out = static_cast<Eigen::Index>(dims[k + 1]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-scale, scale);
    Layer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Matrix forward(const AutoencoderConfig& config, const ModelParams& model, const Matrix& batch) {
  return std::move(forward_cached(config, model, batch).back());
}

Vector mse_per_sample(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw std::invalid_argument("mse_per_sample: shape mismatch");
  }
  if (x.cols() == 0) throw std::invalid_argument("mse_per_sample: zero feature dimension");
  return (x - x_hat).array().square().rowwise().sum().matrix() / static_cast<double>(x.cols());
}

Vector reconstruction_errors(const AutoencoderConfig& config, const ModelParams& model,
                             const Matrix& data) {
  constexpr Eigen::Index kChunk = 4096;
  Vector out(data.rows());
  for (Eigen::Index start = 0; start < data.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, data.rows() - start);
    const Matrix chunk = data.middleRows(start, n);
    out.segment(start, n) = mse_per_sample(chunk, forward(config, model, chunk));
  }
  return out;
}

LossAndGradients backward(const AutoencoderConfig& config, const ModelParams& model,
                          const Matrix& batch) {
  if (batch.rows() == 0) throw std::invalid_argument("backward: empty batch");
  const auto acts = forward_cached(config, model, batch);
  const std::size_t n_layers = model.layers.size();

  const Matrix residual = acts.back() - batch;
  const double denom = static_cast<double>(batch.rows()) * static_cast<double>(batch.cols());
  LossAndGradients out;
  out.loss = residual.squaredNorm() / denom;
  if (!std::isfinite(out.loss)) {
    throw DivergenceError("non-finite reconstruction loss during backward pass");
  }

  out.grads.config_fingerprint = model.config_fingerprint;
  out.grads.layers.resize(n_layers);
  Matrix delta = residual * (2.0 / denom);
  for (std::size_t k = n_layers; k-- > 0;) {
    if (activated(config, k, n_layers)) multiply_activation_grad(config.activation, acts[k + 1], delta);
    auto& g = out.grads.layers[k];
    g.weight = delta.transpose() * acts[k];
    g.bias = delta.colwise().sum().transpose();
    if (k > 0) delta = delta * model.layers[k].weight;
  }
  if (!out.grads.all_finite()) throw DivergenceError("non-finite gradient during backward pass");
  return out;
}

void adam_step(ModelParams& model, const Gradients& grads, AdamState& state, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: learning rate must be non-negative");
  if (!model.same_shape(grads)) throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (state.m.layers.empty() && state.v.layers.empty()) {
    state.m = model.zeros_like();
    state.v = model.zeros_like();
  }
  if (!model.same_shape(state.m) || !model.same_shape(state.v)) {
    throw std::invalid_argument("adam_step: optimizer state shape mismatch");
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.epsilon;

  auto update = [&](auto w, auto g, auto m, auto v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    update(model.layers[k].weight.array(), grads.layers[k].weight.array(),
           state.m.layers[k].weight.array(), state.v.layers[k].weight.array());
    update(model.layers[k].bias.array(), grads.layers[k].bias.array(),
           state.m.layers[k].bias.array(), state.v.layers[k].bias.array());
  }
  if (!model.all_finite()) throw DivergenceError("non-finite parameter after Adam step");
}

double cosine_lr(const LrSchedule& schedule, int round) {
  if (schedule.total_rounds < 1) throw std::invalid_argument("cosine_lr: total_rounds must be >= 1");
  if (round < 0 || round >= schedule.total_rounds) {
    throw std::out_of_range("cosine_lr: round " + std::to_string(round) + " outside [0, " +
                            std::to_string(schedule.total_rounds) + ")");
  }
  if (schedule.total_rounds == 1 || round == 0) return schedule.eta_max;
  if (round == schedule.total_rounds - 1) return schedule.eta_min;
  const double frac = static_cast<double>(round) / static_cast<double>(schedule.total_rounds - 1);
  return schedule.eta_min +
         0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace fediot::nn
