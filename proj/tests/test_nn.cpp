#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fediot/error.hpp"
#include "fediot/nn.hpp"
#include "oracles.hpp"

using namespace fediot;
using nn::Matrix;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::vector<oracle::Row> rows_of(const Matrix& m) {
  std::vector<oracle::Row> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
  return out;
}

}  // namespace

TEST(Autoencoder, DefaultLayerDims) {
  nn::AutoencoderConfig c;
  EXPECT_EQ(c.layer_dims(), (std::vector<std::size_t>{115, 86, 58, 38, 29, 38, 58, 86, 115}));
}

TEST(Autoencoder, ParamCountMatchesHandArithmetic) {
  nn::AutoencoderConfig c;
  // 115*86+86 + 86*58+58 + 58*38+38 + 38*29+29, doubled by the mirror
  const std::size_t encoder = 9976 + 5046 + 2242 + 1131;
  const std::size_t decoder = 29 * 38 + 38 + 38 * 58 + 58 + 58 * 86 + 86 + 86 * 115 + 115;
  EXPECT_EQ(nn::param_count(c), encoder + decoder);
  EXPECT_EQ(nn::param_count(c), 36876u);
  EXPECT_EQ(nn::init_autoencoder(c).size(), 36876u);
}

TEST(Autoencoder, ToyParamCount) {
  nn::AutoencoderConfig c;
  c.input_dim = 2;
  c.encoder_rates = {0.5};
  const auto m = nn::init_autoencoder(c);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(m.layers[0].weight.rows(), 1);
  EXPECT_EQ(m.layers[0].weight.cols(), 2);
  EXPECT_EQ(m.layers[1].weight.rows(), 2);
  EXPECT_EQ(m.layers[1].weight.cols(), 1);
  EXPECT_EQ(nn::param_count(c), 7u);
}

TEST(Autoencoder, InitIsDeterministicAndBounded) {
  nn::AutoencoderConfig c;
  c.seed = 17;
  const auto a = nn::init_autoencoder(c);
  const auto b = nn::init_autoencoder(c);
  EXPECT_TRUE(a == b);
  c.seed = 18;
  EXPECT_FALSE(a == nn::init_autoencoder(c));
  for (const auto& L : a.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(L.in_dim()));
    EXPECT_LE(L.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(L.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Autoencoder, RejectsBadConfigs) {
  nn::AutoencoderConfig c;
  c.input_dim = 0;
  EXPECT_THROW(nn::init_autoencoder(c), ConfigError);
  c = {};
  c.encoder_rates = {0.5, 0.75};
  EXPECT_THROW(c.validate(), ConfigError);
  c.encoder_rates = {1.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c.input_dim = 3;
  c.encoder_rates = {0.1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  nn::AutoencoderConfig c;
  auto m = nn::init_autoencoder(c).zeros_like();
  const auto y = nn::forward(c, m, random_batch(4, 115, 1));
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, IdenticalRowsGiveIdenticalOutputs) {
  nn::AutoencoderConfig c;
  const auto m = nn::init_autoencoder(c);
  Matrix x = random_batch(1, 115, 2).replicate(5, 1);
  const auto y = nn::forward(c, m, x);
  for (Eigen::Index r = 1; r < y.rows(); ++r) EXPECT_LE((y.row(r) - y.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, ToyNetMatchesHandComputation) {
  nn::AutoencoderConfig c;
  c.input_dim = 2;
  c.encoder_rates = {0.5};
  auto m = nn::init_autoencoder(c);
  m.layers[0].weight << 0.5, -0.25;
  m.layers[0].bias << 0.1;
  m.layers[1].weight << 2.0, -1.0;
  m.layers[1].bias << 0.0, 0.3;
  Matrix x(1, 2);
  x << 0.4, 0.8;
  const double h = std::tanh(0.5 * 0.4 - 0.25 * 0.8 + 0.1);
  const auto y = nn::forward(c, m, x);
  EXPECT_NEAR(y(0, 0), std::tanh(2.0 * h), 1e-15);
  EXPECT_NEAR(y(0, 1), std::tanh(-h + 0.3), 1e-15);
}

TEST(Forward, MatchesOracleOnDefaultNet) {
  nn::AutoencoderConfig c;
  c.seed = 5;
  const auto m = nn::init_autoencoder(c);
  const auto x = random_batch(3, 115, 9);
  const auto y = nn::forward(c, m, x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto ref = oracle::forward_row(m, rows_of(x)[static_cast<std::size_t>(r)], false, true);
    for (Eigen::Index i = 0; i < 115; ++i) EXPECT_NEAR(y(r, i), ref[static_cast<std::size_t>(i)], 1e-13);
  }
}

TEST(Forward, RejectsWrongWidth) {
  nn::AutoencoderConfig c;
  const auto m = nn::init_autoencoder(c);
  EXPECT_THROW(nn::forward(c, m, random_batch(2, 114, 1)), std::invalid_argument);
}

TEST(Mse, PerSampleValues) {
  Matrix x(2, 2), y(2, 2);
  x << 0, 0, 1, 1;
  y << 1, 1, 1, 0;
  const auto e = nn::mse_per_sample(x, y);
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], 0.5);
}

TEST(Backward, LossMatchesOracle) {
  nn::AutoencoderConfig c;
  c.input_dim = 7;
  c.encoder_rates = {0.6, 0.3};
  c.seed = 3;
  const auto m = nn::init_autoencoder(c);
  const auto x = random_batch(6, 7, 4);
  EXPECT_NEAR(nn::backward(c, m, x).loss, oracle::batch_loss(m, rows_of(x), false, true), 1e-14);
}

TEST(Backward, FiniteDifferenceSmallNet) {
  nn::AutoencoderConfig c;
  c.input_dim = 5;
  c.encoder_rates = {0.6};
  c.seed = 11;
  auto m = nn::init_autoencoder(c);
  const auto x = random_batch(4, 5, 12);
  const auto g = nn::backward(c, m, x).grads;
  const double h = 1e-6;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < m.layers[l].weight.size(); ++i) {
      double& w = m.layers[l].weight.data()[i];
      const double w0 = w;
      w = w0 + h;
      const double up = oracle::batch_loss(m, rows_of(x), false, true);
      w = w0 - h;
      const double dn = oracle::batch_loss(m, rows_of(x), false, true);
      w = w0;
      EXPECT_NEAR(g.layers[l].weight.data()[i], (up - dn) / (2 * h), 1e-8);
    }
  }
}

TEST(Backward, NonFiniteInputRaisesDivergence) {
  nn::AutoencoderConfig c;
  c.input_dim = 4;
  c.encoder_rates = {0.5};
  auto m = nn::init_autoencoder(c);
  m.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(nn::backward(c, m, random_batch(2, 4, 1)), DivergenceError);
}

TEST(Adam, FirstStepIsSignStep) {
  nn::AutoencoderConfig c;
  c.input_dim = 4;
  c.encoder_rates = {0.5};
  auto m = nn::init_autoencoder(c);
  const auto before = m;
  auto g = m.zeros_like();
  for (auto& L : g.layers) {
    for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = (i % 2 ? -1.0 : 1.0) * (0.5 + i);
    L.bias.setConstant(-3.0);
  }
  auto st = nn::AdamState::fresh_for(m);
  nn::adam_step(m, g, st, 1e-3);
  EXPECT_EQ(st.step_count, 1u);
  const auto a = before.flatten(), b = m.flatten(), gf = g.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i] - a[i], -1e-3 * (gf[i] > 0 ? 1 : -1), 1e-10);
}

TEST(Adam, ZeroLrLeavesWeightsButAdvancesMoments) {
  nn::AutoencoderConfig c;
  c.input_dim = 4;
  c.encoder_rates = {0.5};
  auto m = nn::init_autoencoder(c);
  const auto before = m;
  auto g = m.zeros_like();
  g.layers[0].weight.setConstant(1.0);
  auto st = nn::AdamState::fresh_for(m);
  nn::adam_step(m, g, st, 0.0);
  EXPECT_TRUE(m == before);
  EXPECT_EQ(st.step_count, 1u);
  EXPECT_GT(st.v.layers[0].weight(0, 0), 0.0);
}

TEST(Adam, ShapeMismatchRejected) {
  nn::AutoencoderConfig a, b;
  a.input_dim = 4;
  a.encoder_rates = {0.5};
  b.input_dim = 6;
  b.encoder_rates = {0.5};
  auto m = nn::init_autoencoder(a);
  auto st = nn::AdamState::fresh_for(m);
  EXPECT_THROW(nn::adam_step(m, nn::init_autoencoder(b), st, 1e-3), std::invalid_argument);
}

TEST(Cosine, Endpoints) {
  nn::LrSchedule s{1e-3, 1e-5, 30};
  EXPECT_DOUBLE_EQ(nn::cosine_lr(s, 0), 1e-3);
  EXPECT_DOUBLE_EQ(nn::cosine_lr(s, 29), 1e-5);
  EXPECT_NEAR(nn::cosine_lr({1e-3, 0.0, 3}, 1), 5e-4, 1e-18);
}

TEST(Cosine, MonotoneNonIncreasing) {
  nn::LrSchedule s{1e-2, 0.0, 30};
  for (int t = 1; t < 30; ++t) EXPECT_LE(nn::cosine_lr(s, t), nn::cosine_lr(s, t - 1));
}

TEST(Cosine, SingleRoundAndRangeChecks) {
  EXPECT_DOUBLE_EQ(nn::cosine_lr({1e-3, 0.0, 1}, 0), 1e-3);
  EXPECT_THROW(nn::cosine_lr({1e-3, 0.0, 5}, 5), std::out_of_range);
  EXPECT_THROW(nn::cosine_lr({1e-3, 0.0, 5}, -1), std::out_of_range);
}
