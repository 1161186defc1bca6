#include <benchmark/benchmark.h>

#include <random>

#include "fediot/federation.hpp"
#include "fediot/nn.hpp"
#include "fediot/wire.hpp"

using namespace fediot;

namespace {

nn::Matrix random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

const nn::AutoencoderConfig kAe{};

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto model = nn::init_autoencoder(kAe);
  const auto x = random_batch(state.range(0), 115, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(kAe, model, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(3000);

static void BM_Backward(benchmark::State& state) {
  const auto model = nn::init_autoencoder(kAe);
  const auto x = random_batch(64, 115, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::backward(kAe, model, x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Backward);

static void BM_AdamStep(benchmark::State& state) {
  auto model = nn::init_autoencoder(kAe);
  const auto g = nn::backward(kAe, model, random_batch(64, 115, 3)).grads;
  auto adam = nn::AdamState::fresh_for(model);
  for (auto _ : state) nn::adam_step(model, g, adam, 1e-6);
}
BENCHMARK(BM_AdamStep);

static void BM_Aggregate(benchmark::State& state) {
  std::vector<fed::RoundUpdate> ups;
  for (int i = 0; i < state.range(0); ++i) {
    auto c = kAe;
    c.seed = static_cast<std::uint64_t>(i);
    fed::RoundUpdate u;
    u.client_id = "c" + std::to_string(i);
    u.params = nn::init_autoencoder(c);
    ups.push_back(std::move(u));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fed::aggregate(ups));
}
BENCHMARK(BM_Aggregate)->Arg(9);

static void BM_EncodeModel(benchmark::State& state) {
  const auto model = nn::init_autoencoder(kAe);
  for (auto _ : state) benchmark::DoNotOptimize(transport::encode_model(model));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(transport::encoded_model_size(model)));
}
BENCHMARK(BM_EncodeModel);

static void BM_DecodeModel(benchmark::State& state) {
  const auto bytes = transport::encode_model(nn::init_autoencoder(kAe));
  for (auto _ : state) benchmark::DoNotOptimize(transport::decode_model(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeModel);

static void BM_EncodeFrame(benchmark::State& state) {
  transport::Envelope env;
  env.topic = "fediot/run/client/c0/model_update";
  env.msg_type = transport::MsgType::kModelUpdate;
  env.sender_id = "c0";
  env.payload = transport::encode_model(nn::init_autoencoder(kAe));
  for (auto _ : state) benchmark::DoNotOptimize(transport::encode_frame(env));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(env.payload.size()));
}
BENCHMARK(BM_EncodeFrame);
BENCHMARK_MAIN();
