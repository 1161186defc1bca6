#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "fediot/error.hpp"
#include "fediot/protocol.hpp"
#include "fediot/pubsub.hpp"
#include "fediot/wire.hpp"

using namespace fediot;
using namespace fediot::transport;
namespace protocol = fediot::fed::protocol;
using namespace std::chrono_literals;

namespace {

nn::ModelParams random_model(std::mt19937_64& rng) {
  nn::AutoencoderConfig c;
  c.input_dim = std::uniform_int_distribution<std::size_t>(2, 40)(rng);
  const double top = std::uniform_real_distribution<double>(0.55, 0.95)(rng);
  c.encoder_rates = {top};
  if (c.input_dim > 8) c.encoder_rates.push_back(top / 2);
  c.seed = rng();
  auto m = nn::init_autoencoder(c);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (auto& L : m.layers) {
    for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = u(rng);
  }
  // Extreme but finite bit patterns survive too.
  m.layers[0].weight(0, 0) = std::numeric_limits<double>::denorm_min();
  m.layers.back().bias[0] = -std::numeric_limits<double>::max();
  return m;
}

Envelope sample_env(const std::string& topic, MsgType t, std::uint32_t round, std::vector<std::uint8_t> payload) {
  Envelope e;
  e.topic = topic;
  e.msg_type = t;
  e.round = round;
  e.sender_id = "tester";
  e.payload = std::move(payload);
  return e;
}

}  // namespace

TEST(Wire, ModelRoundTripBitExact1000) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_model(rng);
    const auto bytes = encode_model(m);
    ASSERT_EQ(bytes.size(), encoded_model_size(m));
    const auto back = decode_model(bytes, m.config_fingerprint);
    ASSERT_TRUE(back == m) << "case " << i;
    ASSERT_EQ(model_hash(back), model_hash(m));
  }
}

TEST(Wire, ToyModelLayout) {
  nn::AutoencoderConfig c;
  c.input_dim = 2;
  c.encoder_rates = {0.5};
  const auto m = nn::init_autoencoder(c);
  const auto b = encode_model(m);
  // 4 magic + 1 version + 8 fingerprint + 2 count + 2*(4+4) dims + 7*8 values
  EXPECT_EQ(b.size(), 87u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "FDIO");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[13], 2);  // layer count, little-endian
  EXPECT_EQ(b[14], 0);
  double w00;
  std::memcpy(&w00, b.data() + 31, 8);
  EXPECT_EQ(w00, m.layers[0].weight(0, 0));
}

TEST(Wire, ModelErrorCodes) {
  std::mt19937_64 rng(1);
  const auto m = random_model(rng);
  auto bytes = encode_model(m);
  auto code_of = [](const std::vector<std::uint8_t>& b, std::optional<std::uint64_t> fp = std::nullopt) {
    try {
      decode_model(b, fp);
    } catch (const WireError& e) {
      return e.code();
    }
    return static_cast<WireErrorCode>(-1);
  };
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of(bad), WireErrorCode::kBadMagic);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(code_of(bad), WireErrorCode::kVersionMismatch);
  EXPECT_EQ(code_of(bytes, m.config_fingerprint ^ 1), WireErrorCode::kFingerprintMismatch);
  bad.assign(bytes.begin(), bytes.end() - 3);
  EXPECT_EQ(code_of(bad), WireErrorCode::kTruncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(code_of(bad), WireErrorCode::kMalformed);
  bad = bytes;
  bad[15] ^= 1;  // first layer out_dim no longer chains
  EXPECT_NE(code_of(bad), static_cast<WireErrorCode>(-1));
}

TEST(Wire, FrameRoundTripAndErrors) {
  const auto env = sample_env("fediot/r/server/model_update", MsgType::kModelUpdate, 7, {1, 2, 3});
  const auto frame = encode_frame(env);
  EXPECT_EQ(frame.size(), frame_size(env));
  std::uint32_t len;
  std::memcpy(&len, frame.data(), 4);
  ASSERT_EQ(len + 4, frame.size());
  const auto back = decode_frame_body(std::span(frame).subspan(4));
  EXPECT_EQ(back.topic, env.topic);
  EXPECT_EQ(back.msg_type, env.msg_type);
  EXPECT_EQ(back.round, 7u);
  EXPECT_EQ(back.sender_id, "tester");
  EXPECT_EQ(back.payload, env.payload);

  auto body = std::vector<std::uint8_t>(frame.begin() + 4, frame.end());
  try {
    decode_frame_body(std::span(body).first(body.size() - 4));
    FAIL();
  } catch (const WireError& e) {
    EXPECT_TRUE(e.code() == WireErrorCode::kTruncated || e.code() == WireErrorCode::kMalformed);
  }
  body[2 + env.topic.size()] = 0x42;  // msg_type byte
  try {
    decode_frame_body(body);
    FAIL();
  } catch (const WireError& e) {
    EXPECT_EQ(e.code(), WireErrorCode::kMalformed);
  }
}

TEST(Protocol, PayloadRoundTrips) {
  nn::AutoencoderConfig c;
  c.input_dim = 6;
  c.encoder_rates = {0.5};
  const auto m = nn::init_autoencoder(c);
  protocol::GlobalModel g{1e-4, 30, 0.25, true, m};
  const auto g2 = protocol::decode_global_model(protocol::encode(g), c.fingerprint());
  EXPECT_EQ(g2.lr, 1e-4);
  EXPECT_TRUE(g2.final_model);
  EXPECT_TRUE(g2.model == m);

  protocol::ModelUpdate u{0.5, 1.5, m};
  const auto ub = protocol::encode(u);
  EXPECT_EQ(ub.size(), protocol::kModelUpdateHeaderBytes + encoded_model_size(m));
  EXPECT_EQ(protocol::decode_model_update(ub, c.fingerprint()).local_loss, 0.5);

  protocol::MseSequence s;
  s.scores = {0.1, 0.2};
  s.comm.bytes_up = 10;
  s.comm.per_round.push_back({3, 1.0, 2.0, 0.5, 4, 5});
  const auto s2 = protocol::decode_mse_sequence(protocol::encode(s));
  EXPECT_EQ(s2.scores, s.scores);
  ASSERT_EQ(s2.comm.per_round.size(), 1u);
  EXPECT_EQ(s2.comm.per_round[0].round, 3);
  EXPECT_EQ(s2.comm.bytes_up, 10u);

  protocol::DatasetAssign d{"c1", 2, "dev", nn::Matrix::Random(3, 6), nn::Matrix::Random(2, 6)};
  const auto d2 = protocol::decode_dataset_assign(protocol::encode(d));
  EXPECT_EQ(d2.train, d.train);
  EXPECT_EQ(d2.eval, d.eval);
  EXPECT_EQ(d2.device_index, 2u);

  auto tb = protocol::encode(anomaly::DetectionThreshold{1, 2, 3, 4, 5});
  tb.pop_back();
  EXPECT_THROW(protocol::decode_threshold(tb), WireError);
}

TEST(Topics, Matching) {
  EXPECT_TRUE(topic_matches("fediot/r/server/+", "fediot/r/server/model_update"));
  EXPECT_FALSE(topic_matches("fediot/r/server/+", "fediot/r/server/a/b"));
  EXPECT_TRUE(topic_matches("fediot/r/#", "fediot/r/client/c1/global_model"));
  EXPECT_TRUE(topic_matches("fediot/+/client/+/done", "fediot/x/client/c2/done"));
  EXPECT_FALSE(topic_matches("fediot/r/client/c1/#", "fediot/r/client/c2/done"));
  EXPECT_TRUE(topic_matches("a/b", "a/b"));
  EXPECT_FALSE(topic_matches("a/b", "a/b/c"));
  EXPECT_EQ(server_topic("run", MsgType::kModelUpdate).rfind("fediot/run/server/", 0), 0u);
  EXPECT_EQ(client_topic("run", "c1", MsgType::kDone).rfind("fediot/run/client/c1/", 0), 0u);
}

TEST(Loopback, DeliversToMatchingSubscribers) {
  LoopbackTransport t;
  auto a = t.connect("a");
  auto b = t.connect("b");
  a->subscribe("x/#");
  b->subscribe("y/+");
  b->publish(sample_env("x/1", MsgType::kDone, 0, {9}));
  b->publish(sample_env("z/1", MsgType::kDone, 0, {}));
  auto got = a->try_receive();
  ASSERT_TRUE(got);
  EXPECT_EQ(got->payload, std::vector<std::uint8_t>{9});
  EXPECT_FALSE(a->try_receive());
  EXPECT_FALSE(b->try_receive());
  EXPECT_GT(b->bytes_sent(), 0u);
}

TEST(Tcp, BrokerRoutesBetweenClients) {
  Broker broker;
  broker.start("127.0.0.1", 0);
  TcpTransport t("127.0.0.1", broker.port());
  auto a = t.connect("a");
  auto b = t.connect("b");
  a->subscribe("fediot/r/client/a/#");
  b->subscribe("fediot/r/client/+/done");
  std::this_thread::sleep_for(50ms);  // let subscriptions land
  std::vector<std::uint8_t> big(3 << 20);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 31);
  b->publish(sample_env("fediot/r/client/a/global_model", MsgType::kGlobalModel, 2, big));
  b->publish(sample_env("fediot/r/client/a/done", MsgType::kDone, 3, {}));
  auto m1 = a->receive(5s);
  auto m2 = a->receive(5s);
  ASSERT_TRUE(m1 && m2);
  EXPECT_EQ(m1->payload, big);
  EXPECT_EQ(m1->sender_id, "tester");  // sender is publisher-set
  EXPECT_EQ(m2->msg_type, MsgType::kDone);
  auto m3 = b->receive(5s);  // b's own done matches its filter
  ASSERT_TRUE(m3);
  EXPECT_EQ(m3->round, 3u);
  EXPECT_EQ(broker.connection_count(), 2u);
  broker.stop();
  EXPECT_THROW(
      {
        while (a->receive(2s)) {
        }
      },
      TransportError);
}

TEST(Tcp, ConnectRetriesThenFails) {
  RetryPolicy p;
  p.max_retries = 2;
  p.initial_backoff = 10ms;
  TcpTransport t("127.0.0.1", 1, p);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(t.connect("x"), TransportError);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, 30ms);
}

TEST(Tcp, ConnectSucceedsWhenBrokerAppearsLate) {
  Broker broker;
  broker.start("127.0.0.1", 0);
  const auto port = broker.port();
  broker.stop();
  std::thread late([&] {
    std::this_thread::sleep_for(150ms);
    broker.start("127.0.0.1", port);
  });
  RetryPolicy p;
  p.initial_backoff = 100ms;
  TcpTransport t("127.0.0.1", port, p);
  auto c = t.connect("late");
  late.join();
  EXPECT_TRUE(c != nullptr);
  broker.stop();
}

TEST(Address, Parse) {
  EXPECT_EQ(parse_address("10.0.0.1:99"), std::make_pair(std::string("10.0.0.1"), std::uint16_t{99}));
  EXPECT_EQ(parse_address("host").second, kDefaultBrokerPort);
  EXPECT_THROW(parse_address("h:notaport"), ConfigError);
}

TEST(Timing, MeasureRoundSubtractsAggregation) {
  CommStats s;
  RoundMarks m;
  const auto t0 = RoundMarks::Clock::now();
  m.train_start = t0;
  m.train_end = t0 + 2s;
  m.upload_start = t0 + 2s;
  m.global_receipt = t0 + 3500ms;
  m.server_aggregation_seconds = 0.5;
  measure_round(s, m);
  EXPECT_NEAR(s.compute_seconds, 2.0, 1e-9);
  EXPECT_NEAR(s.comm_seconds, 1.0, 1e-9);
  EXPECT_NEAR(s.aggregation_seconds, 0.5, 1e-9);
  EXPECT_NEAR(s.comm_ratio() + s.compute_ratio(), 1.0, 1e-12);
  m.global_receipt = t0;  // before upload
  EXPECT_THROW(measure_round(s, m), std::invalid_argument);
}
