#include "fediot/protocol.hpp"

#include "fediot/bytes.hpp"

namespace fediot::fed::protocol {

using transport::WireError;
using transport::WireErrorCode;

namespace {

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const BufferUnderflow& e) {
    throw WireError(WireErrorCode::kTruncated, std::string("truncated ") + what + " payload: " + e.what());
  }
}

void put_matrix(ByteWriter& w, const nn::Matrix& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put_doubles(m.data(), static_cast<std::size_t>(m.size()));
}

nn::Matrix get_matrix(ByteReader& r, std::uint32_t width) {
  const auto rows = r.get<std::uint32_t>();
  if (std::uint64_t{rows} * width * sizeof(double) > r.remaining()) throw BufferUnderflow("matrix body");
  nn::Matrix m(rows, width);
  r.get_doubles(m.data(), std::size_t{rows} * width);
  return m;
}

void expect_end(const ByteReader& r, const char* what) {
  if (r.remaining() != 0) {
    throw WireError(WireErrorCode::kMalformed, std::string("trailing bytes in ") + what + " payload");
  }
}

}  // namespace

std::vector<std::uint8_t> encode(const RegisterAck& msg) {
  ByteWriter w;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(msg.client_id.size()));
  w.put_bytes(msg.client_id);
  return w.take();
}

RegisterAck decode_register_ack(std::span<const std::uint8_t> bytes) {
  return guarded("register_ack", [&] {
    ByteReader r(bytes);
    RegisterAck msg{r.get_string(r.get<std::uint8_t>())};
    expect_end(r, "register_ack");
    return msg;
  });
}

std::vector<std::uint8_t> encode(const DatasetAssign& msg) {
  ByteWriter w;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(msg.client_id.size()));
  w.put_bytes(msg.client_id);
  w.put<std::uint32_t>(msg.device_index);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(msg.device_id.size()));
  w.put_bytes(msg.device_id);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.train.cols()));
  put_matrix(w, msg.train);
  put_matrix(w, msg.eval);
  return w.take();
}

DatasetAssign decode_dataset_assign(std::span<const std::uint8_t> bytes) {
  return guarded("dataset_assign", [&] {
    ByteReader r(bytes);
    DatasetAssign msg;
    msg.client_id = r.get_string(r.get<std::uint8_t>());
    msg.device_index = r.get<std::uint32_t>();
    msg.device_id = r.get_string(r.get<std::uint16_t>());
    const auto width = r.get<std::uint32_t>();
    msg.train = get_matrix(r, width);
    msg.eval = get_matrix(r, width);
    expect_end(r, "dataset_assign");
    return msg;
  });
}

std::vector<std::uint8_t> encode(const GlobalModel& msg) {
  ByteWriter w;
  w.put<double>(msg.lr);
  w.put<std::uint32_t>(msg.total_rounds);
  w.put<double>(msg.aggregation_seconds);
  w.put<std::uint8_t>(msg.final_model ? 1 : 0);
  auto out = w.take();
  transport::append_model(out, msg.model);
  return out;
}

GlobalModel decode_global_model(std::span<const std::uint8_t> bytes, std::uint64_t fingerprint) {
  return guarded("global_model", [&] {
    ByteReader r(bytes);
    GlobalModel msg;
    msg.lr = r.get<double>();
    msg.total_rounds = r.get<std::uint32_t>();
    msg.aggregation_seconds = r.get<double>();
    msg.final_model = r.get<std::uint8_t>() != 0;
    msg.model = transport::decode_model(bytes.subspan(r.position()), fingerprint);
    return msg;
  });
}

std::vector<std::uint8_t> encode(const ModelUpdate& msg) {
  ByteWriter w;
  w.put<double>(msg.local_loss);
  w.put<double>(msg.train_seconds);
  auto out = w.take();
  transport::append_model(out, msg.model);
  return out;
}

ModelUpdate decode_model_update(std::span<const std::uint8_t> bytes, std::uint64_t fingerprint) {
  return guarded("model_update", [&] {
    ByteReader r(bytes);
    ModelUpdate msg;
    msg.local_loss = r.get<double>();
    msg.train_seconds = r.get<double>();
    msg.model = transport::decode_model(bytes.subspan(r.position()), fingerprint);
    return msg;
  });
}

std::vector<std::uint8_t> encode(const MseSequence& msg) {
  ByteWriter w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.scores.size()));
  w.put_doubles(msg.scores.data(), msg.scores.size());
  const auto& c = msg.comm;
  w.put<std::uint64_t>(c.bytes_up);
  w.put<std::uint64_t>(c.bytes_down);
  w.put<double>(c.comm_seconds);
  w.put<double>(c.compute_seconds);
  w.put<double>(c.aggregation_seconds);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.per_round.size()));
  for (const auto& rt : c.per_round) {
    w.put<std::int32_t>(rt.round);
    w.put<double>(rt.compute_seconds);
    w.put<double>(rt.comm_seconds);
    w.put<double>(rt.aggregation_seconds);
    w.put<std::uint64_t>(rt.bytes_up);
    w.put<std::uint64_t>(rt.bytes_down);
  }
  return w.take();
}

MseSequence decode_mse_sequence(std::span<const std::uint8_t> bytes) {
  return guarded("mse_sequence", [&] {
    ByteReader r(bytes);
    MseSequence msg;
    const auto n = r.get<std::uint32_t>();
    if (std::uint64_t{n} * sizeof(double) > r.remaining()) throw BufferUnderflow("scores");
    msg.scores.resize(n);
    r.get_doubles(msg.scores.data(), n);
    auto& c = msg.comm;
    c.bytes_up = r.get<std::uint64_t>();
    c.bytes_down = r.get<std::uint64_t>();
    c.comm_seconds = r.get<double>();
    c.compute_seconds = r.get<double>();
    c.aggregation_seconds = r.get<double>();
    const auto rounds = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rounds; ++i) {
      transport::RoundTiming rt;
      rt.round = r.get<std::int32_t>();
      rt.compute_seconds = r.get<double>();
      rt.comm_seconds = r.get<double>();
      rt.aggregation_seconds = r.get<double>();
      rt.bytes_up = r.get<std::uint64_t>();
      rt.bytes_down = r.get<std::uint64_t>();
      c.per_round.push_back(rt);
    }
    expect_end(r, "mse_sequence");
    return msg;
  });
}

std::vector<std::uint8_t> encode(const anomaly::DetectionThreshold& msg) {
  ByteWriter w;
  w.put<double>(msg.tr);
  w.put<double>(msg.mean_mse);
  w.put<double>(msg.std_mse);
  w.put<double>(msg.alpha);
  w.put<std::uint64_t>(msg.n_samples);
  return w.take();
}

anomaly::DetectionThreshold decode_threshold(std::span<const std::uint8_t> bytes) {
  return guarded("global_threshold", [&] {
    ByteReader r(bytes);
    anomaly::DetectionThreshold t;
    t.tr = r.get<double>();
    t.mean_mse = r.get<double>();
    t.std_mse = r.get<double>();
    t.alpha = r.get<double>();
    t.n_samples = r.get<std::uint64_t>();
    expect_end(r, "global_threshold");
    return t;
  });
}

}  // namespace fediot::fed::protocol
