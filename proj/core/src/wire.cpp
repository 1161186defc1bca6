#include "fediot/wire.hpp"

#include "fediot/bytes.hpp"
#include "fediot/hash.hpp"

namespace fediot::transport {

namespace {

constexpr std::string_view kModelMagic = "FDIO";

std::size_t header_size(std::size_t n_layers) { return 4 + 1 + 8 + 2 + n_layers * 8; }

}  // namespace

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::kRegister: return "register";
    case MsgType::kRegisterAck: return "register_ack";
    case MsgType::kDatasetAssign: return "dataset_assign";
    case MsgType::kGlobalModel: return "global_model";
    case MsgType::kModelUpdate: return "model_update";
    case MsgType::kMseSequence: return "mse_sequence";
    case MsgType::kGlobalThreshold: return "global_threshold";
    case MsgType::kDone: return "done";
    case MsgType::kSubscribe: return "subscribe";
    case MsgType::kUnsubscribe: return "unsubscribe";
  }
  return "unknown";
}

bool is_valid_msg_type(std::uint8_t raw) {
  return (raw >= 1 && raw <= 8) || raw == 0x80 || raw == 0x81;
}

std::size_t frame_size(const Envelope& env) {
  return 4 + 2 + env.topic.size() + 1 + 4 + 1 + env.sender_id.size() + 4 + env.payload.size();
}

std::vector<std::uint8_t> encode_frame(const Envelope& env) {
  if (env.topic.size() > 0xffff) throw WireError(WireErrorCode::kMalformed, "topic longer than 65535 bytes");
  if (env.sender_id.size() > 0xff) throw WireError(WireErrorCode::kMalformed, "sender id longer than 255 bytes");
  const std::size_t total = frame_size(env);
  if (total - 4 > kMaxFrameBytes) throw WireError(WireErrorCode::kMalformed, "frame exceeds size limit");
  ByteWriter w(total);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(total - 4));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(env.topic.size()));
  w.put_bytes(env.topic);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(env.msg_type));
  w.put<std::uint32_t>(env.round);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(env.sender_id.size()));
  w.put_bytes(env.sender_id);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(env.payload.size()));
  w.put_bytes(env.payload);
  return w.take();
}

Envelope decode_frame_body(std::span<const std::uint8_t> body) {
  ByteReader r(body);
  Envelope env;
  try {
    env.topic = r.get_string(r.get<std::uint16_t>());
    const auto raw_type = r.get<std::uint8_t>();
    if (!is_valid_msg_type(raw_type)) {
      throw WireError(WireErrorCode::kMalformed, "unknown msg_type " + std::to_string(raw_type));
    }
    env.msg_type = static_cast<MsgType>(raw_type);
    env.round = r.get<std::uint32_t>();
    env.sender_id = r.get_string(r.get<std::uint8_t>());
    const auto payload_len = r.get<std::uint32_t>();
    const auto payload = r.get_bytes(payload_len);
    env.payload.assign(payload.begin(), payload.end());
  } catch (const BufferUnderflow& e) {
    throw WireError(WireErrorCode::kTruncated, std::string("truncated frame: ") + e.what());
  }
  if (r.remaining() != 0) {
    throw WireError(WireErrorCode::kMalformed, "payload length disagrees with frame length");
  }
  return env;
}

std::size_t encoded_model_size(const nn::ModelParams& model) {
  return header_size(model.layers.size()) + model.size() * sizeof(double);
}

void append_model(std::vector<std::uint8_t>& out, const nn::ModelParams& model) {
  if (model.layers.size() > 0xffff) throw WireError(WireErrorCode::kMalformed, "too many layers");
  ByteWriter w(encoded_model_size(model));
  w.put_bytes(kModelMagic);
  w.put<std::uint8_t>(kWireModelVersion);
  w.put<std::uint64_t>(model.config_fingerprint);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.out_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.in_dim()));
  }
  for (const auto& l : model.layers) {
    w.put_doubles(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    w.put_doubles(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  out.insert(out.end(), w.bytes().begin(), w.bytes().end());
}

std::vector<std::uint8_t> encode_model(const nn::ModelParams& model) {
  std::vector<std::uint8_t> out;
  append_model(out, model);
  return out;
}

nn::ModelParams decode_model(std::span<const std::uint8_t> bytes,
                             std::optional<std::uint64_t> expected_fingerprint) {
  ByteReader r(bytes);
  nn::ModelParams model;
  try {
    if (r.get_string(kModelMagic.size()) != kModelMagic) {
      throw WireError(WireErrorCode::kBadMagic, "model payload has bad magic");
    }
    const auto version = r.get<std::uint8_t>();
    if (version != kWireModelVersion) {
      throw WireError(WireErrorCode::kVersionMismatch,
                      "model payload version " + std::to_string(version) + ", expected " +
                          std::to_string(kWireModelVersion));
    }
    model.config_fingerprint = r.get<std::uint64_t>();
    if (expected_fingerprint && *expected_fingerprint != model.config_fingerprint) {
      throw WireError(WireErrorCode::kFingerprintMismatch,
                      "model fingerprint " + hex64(model.config_fingerprint) + " does not match expected " +
                          hex64(*expected_fingerprint));
    }
    const auto n_layers = r.get<std::uint16_t>();
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(n_layers);
    for (auto& [out, in] : shapes) {
      out = r.get<std::uint32_t>();
      in = r.get<std::uint32_t>();
      if (out == 0 || in == 0) throw WireError(WireErrorCode::kMalformed, "zero-sized layer");
    }
    for (std::size_t k = 1; k < shapes.size(); ++k) {
      if (shapes[k].second != shapes[k - 1].first) {
        throw WireError(WireErrorCode::kMalformed, "layer shapes do not chain");
      }
    }
    for (const auto& [out, in] : shapes) {
      // Check the remaining length before allocating from untrusted dimensions.
      const std::uint64_t need = (std::uint64_t{out} * in + out) * sizeof(double);
      if (need > r.remaining()) throw BufferUnderflow("layer data");
      nn::Layer layer{nn::Matrix(out, in), nn::Vector(out)};
      r.get_doubles(layer.weight.data(), std::size_t{out} * in);
      r.get_doubles(layer.bias.data(), out);
      model.layers.push_back(std::move(layer));
    }
  } catch (const BufferUnderflow& e) {
    throw WireError(WireErrorCode::kTruncated, std::string("truncated model payload: ") + e.what());
  }
  if (r.remaining() != 0) {
    throw WireError(WireErrorCode::kMalformed,
                    std::to_string(r.remaining()) + " trailing bytes after model payload");
  }
  return model;
}

std::string model_hash(const nn::ModelParams& model) {
  return hex64(fnv1a(encode_model(model)));
}

}  // namespace fediot::transport
