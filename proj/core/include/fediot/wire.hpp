#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fediot/nn.hpp"

namespace fediot::transport {

enum class MsgType : std::uint8_t {
  kRegister = 1,
  kRegisterAck = 2,
  kDatasetAssign = 3,
  kGlobalModel = 4,
  kModelUpdate = 5,
  kMseSequence = 6,
  kGlobalThreshold = 7,
  kDone = 8,
  // Broker link control; never delivered to subscribers.
  kSubscribe = 0x80,
  kUnsubscribe = 0x81,
};

std::string_view to_string(MsgType type);
bool is_valid_msg_type(std::uint8_t raw);

struct Envelope {
  std::string topic;
  MsgType msg_type = MsgType::kRegister;
  std::uint32_t round = 0;
  std::string sender_id;
  std::vector<std::uint8_t> payload;
  std::chrono::steady_clock::time_point received_at{};  // inbox arrival, local only, not on the wire
};

enum class WireErrorCode {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kFingerprintMismatch,
  kMalformed,
};

class WireError : public std::runtime_error {
 public:
  WireError(WireErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  WireErrorCode code() const noexcept { return code_; }

 private:
  WireErrorCode code_;
};

inline constexpr std::uint8_t kWireModelVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 256u << 20;

// Frame layout (all little-endian):
//   u32 body_length
//   u16 topic_len, topic, u8 msg_type, u32 round, u8 sender_len, sender, u32 payload_len, payload
std::vector<std::uint8_t> encode_frame(const Envelope& env);
/// Decodes a frame body (the bytes after the 4-byte length prefix).
Envelope decode_frame_body(std::span<const std::uint8_t> body);
/// Size of encode_frame(env) without building it.
std::size_t frame_size(const Envelope& env);

// Model layout: "FDIO", u8 version, u64 fingerprint, u16 layer_count,
// (u32 out, u32 in) per layer, then f64 weights row-major + bias per layer.
std::vector<std::uint8_t> encode_model(const nn::ModelParams& model);
void append_model(std::vector<std::uint8_t>& out, const nn::ModelParams& model);
nn::ModelParams decode_model(std::span<const std::uint8_t> bytes,
                             std::optional<std::uint64_t> expected_fingerprint = std::nullopt);
std::size_t encoded_model_size(const nn::ModelParams& model);

/// Hex FNV-1a of the encoded model; equal hashes mean bit-identical parameters.
std::string model_hash(const nn::ModelParams& model);

}  // namespace fediot::transport
