#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fediot/anomaly.hpp"
#include "fediot/nn.hpp"
#include "fediot/pubsub.hpp"

// Payload schemas for each FedDetect message type. Little-endian throughout.
namespace fediot::fed::protocol {

struct RegisterAck {
  std::string client_id;
};

struct DatasetAssign {
  std::string client_id;
  std::uint32_t device_index = 0;
  std::string device_id;
  nn::Matrix train;
  nn::Matrix eval;
};

struct GlobalModel {
  double lr = 0.0;
  std::uint32_t total_rounds = 0;
  double aggregation_seconds = -1.0;  // previous round's aggregation, -1 if none
  bool final_model = false;
  nn::ModelParams model;
};

struct ModelUpdate {
  double local_loss = 0.0;
  double train_seconds = 0.0;
  nn::ModelParams model;
};

struct MseSequence {
  std::vector<double> scores;
  transport::CommStats comm;
};

std::vector<std::uint8_t> encode(const RegisterAck& msg);
std::vector<std::uint8_t> encode(const DatasetAssign& msg);
std::vector<std::uint8_t> encode(const GlobalModel& msg);
std::vector<std::uint8_t> encode(const ModelUpdate& msg);
std::vector<std::uint8_t> encode(const MseSequence& msg);
std::vector<std::uint8_t> encode(const anomaly::DetectionThreshold& msg);

// Decoders throw transport::WireError on malformed payloads.
RegisterAck decode_register_ack(std::span<const std::uint8_t> bytes);
DatasetAssign decode_dataset_assign(std::span<const std::uint8_t> bytes);
GlobalModel decode_global_model(std::span<const std::uint8_t> bytes, std::uint64_t fingerprint);
ModelUpdate decode_model_update(std::span<const std::uint8_t> bytes, std::uint64_t fingerprint);
MseSequence decode_mse_sequence(std::span<const std::uint8_t> bytes);
anomaly::DetectionThreshold decode_threshold(std::span<const std::uint8_t> bytes);

/// Fixed bytes in a MODEL_UPDATE payload ahead of the encoded model.
inline constexpr std::size_t kModelUpdateHeaderBytes = 16;

}  // namespace fediot::fed::protocol
