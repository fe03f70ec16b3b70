#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "interflow/model.hpp"
#include "interflow/schedule.hpp"
#include "interflow/training.hpp"

namespace interflow {

// Binary container: 8-byte magic "IFLOWCKP", uint32 version, uint64 header
// length, a JSON header, then raw little-endian float32 tensor payloads in
// header order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor& o) const {
    return name == o.name && tensor.shape() == o.tensor.shape() && tensor.vec() == o.tensor.vec();
  }
};

struct Checkpoint {
  NetworkSpec spec;
  std::vector<NamedTensor> parameters;  // canonical order, includes BN buffers
  std::int64_t adam_steps = 0;
  std::vector<NamedTensor> adam_m;      // keyed by trainable parameter name
  std::vector<NamedTensor> adam_v;
  TrainingSchedule schedule;
  LrScheduler::State scheduler;
  int epoch = 0;  // completed epochs
  std::optional<double> best_metric;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::string tag;
  History history;
};

Checkpoint capture_checkpoint(const Network& net, const Adam* adam = nullptr);
void restore_parameters(Network& net, const Checkpoint& ckpt);
void restore_adam(Adam& adam, const Checkpoint& ckpt);
Network network_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

}  // namespace interflow
