#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "sckd/models/network.hpp"

namespace sckd::models {

nlohmann::json spec_to_json(const NetworkSpec& spec);
/// Missing keys take NetworkSpec defaults; invalid values throw std::invalid_argument.
NetworkSpec spec_from_json(const nlohmann::json& j);

struct CheckpointMeta {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  int epoch = 0;
  nlohmann::json extra = nlohmann::json::object();
};

// Layout:
//   8 bytes   magic "SCKDCKPT"
//   u32 le    format version (1)
//   u32 le    header length in bytes
//   header    UTF-8 JSON: {spec, seed, epoch, parameter_count, tensors: [{name, shape}], extra}
//   blob      float32 le weights, tensors concatenated in header order
void save_checkpoint(const std::filesystem::path& path, Network& net, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Network> network;
  CheckpointMeta meta;
};

/// Throws std::runtime_error on a malformed file or a tensor layout that does not match the spec.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sckd::models
