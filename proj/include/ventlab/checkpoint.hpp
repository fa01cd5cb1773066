#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ventlab/network.hpp"
#include "ventlab/optim.hpp"

namespace ventlab {

nlohmann::json to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

/// Trained model bundle: network layout, online and target parameters,
/// optimizer moments and the training configuration that produced it.
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::string kind = "tcql";
  NetConfig net;
  nlohmann::json train_config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::vector<double> params;
  std::vector<double> target;
  AdamState adam;
};

/// Binary container: magic line, JSON manifest (sizes prefixed), then the raw
/// little-endian float64 arrays in manifest order.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ventlab
