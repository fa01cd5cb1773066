#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ventlab/dataset.hpp"
#include "ventlab/fqe.hpp"
#include "ventlab/online_eval.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

// Config sections. The *_from_json readers start from `base`, reject unknown
// keys with ConfigError and validate the result.
nlohmann::json to_json(const ParamRanges& r);
ParamRanges param_ranges_from_json(const nlohmann::json& j, ParamRanges base = {});

nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j, DatasetConfig base = {});
void validate(const DatasetConfig& c);

nlohmann::json to_json(const FqeConfig& c);
FqeConfig fqe_config_from_json(const nlohmann::json& j, FqeConfig base = {});

nlohmann::json to_json(const OodConfig& c);
OodConfig ood_config_from_json(const nlohmann::json& j, OodConfig base = {});

// Records.
nlohmann::json to_json(const TwinParams& p);
TwinParams twin_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StateNormalizer& n);
StateNormalizer normalizer_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RewardNorms& n);
RewardNorms reward_norms_from_json(const nlohmann::json& j);

// Files. Writers produce byte-stable output for equal inputs.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Versioned JSON document holding one record per twin.
void save_cohort(const std::filesystem::path& path, const std::vector<TwinParams>& cohort);
std::vector<TwinParams> load_cohort(const std::filesystem::path& path);

/// Line-delimited JSON: a versioned header line, then one transition per line
/// in episode order. The next state of a transition is the state on the
/// following line; terminal lines carry the final state and the outcome.
void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> load_episodes(const std::filesystem::path& path);

/// One row per 2-hour step: all state channels, the mechanics readout and the
/// action taken (empty on the final row).
void write_trajectory_csv(std::ostream& os, const Episode& e);

/// Hex SHA-256 of a byte string or file contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ventlab
