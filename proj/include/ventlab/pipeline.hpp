#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ventlab/baselines.hpp"
#include "ventlab/dataset.hpp"
#include "ventlab/fqe.hpp"
#include "ventlab/network.hpp"
#include "ventlab/online_eval.hpp"
#include "ventlab/tcql.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

struct CohortSection {
  int n = 98;
  ParamRanges ranges{};
};

struct OnlineEvalSection {
  int horizon = 24;
  OodConfig ood{};
};

/// One flat run description. Every stochastic stage draws its seed from
/// `seed`; section-level seed keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int runs = 5;  // training seed k is paired with rollout seed k
  std::string output_dir = "out";
  CohortSection cohort;
  DatasetConfig dataset;
  NetConfig model;
  TrainConfig train;
  FqeConfig fqe;
  OnlineEvalSection online_eval;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Stage seeds derived from the master seed.
struct StageSeeds {
  std::uint64_t cohort;
  std::uint64_t dataset;
  std::uint64_t fqe;
  std::uint64_t ood;
  std::vector<std::uint64_t> train;   // per run
  std::vector<std::uint64_t> online;  // per run
};

StageSeeds stage_seeds(const RunConfig& c);

/// Artifact locations under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path cohort() const { return root / "cohort.json"; }
  std::filesystem::path episodes() const { return root / "episodes.jsonl"; }
  std::filesystem::path dataset() const { return root / "dataset.json"; }
  std::filesystem::path normalizer() const { return root / "normalizer.json"; }
  std::filesystem::path checkpoint(const std::string& method, int run) const;
  std::filesystem::path metrics(const std::string& method, int run) const;
  std::filesystem::path fqe_report(const std::string& policy) const;
  std::filesystem::path online_report(const std::string& policy) const;
  std::filesystem::path histogram(const std::string& policy) const;
  std::filesystem::path comparison() const { return root / "comparison.csv"; }
  std::filesystem::path manifest(const std::string& stage) const;
};

/// Record written next to every stage's outputs: config snapshot, seeds and
/// the SHA-256 of every input and output file (paths relative to the root).
struct Manifest {
  std::string stage;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const Layout& layout, const Manifest& m);
Manifest read_manifest(const Layout& layout, const std::string& stage);

/// Checks that every output listed by the stage manifest exists and matches
/// its recorded hash. Throws DataError naming the artifact otherwise.
Manifest verify_stage(const Layout& layout, const std::string& stage);

/// Stages. Each verifies its upstream artifacts, writes its outputs and
/// manifest, and returns the manifest.
Manifest run_spawn_cohort(const RunConfig& cfg);
Manifest run_gen_data(const RunConfig& cfg);
Manifest run_train(const RunConfig& cfg, MethodKind method);
/// `policy` is a method name (all runs), "clinician", or a checkpoint path.
Manifest run_eval_fqe(const RunConfig& cfg, const std::string& policy);
Manifest run_eval_online(const RunConfig& cfg, const std::string& policy);
Manifest run_report(const RunConfig& cfg);

/// Loaded dataset artifacts.
struct DatasetArtifacts {
  std::vector<TwinParams> cohort;
  Dataset data;
};

DatasetArtifacts load_dataset_artifacts(const RunConfig& cfg);

/// Union of the feature-shift and extended-parameter OOD windows.
struct OodSet {
  std::vector<double> windows;
  int count = 0;
};

OodSet make_ood_set(const RunConfig& cfg, const DatasetArtifacts& art, const WindowSet& test);

}  // namespace ventlab
