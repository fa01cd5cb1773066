#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ventlab/action.hpp"
#include "ventlab/checkpoint.hpp"
#include "ventlab/clinician.hpp"
#include "ventlab/dataset.hpp"
#include "ventlab/fqe.hpp"
#include "ventlab/reward.hpp"
#include "ventlab/simulator.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

/// What a policy sees at one decision: the raw observed history so far
/// (admission first) and the latest mechanics readout.
struct Decision {
  std::span<const PatientState> history;
  const MechanicsObservation* mech = nullptr;
  Rng* rng = nullptr;  // per-twin stream for stochastic policies
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  virtual std::vector<ActionIndex> act(std::span<const Decision> batch) const = 0;
};

/// Frozen network policy: left-padded z-scored windows, greedy (or BCQ-filtered) argmax.
class NetworkPolicy final : public Policy {
 public:
  NetworkPolicy(const Checkpoint& ck, StateNormalizer norm, double bcq_threshold = 0.3);
  std::string id() const override { return selector_.id(); }
  std::vector<ActionIndex> act(std::span<const Decision> batch) const override;

 private:
  GreedySelector selector_;
  StateNormalizer norm_;
  int len_;
};

class ClinicianPolicy final : public Policy {
 public:
  explicit ClinicianPolicy(double eps = 0.15, ClinicianTargets targets = {}) : eps_(eps), targets_(targets) {}
  std::string id() const override { return "clinician"; }
  std::vector<ActionIndex> act(std::span<const Decision> batch) const override;

 private:
  double eps_;
  ClinicianTargets targets_;
};

class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(ActionIndex a, std::string name = "constant") : a_(a), name_(std::move(name)) {}
  std::string id() const override { return name_; }
  std::vector<ActionIndex> act(std::span<const Decision> batch) const override {
    return std::vector<ActionIndex>(batch.size(), a_);
  }

 private:
  ActionIndex a_;
  std::string name_;
};

class RandomPolicy final : public Policy {
 public:
  std::string id() const override { return "random"; }
  std::vector<ActionIndex> act(std::span<const Decision> batch) const override;
};

struct SafetyFlags {
  bool pao2_ok = true;   // PaO2 > 60 mmHg
  bool paco2_ok = true;  // PaCO2 < 60 mmHg
  bool pip_ok = true;    // PIP <= 35 cmH2O
  bool all() const { return pao2_ok && paco2_ok && pip_ok; }
};

SafetyFlags safety_flags(const PatientState& s, const MechanicsObservation& m);

struct RolloutStep {
  PatientState state;  // state reached after the action
  ActionIndex action;
  MechanicsObservation mech;
  double reward = 0;
  SafetyFlags flags;
};

struct RolloutRecord {
  int twin_id = 0;
  PatientState initial_state;
  MechanicsObservation initial_mech;
  std::vector<RolloutStep> steps;
  bool survived = true;
  double mortality = 0;  // death probability at episode end
  double cumulative_reward = 0;
  bool failed = false;   // simulator error ended the episode early
  std::string failure;
};

struct RolloutConfig {
  int horizon = 24;
  RewardNorms norms{};
  InjuryRates injury{};
  double injury_weight = 0.5;
};

/// Rolls every twin in lockstep under one policy; twin i uses a stream derived
/// from (seed, i). Deterministic per seed and independent of thread count.
std::vector<RolloutRecord> rollout_cohort(const Policy& policy, std::span<const TwinParams> cohort,
                                          const RolloutConfig& cfg, std::uint64_t seed);

RolloutRecord rollout(const Policy& policy, const TwinParams& twin, int twin_id,
                      const RolloutConfig& cfg, std::uint64_t seed);

struct ComplianceMetrics {
  double safety_rate = 0;      // percent of steps with all flags true
  double reduced_dp_rate = 0;  // percent of steps with DP below the episode's initial DP
};

ComplianceMetrics compliance_metrics(std::span<const RolloutRecord> records);

enum class OodMode { extended_params, feature_shift };

struct OodConfig {
  double extension = 0.2;       // fraction of each range width added on both sides
  double shift_sigma = 3.0;     // offset in training standard deviations
  double shift_fraction = 0.25; // probability that a channel is shifted
  int count = 98;
};

/// Initial windows (count x L x state_dim, z-scored with `norm`).
/// extended_params samples twins from widened ranges; feature_shift offsets a
/// random channel subset of the given held-out windows.
std::vector<double> make_ood_states(OodMode mode, const ParamRanges& ranges, const StateNormalizer& norm,
                                    int L, std::span<const double> heldout, const OodConfig& cfg,
                                    std::uint64_t seed);

/// Left-padded admission windows of freshly spawned twins (z-scored).
std::vector<double> initial_windows(std::span<const TwinParams> cohort, const StateNormalizer& norm,
                                    int L, std::uint64_t seed);

struct ActionHistogram {
  std::array<std::vector<double>, 5> percent;  // per dimension, per bin
  std::size_t count = 0;
};

ActionHistogram action_distribution(std::span<const ActionIndex> actions);
ActionHistogram action_distribution(std::span<const RolloutRecord> records);
ActionHistogram action_distribution(const std::vector<Episode>& episodes);
/// Columns: policy,dimension,bin,value,percent.
void write_histogram_csv(std::ostream& os, const std::string& policy, const ActionHistogram& h,
                         bool header = true);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation across seeds
};

MeanStd mean_std(std::span<const double> v);

struct SeedMetrics {
  std::uint64_t seed = 0;
  ComplianceMetrics compliance;
  double cumulative_reward = 0;  // mean over twins
  double mortality = 0;          // mean over twins
  int failures = 0;
};

struct OnlineReport {
  std::string policy;
  std::vector<SeedMetrics> seeds;
  MeanStd safety_rate;
  MeanStd reduced_dp_rate;
  MeanStd cumulative_reward;
  MeanStd mortality;
  ActionHistogram actions;
};

OnlineReport evaluate_policy_online(const Policy& policy, std::span<const TwinParams> cohort,
                                    const RolloutConfig& cfg, std::span<const std::uint64_t> seeds);

nlohmann::json to_json(const OnlineReport& r);

}  // namespace ventlab
