#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ventlab/action.hpp"
#include "ventlab/clinician.hpp"
#include "ventlab/patient_state.hpp"
#include "ventlab/reward.hpp"
#include "ventlab/simulator.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

/// One logged episode. `states` and `mechs` hold H+1 entries (admission plus
/// one per step); `actions` and `rewards` hold H. Missing observations are NaN
/// until imputed.
struct Episode {
  int twin_id = 0;
  int episode_id = 0;
  std::vector<PatientState> states;
  std::vector<MechanicsObservation> mechs;
  std::vector<ActionIndex> actions;
  std::vector<double> rewards;
  bool survived = true;
  double death_probability = 0;
  double final_injury = 0;

  int horizon() const { return static_cast<int>(actions.size()); }
};

struct Transition {
  PatientState state;
  MechanicsObservation mech;
  ActionIndex action;
  double reward = 0;
  PatientState next_state;
  MechanicsObservation next_mech;
  bool terminal = false;
  std::optional<bool> survived;
  int episode_id = 0;
  int step_index = 0;
};

Transition transition_at(const Episode& e, int step);

struct DatasetConfig {
  int episodes_per_twin = 5;
  int horizon_steps = 24;
  double clinician_eps = 0.15;
  std::uint64_t seed = 7;
  double injury_weight = 0.5;   // weight of final injury in the death logistic (calibrated)
  double missing_rate = 0.02;   // per-lab-value probability of going unrecorded
  int knn_k = 5;
  double train_ratio = 0.8;
  ClinicianTargets clinician{};
  InjuryRates injury{};
};

/// Death probability at episode end: APACHE-II risk logistic plus an injury term.
double death_probability(double apache_final, double injury_final, double injury_weight);

/// Rolls the scripted clinician on every twin. Rewards are left empty; missing
/// values are not yet injected. Deterministic by cfg.seed; parallel over episodes.
std::vector<Episode> generate_episodes(const std::vector<TwinParams>& cohort,
                                       const DatasetConfig& cfg);

/// Marks lab channels missing (NaN) at cfg.missing_rate.
void inject_missing(std::vector<Episode>& episodes, double rate, std::uint64_t seed);

bool is_missing(double v);

/// Forward fill within each series, then fill residual gaps with the mean of
/// the k nearest complete rows of `reference` (Euclidean distance on the
/// z-scored channels observed in the incomplete row). Throws DataError when a
/// channel is never observed or no complete reference row exists.
void impute_missing(std::vector<std::vector<PatientState>>& series, int k,
                    std::span<const PatientState> reference);
void impute_missing(std::vector<std::vector<PatientState>>& series, int k);

struct Split {
  std::vector<int> train;  // episode positions
  std::vector<int> test;
};

/// Split by episode; the same seed reproduces the same split.
Split split_dataset(int num_episodes, double ratio, std::uint64_t seed);

/// Per-channel z-score statistics.
struct StateNormalizer {
  std::array<double, kStateDim> mean{};
  std::array<double, kStateDim> stddev{};

  static StateNormalizer fit(const std::vector<Episode>& episodes, std::span<const int> subset);
  PatientState apply(const PatientState& s) const;
  void apply_to(const PatientState& s, std::span<double> out) const;
  bool operator==(const StateNormalizer&) const = default;
};

RewardNorms fit_reward_norms(const std::vector<Episode>& episodes, std::span<const int> subset);

/// Fills episode rewards from the reward function under `norms`.
void attach_rewards(std::vector<Episode>& episodes, const RewardNorms& norms);

/// Fully prepared offline dataset.
struct Dataset {
  DatasetConfig config;
  std::vector<Episode> episodes;
  Split split;
  StateNormalizer normalizer;
  RewardNorms reward_norms;
};

/// generate -> inject missing -> impute -> split -> fit norms on train ->
/// attach rewards.
Dataset generate_dataset(const std::vector<TwinParams>& cohort, const DatasetConfig& cfg);

/// Behavior-policy mortality estimate: mean death probability over episodes.
double cohort_mortality(const std::vector<Episode>& episodes);

/// L-step state history ending at decision time t.
struct Window {
  std::vector<PatientState> states;
  ActionIndex action;
  double reward = 0;
  std::vector<PatientState> next_states;
  bool terminal = false;
};

/// Windows in index form: normalized state rows plus, per transition, the L
/// row ids of its history and of its next history.
struct WindowSet {
  int length = 1;
  std::vector<double> rows;          // num_rows x kStateDim, z-scored
  std::vector<int> history;          // size() x length
  std::vector<int> next_history;     // size() x length
  std::vector<ActionIndex> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
  std::vector<int> episode;          // source episode position
  std::vector<int> step;

  std::size_t size() const { return actions.size(); }
  std::size_t num_rows() const { return rows.size() / kStateDim; }
  std::span<const double> row(int r) const {
    return {rows.data() + static_cast<std::size_t>(r) * kStateDim, kStateDim};
  }
  std::span<const int> history_of(std::size_t i) const {
    return {history.data() + i * static_cast<std::size_t>(length), static_cast<std::size_t>(length)};
  }
  std::span<const int> next_history_of(std::size_t i) const {
    return {next_history.data() + i * static_cast<std::size_t>(length),
            static_cast<std::size_t>(length)};
  }
  /// Positions of the first window of every episode.
  std::vector<std::size_t> initial_windows() const;
  /// Copies the z-scored history of window i (length x kStateDim) into out.
  void gather(std::size_t i, bool next, std::span<double> out) const;
};

/// One window per transition, left-padded by repeating the earliest state.
/// Throws DataError for an empty episode subset and ContractError for L < 1.
WindowSet make_windows(const std::vector<Episode>& episodes, std::span<const int> subset, int L,
                       const StateNormalizer& norm);

/// Materializes window i of episode e (raw, not normalized).
Window window_at(const Episode& e, int step, int L);

/// Left-padded raw history of the last L states of `states`.
std::vector<PatientState> last_window(std::span<const PatientState> states, int L);

}  // namespace ventlab
