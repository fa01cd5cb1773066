#pragma once

#include <optional>

#include "ventlab/patient_state.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

/// Normalizers for the intermediate reward, taken from the training split.
struct RewardNorms {
  double apache_max = 1;
  double dp_max = 1;
};

struct RewardWeights {
  double apache = 0.5;
  double driving_pressure = 0.5;
};

/// Terminal: +1 survived, -1 died. Otherwise a weighted sum of the normalized
/// APACHE-II and driving-pressure improvements, clipped to [-1, 1].
/// Throws ContractError for a terminal step without an outcome and for
/// non-positive norms.
double compute_reward(const PatientState& s_t, const PatientState& s_t1,
                      const MechanicsObservation& mech_t, const MechanicsObservation& mech_t1,
                      bool terminal, std::optional<bool> survived, const RewardNorms& norms,
                      const RewardWeights& w = {});

}  // namespace ventlab
