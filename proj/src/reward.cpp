#include "ventlab/reward.hpp"

#include <algorithm>

#include "ventlab/apache.hpp"
#include "ventlab/error.hpp"

namespace ventlab {

double compute_reward(const PatientState& s_t, const PatientState& s_t1,
                      const MechanicsObservation& mech_t, const MechanicsObservation& mech_t1,
                      bool terminal, std::optional<bool> survived, const RewardNorms& norms,
                      const RewardWeights& w) {
  if (terminal) {
    if (!survived) throw ContractError("terminal transition without a survival outcome");
    return *survived ? 1.0 : -1.0;
  }
  if (!(norms.apache_max > 0) || !(norms.dp_max > 0))
    throw ContractError("reward norms must be positive");
  const double d_apache = (apache2_score(s_t, mech_t.settings.fio2) -
                           apache2_score(s_t1, mech_t1.settings.fio2)) /
                          norms.apache_max;
  const double d_dp =
      (mech_t.driving_pressure_cmH2O - mech_t1.driving_pressure_cmH2O) / norms.dp_max;
  return std::clamp(w.apache * d_apache + w.driving_pressure * d_dp, -1.0, 1.0);
}

}  // namespace ventlab
