#pragma once

#include <cstdint>
#include <utility>

#include "ventlab/action.hpp"
#include "ventlab/rng.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

struct InjuryRates {
  double dp_rate = 0.01;        // per cmH2O of driving pressure above threshold, per step
  double pip_rate = 0.02;       // per cmH2O of PIP above threshold, per step
  double dp_threshold = 15.0;
  double pip_threshold = 30.0;
};

/// Multiplicative shunt reduction from alveolar recruitment at PEEP >= 5.
double peep_recruitment(double peep_cmH2O);

/// Shunt fraction for a twin at a given injury level and PEEP.
double effective_shunt(const TwinParams& p, double injury, double peep_cmH2O);

/// Accumulates ventilator-induced injury for one step and refreshes the
/// effective compliance and shunt. No healing.
TwinState injury_update(const TwinState& twin, const MechanicsObservation& mech,
                        const InjuryRates& rates = {});

/// Settings applied before the first decision of an episode.
Action admission_action();

/// Twin at admission: baselines for vitals and labs, blood gases at the
/// steady state of the admission settings, no injury.
TwinState initial_state(const TwinParams& params, const Action& admission = admission_action());

/// Mechanics the twin showed under the admission settings.
MechanicsObservation initial_mechanics(const TwinState& twin);

/// Adds one draw of zero-mean Gaussian process noise (per-channel std from
/// the twin parameters) and clamps to physiologic bounds.
void apply_process_noise(TwinState& twin, Rng& rng);

/// Deterministic part of one 2-hour transition (mechanics, gas exchange,
/// injury, vitals and lab drift), without process noise.
std::pair<TwinState, MechanicsObservation> deterministic_step(const TwinState& twin,
                                                              const Action& action,
                                                              const InjuryRates& rates = {});

/// One 2-hour transition: deterministic_step followed by process noise drawn
/// from a stream seeded with `rng_seed`. Same inputs give bit-identical output.
std::pair<TwinState, MechanicsObservation> step_twin(const TwinState& twin, const Action& action,
                                                     std::uint64_t rng_seed,
                                                     const InjuryRates& rates = {});

}  // namespace ventlab
