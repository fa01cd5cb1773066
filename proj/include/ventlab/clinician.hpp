#pragma once

#include "ventlab/action.hpp"
#include "ventlab/patient_state.hpp"
#include "ventlab/rng.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

struct ClinicianTargets {
  double spo2_low = 0.92;
  double spo2_high = 0.97;
  double paco2_low = 35;
  double paco2_high = 45;
  double vt_low_mL_per_kg = 6;
  double vt_high_mL_per_kg = 8;
};

/// Guideline ladder applied to the settings in `mech` (the ones currently
/// running), without exploration.
ActionBins clinician_ladder(const PatientState& s, const MechanicsObservation& mech,
                            const ClinicianTargets& targets = {});

/// Behavior policy standing in for logged clinicians: the ladder, then with
/// probability eps one uniformly chosen dimension moves to a random adjacent
/// bin. Always returns an on-grid index.
ActionIndex scripted_clinician(const PatientState& s, const MechanicsObservation& mech, double eps,
                               Rng& rng, const ClinicianTargets& targets = {});

}  // namespace ventlab
