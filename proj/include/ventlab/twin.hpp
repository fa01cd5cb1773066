#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ventlab/action.hpp"
#include "ventlab/patient_state.hpp"

namespace ventlab {

enum class Sex { male, female };

/// Per-patient parameters of a digital twin.
struct TwinParams {
  double compliance_mL_per_cmH2O = 50;
  double resistance_cmH2O_s_per_L = 10;
  double base_shunt_fraction = 0.1;
  double deadspace_mL = 150;
  double vo2_L_per_min = 0.25;
  double vco2_L_per_min = 0.2;
  double hemoglobin_g_per_dL = 12;
  double cardiac_output_L_per_min = 5;
  double weight_kg = 70;
  double age_years = 60;
  Sex sex = Sex::male;
  std::array<double, kStateDim> noise_std = default_noise_std();
  /// Resting values for channels that follow mean-reverting walks
  /// (vitals and labs); blood gases are derived, not read from here.
  PatientState baseline{};

  double respiratory_quotient() const { return vco2_L_per_min / vo2_L_per_min; }
  bool operator==(const TwinParams&) const = default;
};

/// Throws ParameterError when a record violates the sampling invariants.
void validate(const TwinParams& p);

/// Lung mechanics at one ventilator step.
struct MechanicsObservation {
  double pip_cmH2O = 0;
  double peep_set_cmH2O = 0;
  double auto_peep_cmH2O = 0;
  double tidal_volume_mL = 0;
  double driving_pressure_cmH2O = 0;
  double alveolar_ventilation_L_per_min = 0;
  double mechanical_power_proxy = 0;
  /// Settings that produced this observation (needed for APACHE oxygenation
  /// points and the clinician ladder, which steps from the current settings).
  Action settings{};

  bool operator==(const MechanicsObservation&) const = default;
};

/// Hidden and observed state of a twin.
struct TwinState {
  TwinParams params;
  double injury_level = 0;
  double effective_compliance_mL_per_cmH2O = 0;
  double effective_shunt_fraction = 0;
  PatientState obs;          // vitals, labs and blood gases as observed
  double venous_content = 0;  // mL O2/dL, from the last gas-exchange solve
  bool gas_solve_clamped = false;
  std::int64_t time_step = 0;  // 2-hour units

  double pao2() const { return obs[Channel::pao2]; }
  double paco2() const { return obs[Channel::paco2]; }
  double ph() const { return obs[Channel::ph]; }

  bool operator==(const TwinState&) const = default;
};

struct Range {
  double lo = 0;
  double hi = 0;
  bool log_uniform = false;
};

/// Sampling table for spawn_cohort.
struct ParamRanges {
  Range compliance{25, 60, true};
  Range resistance{8, 20, true};
  Range shunt{0.08, 0.35, false};
  Range deadspace{130, 200, false};
  Range vo2{0.20, 0.30, false};
  Range rq{0.75, 0.90, false};
  Range hemoglobin{9, 14, false};
  Range cardiac_output{4, 7, false};
  Range weight{55, 100, false};
  Range age{25, 85, false};
  double male_fraction = 0.6;
  Range hr{70, 110, false};
  Range sbp{100, 140, false};
  Range dbp{55, 80, false};
  Range temp{36.5, 38.8, false};
  Range lactate{0.8, 3.0, false};
  Range na{133, 146, false};
  Range k{3.4, 5.2, false};
  Range cl{98, 108, false};
  Range hco3{20, 28, false};
  Range creatinine{0.6, 2.5, false};
  Range bun{10, 40, false};
  Range wbc{5, 18, false};
  Range platelets{100, 350, false};
  Range gcs{8, 15, false};
  double noise_scale = 1.0;  // multiplier on the default per-channel noise std
};

/// Throws ConfigError when a range is empty, inverted or outside the
/// TwinParams invariants.
void validate(const ParamRanges& r);

/// Widens every physiological range by `fraction` of its width on each side.
ParamRanges extend_ranges(const ParamRanges& r, double fraction);

/// Draws n twins; reproducible by seed.
std::vector<TwinParams> spawn_cohort(int n, std::uint64_t seed, const ParamRanges& ranges);

}  // namespace ventlab
