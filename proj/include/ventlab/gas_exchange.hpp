#pragma once

#include "ventlab/action.hpp"
#include "ventlab/twin.hpp"

namespace ventlab {

inline constexpr double kBarometricMinusWater_mmHg = 760.0 - 47.0;
inline constexpr double kPaco2Cap_mmHg = 130.0;
inline constexpr double kBloodGasRelaxation = 0.8;  // fraction of the gap closed per step

/// Severinghaus oxyhemoglobin dissociation curve. Throws DomainError for p <= 0.
double o2_saturation(double p_mmHg);

/// Arterial O2 content in mL O2 per dL blood.
double o2_content(double p_mmHg, double hemoglobin_g_per_dL);

/// Steady-state PaCO2 for a CO2 production (L/min) and alveolar ventilation (L/min).
double steady_state_paco2(double vco2_L_per_min, double va_L_per_min);

/// Alveolar gas equation.
double alveolar_po2(double fio2, double paco2_mmHg, double respiratory_quotient);

double henderson_hasselbalch_ph(double hco3_mmol_per_L, double paco2_mmHg);

/// Shunt mixing CaO2 = (1 - Qs)·CcO2 + Qs·CvO2 with CvO2 = CaO2 - extraction,
/// solved by fixed-point iteration. Throws ParameterError for Qs outside [0, 1).
double mixed_arterial_content(double cco2, double shunt, double extraction_mL_per_dL);

struct ContentInversion {
  double p_mmHg = 0;
  bool clamped = false;
};

/// Bisection for the partial pressure giving `content`; clamps to the
/// bracket [1, 800] mmHg when the content is unreachable.
ContentInversion invert_o2_content(double content, double hemoglobin_g_per_dL);

struct GasExchangeTargets {
  double paco2 = 0;
  double alveolar_po2 = 0;
  double end_capillary_content = 0;
  double arterial_content = 0;
  double venous_content = 0;
  double pao2 = 0;
  bool clamped = false;
};

/// Steady-state blood gases for the given shunt and mechanics.
GasExchangeTargets gas_exchange_targets(const TwinParams& p, double shunt,
                                        const MechanicsObservation& mech, double fio2);

struct BloodGas {
  double pao2_mmHg = 0;
  double paco2_mmHg = 0;
  double ph = 7.4;
  double venous_content = 0;
  bool clamped = false;
};

/// One 2-hour relaxation of the twin's blood gases toward the steady-state
/// targets for the applied settings. Uses the shunt in effect for the
/// action's PEEP at the current injury level.
BloodGas gas_exchange_step(const TwinState& twin, const MechanicsObservation& mech,
                           const Action& action);

}  // namespace ventlab
