#include "ventlab/mechanics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "ventlab/error.hpp"

namespace ventlab {

BreathTiming breath_timing(double rr_per_min, IeRatio ie) {
  if (!(rr_per_min > 0) || ie.insp <= 0 || ie.exp <= 0)
    throw ParameterError("breath timing needs RR > 0 and a positive I:E ratio");
  const double total = 60.0 / rr_per_min;
  const double parts = ie.insp + ie.exp;
  return {total * ie.insp / parts, total * ie.exp / parts};
}

double time_constant_s(double resistance, double compliance) {
  return resistance * compliance / 1000.0;
}

BreathPressures solve_breath_closed_form(double pip, double peep, BreathTiming t, double rc) {
  if (!(rc > 0)) throw ParameterError("breath time constant must be positive");
  const double a = std::exp(-t.inspiratory_s / rc);
  const double b = std::exp(-t.expiratory_s / rc);
  // Contraction factor of the coupled map; strictly < 1 for finite positive times.
  assert(a * b < 1.0);
  const double p_ei = (pip * (1.0 - a) + a * (1.0 - b) * peep) / (1.0 - a * b);
  const double p_ee = peep + (p_ei - peep) * b;
  return {p_ei, p_ee};
}

BreathPressures solve_breath_iterative(double pip, double peep, BreathTiming t, double rc,
                                       double tol, int max_iter) {
  if (!(rc > 0)) throw ParameterError("breath time constant must be positive");
  const double a = std::exp(-t.inspiratory_s / rc);
  const double b = std::exp(-t.expiratory_s / rc);
  assert(a * b < 1.0);
  double p_ee = peep;
  double p_ei = pip;
  for (int it = 0; it < max_iter; ++it) {
    const double next_ei = pip - (pip - p_ee) * a;
    const double next_ee = peep + (next_ei - peep) * b;
    const double delta = std::max(std::abs(next_ei - p_ei), std::abs(next_ee - p_ee));
    p_ei = next_ei;
    p_ee = next_ee;
    if (delta < tol) break;
  }
  return {p_ei, p_ee};
}

MechanicsObservation simulate_breath_mechanics(const TwinState& twin, const Action& action) {
  const double compliance = twin.effective_compliance_mL_per_cmH2O;
  const double rc = time_constant_s(twin.params.resistance_cmH2O_s_per_L, compliance);
  if (!(rc > 0)) throw ParameterError("non-positive RC time constant");

  const double peep = action.peep_cmH2O;
  const double pip = action.pip_cmH2O();
  const auto timing = breath_timing(action.rr_per_min, action.ie);
  const auto p = solve_breath_closed_form(pip, peep, timing, rc);

  MechanicsObservation m;
  m.settings = action;
  m.pip_cmH2O = pip;
  m.peep_set_cmH2O = peep;
  m.auto_peep_cmH2O = std::max(p.end_expiratory_cmH2O - peep, 0.0);
  m.tidal_volume_mL = std::max(compliance * (p.end_inspiratory_cmH2O - p.end_expiratory_cmH2O), 0.0);
  m.driving_pressure_cmH2O = pip - peep;
  m.alveolar_ventilation_L_per_min =
      action.rr_per_min * std::max(m.tidal_volume_mL - twin.params.deadspace_mL, 0.0) / 1000.0;
  // 0.098 converts L·cmH2O/min to J/min.
  m.mechanical_power_proxy =
      0.098 * action.rr_per_min * (m.tidal_volume_mL / 1000.0) * m.driving_pressure_cmH2O;
  return m;
}

}  // namespace ventlab
