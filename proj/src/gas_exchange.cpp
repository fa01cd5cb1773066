#include "ventlab/gas_exchange.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ventlab/error.hpp"
#include "ventlab/simulator.hpp"

namespace ventlab {

double o2_saturation(double p) {
  if (!(p > 0)) throw DomainError("O2 saturation needs a positive partial pressure");
  return 1.0 / (1.0 + 23400.0 / (p * p * p + 150.0 * p));
}

double o2_content(double p, double hb) { return 1.34 * hb * o2_saturation(p) + 0.003 * p; }

double steady_state_paco2(double vco2, double va) {
  if (!(va > 0)) return kPaco2Cap_mmHg;
  return std::min(863.0 * vco2 / va, kPaco2Cap_mmHg);
}

double alveolar_po2(double fio2, double paco2, double rq) {
  return fio2 * kBarometricMinusWater_mmHg - paco2 / rq;
}

double henderson_hasselbalch_ph(double hco3, double paco2) {
  return 6.1 + std::log10(hco3 / (0.0301 * paco2));
}

double mixed_arterial_content(double cco2, double shunt, double extraction) {
  if (!(shunt >= 0.0) || !(shunt < 1.0))
    throw ParameterError("shunt fraction must lie in [0, 1), got " + std::to_string(shunt));
  double cao2 = cco2;
  for (int it = 0; it < 10000; ++it) {
    const double cvo2 = cao2 - extraction;
    const double next = (1.0 - shunt) * cco2 + shunt * cvo2;
    const double delta = std::abs(next - cao2);
    cao2 = next;
    if (delta < 1e-13 * std::max(1.0, std::abs(cao2))) break;
  }
  return cao2;
}

ContentInversion invert_o2_content(double content, double hb) {
  double lo = 1.0;
  double hi = 800.0;
  if (content <= o2_content(lo, hb)) return {lo, true};
  if (content >= o2_content(hi, hb)) return {hi, true};
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (o2_content(mid, hb) < content) lo = mid; else hi = mid;
  }
  return {0.5 * (lo + hi), false};
}

GasExchangeTargets gas_exchange_targets(const TwinParams& p, double shunt,
                                        const MechanicsObservation& mech, double fio2) {
  GasExchangeTargets t;
  t.paco2 = steady_state_paco2(p.vco2_L_per_min, mech.alveolar_ventilation_L_per_min);
  t.alveolar_po2 = std::max(alveolar_po2(fio2, t.paco2, p.respiratory_quotient()), 1.0);
  t.end_capillary_content = o2_content(t.alveolar_po2, p.hemoglobin_g_per_dL);
  // Fick: VO2 (L/min) = CO (L/min) · (CaO2 - CvO2) (mL/dL) · 10 / 1000.
  const double extraction = 100.0 * p.vo2_L_per_min / p.cardiac_output_L_per_min;
  t.arterial_content = mixed_arterial_content(t.end_capillary_content, shunt, extraction);
  const auto inv = invert_o2_content(t.arterial_content, p.hemoglobin_g_per_dL);
  t.pao2 = inv.p_mmHg;
  t.clamped = inv.clamped;
  if (inv.clamped) t.arterial_content = o2_content(inv.p_mmHg, p.hemoglobin_g_per_dL);
  t.venous_content = t.arterial_content - extraction;
  return t;
}

BloodGas gas_exchange_step(const TwinState& twin, const MechanicsObservation& mech,
                           const Action& action) {
  const double shunt = effective_shunt(twin.params, twin.injury_level, action.peep_cmH2O);
  const auto t = gas_exchange_targets(twin.params, shunt, mech, action.fio2);
  BloodGas g;
  g.pao2_mmHg = twin.pao2() + kBloodGasRelaxation * (t.pao2 - twin.pao2());
  g.paco2_mmHg = twin.paco2() + kBloodGasRelaxation * (t.paco2 - twin.paco2());
  g.ph = henderson_hasselbalch_ph(twin.obs[Channel::hco3], g.paco2_mmHg);
  g.venous_content = t.venous_content;
  g.clamped = t.clamped;
  return g;
}

}  // namespace ventlab
