#include "ventlab/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "ventlab/error.hpp"
#include "ventlab/gas_exchange.hpp"
#include "ventlab/mechanics.hpp"

namespace ventlab {
namespace {

constexpr double kDriftRate = 0.3;     // mean reversion of walked channels per step
constexpr double kHrPerMmHg = 0.5;     // tachycardic response below PaO2 60
constexpr double kLactatePerMmHg = 0.05;

double hypoxemia_mmHg(double pao2) { return std::max(60.0 - pao2, 0.0); }

double clamp_channel(Channel c, double v) {
  const auto& info = kChannels[index_of(c)];
  return std::clamp(v, info.clamp_lo, info.clamp_hi);
}

void clamp_all(PatientState& s) {
  for (std::size_t i = 0; i < kStateDim; ++i) {
    const auto& info = kChannels[i];
    s.values[i] = std::clamp(s.values[i], info.clamp_lo, info.clamp_hi);
  }
}

}  // namespace

double peep_recruitment(double peep) { return std::exp(-0.06 * (std::max(peep, 5.0) - 5.0)); }

double effective_shunt(const TwinParams& p, double injury, double peep) {
  return std::min(0.9, p.base_shunt_fraction * (1.0 + injury) * peep_recruitment(peep));
}

TwinState injury_update(const TwinState& twin, const MechanicsObservation& mech,
                        const InjuryRates& rates) {
  TwinState next = twin;
  const double delta =
      rates.dp_rate * std::max(mech.driving_pressure_cmH2O - rates.dp_threshold, 0.0) +
      rates.pip_rate * std::max(mech.pip_cmH2O - rates.pip_threshold, 0.0);
  next.injury_level = twin.injury_level + delta;
  next.effective_compliance_mL_per_cmH2O =
      twin.params.compliance_mL_per_cmH2O * std::exp(-0.5 * next.injury_level);
  next.effective_shunt_fraction =
      effective_shunt(twin.params, next.injury_level, mech.peep_set_cmH2O);
  return next;
}

Action admission_action() {
  Action a;
  a.peep_cmH2O = 5;
  a.fio2 = 0.5;
  a.rr_per_min = 14;
  a.ie = {1, 2};
  a.pvent_cmH2O = 15;
  return a;
}

TwinState initial_state(const TwinParams& params, const Action& admission) {
  validate(params);
  TwinState s;
  s.params = params;
  s.injury_level = 0;
  s.effective_compliance_mL_per_cmH2O = params.compliance_mL_per_cmH2O;
  s.effective_shunt_fraction = effective_shunt(params, 0.0, admission.peep_cmH2O);
  s.obs = params.baseline;
  s.obs[Channel::age] = params.age_years;
  s.obs[Channel::sex] = params.sex == Sex::male ? 1.0 : 0.0;
  s.obs[Channel::weight] = params.weight_kg;
  s.obs[Channel::hb] = params.hemoglobin_g_per_dL;

  const auto mech = simulate_breath_mechanics(s, admission);
  const auto t = gas_exchange_targets(params, s.effective_shunt_fraction, mech, admission.fio2);
  s.obs[Channel::pao2] = t.pao2;
  s.obs[Channel::paco2] = t.paco2;
  s.obs[Channel::ph] = henderson_hasselbalch_ph(s.obs[Channel::hco3], t.paco2);
  s.obs[Channel::spo2] = o2_saturation(t.pao2);
  s.obs[Channel::rr_measured] = admission.rr_per_min;
  s.obs[Channel::hr] = params.baseline[Channel::hr] + kHrPerMmHg * hypoxemia_mmHg(t.pao2);
  s.obs[Channel::lactate] =
      params.baseline[Channel::lactate] + kLactatePerMmHg * hypoxemia_mmHg(t.pao2);
  s.obs[Channel::map] = (s.obs[Channel::sbp] + 2.0 * s.obs[Channel::dbp]) / 3.0;
  s.venous_content = t.venous_content;
  s.gas_solve_clamped = t.clamped;
  clamp_all(s.obs);
  return s;
}

MechanicsObservation initial_mechanics(const TwinState& twin) {
  return simulate_breath_mechanics(twin, admission_action());
}

void apply_process_noise(TwinState& twin, Rng& rng) {
  for (std::size_t i = 0; i < kStateDim; ++i) {
    const double sd = twin.params.noise_std[i];
    // One draw per channel regardless of std keeps streams aligned across configs.
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
    if (sd > 0) twin.obs.values[i] += sd * z;
  }
  clamp_all(twin.obs);
}

std::pair<TwinState, MechanicsObservation> deterministic_step(const TwinState& twin,
                                                              const Action& action,
                                                              const InjuryRates& rates) {
  const auto mech = simulate_breath_mechanics(twin, action);
  const auto gas = gas_exchange_step(twin, mech, action);
  TwinState next = injury_update(twin, mech, rates);

  auto& o = next.obs;
  const auto& base = twin.params.baseline;
  const double hypox = hypoxemia_mmHg(gas.pao2_mmHg);

  o[Channel::pao2] = clamp_channel(Channel::pao2, gas.pao2_mmHg);
  o[Channel::paco2] = clamp_channel(Channel::paco2, gas.paco2_mmHg);
  o[Channel::spo2] = o2_saturation(o[Channel::pao2]);
  o[Channel::rr_measured] = action.rr_per_min;

  auto drift = [&](Channel c, double target) { o[c] = o[c] + kDriftRate * (target - o[c]); };
  drift(Channel::hr, base[Channel::hr] + kHrPerMmHg * hypox);
  drift(Channel::lactate, base[Channel::lactate] + kLactatePerMmHg * hypox);
  for (Channel c : {Channel::sbp, Channel::dbp, Channel::temp, Channel::na, Channel::k,
                    Channel::cl, Channel::hco3, Channel::creatinine, Channel::bun, Channel::wbc,
                    Channel::platelets, Channel::gcs})
    drift(c, base[c]);
  drift(Channel::hb, twin.params.hemoglobin_g_per_dL);
  o[Channel::map] = (o[Channel::sbp] + 2.0 * o[Channel::dbp]) / 3.0;
  o[Channel::ph] = henderson_hasselbalch_ph(o[Channel::hco3], o[Channel::paco2]);

  next.venous_content = gas.venous_content;
  next.gas_solve_clamped = gas.clamped;
  next.time_step = twin.time_step + 1;
  clamp_all(o);
  return {next, mech};
}

std::pair<TwinState, MechanicsObservation> step_twin(const TwinState& twin, const Action& action,
                                                     std::uint64_t rng_seed,
                                                     const InjuryRates& rates) {
  auto [next, mech] = deterministic_step(twin, action, rates);
  Rng rng(rng_seed);
  apply_process_noise(next, rng);
  return {next, mech};
}

}  // namespace ventlab
