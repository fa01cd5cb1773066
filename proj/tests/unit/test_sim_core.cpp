#include <doctest.h>

#include <cmath>

#include "ventlab/error.hpp"
#include "ventlab/gas_exchange.hpp"
#include "ventlab/mechanics.hpp"
#include "ventlab/simulator.hpp"
#include "ventlab/twin.hpp"

using namespace ventlab;

namespace {

TwinParams reference_twin() {
  TwinParams p;
  p.compliance_mL_per_cmH2O = 50;
  p.resistance_cmH2O_s_per_L = 10;
  return p;
}

Action make_action(double peep, double fio2, double rr, IeRatio ie, double pvent) {
  return Action{peep, fio2, rr, ie, pvent};
}

// Independent oracle: iterate the two exponential relaxations directly.
std::pair<double, double> hand_fixed_point(double pip, double peep, double ti, double te, double rc) {
  double pee = peep;
  double pei = pip;
  for (int i = 0; i < 100000; ++i) {
    const double nei = pip - (pip - pee) * std::exp(-ti / rc);
    const double nee = peep + (nei - peep) * std::exp(-te / rc);
    const bool done = std::abs(nei - pei) < 1e-15 && std::abs(nee - pee) < 1e-15;
    pei = nei;
    pee = nee;
    if (done) break;
  }
  return {pei, pee};
}

}  // namespace

TEST_SUITE("sim_core") {

TEST_CASE("breath mechanics reference case") {
  const auto twin = initial_state(reference_twin());
  const auto m = simulate_breath_mechanics(twin, make_action(5, 0.5, 15, {1, 2}, 15));
  const auto [pei, pee] = hand_fixed_point(20, 5, 4.0 / 3.0, 8.0 / 3.0, 0.5);
  CHECK(pei == doctest::Approx(18.96).epsilon(1e-3));
  CHECK(pee == doctest::Approx(5.07).epsilon(1e-3));
  CHECK(m.tidal_volume_mL == doctest::Approx(50 * (pei - pee)).epsilon(1e-12));
  CHECK(m.tidal_volume_mL == doctest::Approx(694).epsilon(2e-3));
  CHECK(m.auto_peep_cmH2O == doctest::Approx(pee - 5).epsilon(1e-9));
  CHECK(m.driving_pressure_cmH2O == 15.0);
  CHECK(m.pip_cmH2O == 20.0);
  CHECK(m.alveolar_ventilation_L_per_min ==
        doctest::Approx(15 * (m.tidal_volume_mL - 150) / 1000).epsilon(1e-12));
}

TEST_CASE("zero driving pressure gives no tidal volume") {
  const BreathTiming t = breath_timing(15, {1, 2});
  const auto bp = solve_breath_closed_form(5, 5, t, 0.5);
  CHECK(bp.end_inspiratory_cmH2O == doctest::Approx(5));
  CHECK(bp.end_expiratory_cmH2O == doctest::Approx(5));
}

TEST_CASE("full equilibration limit") {
  const auto bp = solve_breath_closed_form(30, 10, {1e4, 1e4}, 0.5);
  CHECK(bp.end_inspiratory_cmH2O == doctest::Approx(30).epsilon(1e-12));
  CHECK(bp.end_expiratory_cmH2O == doctest::Approx(10).epsilon(1e-12));
}

TEST_CASE("closed form agrees with iteration on every grid timing") {
  for (double rr : kRrGrid)
    for (auto ie : kIeGrid)
      for (double rc : {0.2, 0.5, 1.0, 2.5}) {
        const auto t = breath_timing(rr, ie);
        const auto a = solve_breath_closed_form(35, 8, t, rc);
        const auto b = solve_breath_iterative(35, 8, t, rc);
        CHECK(std::abs(a.end_inspiratory_cmH2O - b.end_inspiratory_cmH2O) <= 1e-9);
        CHECK(std::abs(a.end_expiratory_cmH2O - b.end_expiratory_cmH2O) <= 1e-9);
      }
}

TEST_CASE("breath timing splits the cycle by the I:E ratio") {
  const auto t = breath_timing(15, {1, 2});
  CHECK(t.inspiratory_s == doctest::Approx(4.0 / 3.0));
  CHECK(t.expiratory_s == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("non-positive time constant is rejected") {
  auto twin = initial_state(reference_twin());
  twin.effective_compliance_mL_per_cmH2O = 0;
  CHECK_THROWS_AS(simulate_breath_mechanics(twin, admission_action()), ParameterError);
}

TEST_CASE("Severinghaus saturation") {
  CHECK(o2_saturation(26.86) == doctest::Approx(0.50).epsilon(0.02));
  CHECK(o2_saturation(100) == doctest::Approx(0.974).epsilon(0.005));
  CHECK(o2_saturation(1e-6) < 1e-7);
  CHECK_THROWS_AS(o2_saturation(0), DomainError);
  CHECK_THROWS_AS(o2_saturation(-1), DomainError);
  double prev = 0;
  for (double p = 1; p < 700; p += 1) {
    const double s = o2_saturation(p);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("gas exchange arithmetic") {
  const double va = 15 * (694.0 - 150.0) / 1000.0;
  CHECK(va == doctest::Approx(8.16));
  CHECK(steady_state_paco2(0.2, va) == doctest::Approx(863 * 0.2 / 8.16));
  CHECK(steady_state_paco2(0.2, va) == doctest::Approx(21.2).epsilon(1e-2));
  CHECK(steady_state_paco2(0.2, 0) == kPaco2Cap_mmHg);
  CHECK(alveolar_po2(0.5, 40, 0.8) == doctest::Approx(306.5));
}

TEST_CASE("no shunt leaves arterial content at end-capillary content") {
  CHECK(mixed_arterial_content(20.0, 0.0, 5.0) == 20.0);
  // CaO2 = CcO2 - Qs/(1-Qs) * extraction solves the mixing equation.
  CHECK(mixed_arterial_content(20.0, 0.2, 5.0) == doctest::Approx(20.0 - 0.25 * 5.0).epsilon(1e-12));
  CHECK_THROWS_AS(mixed_arterial_content(20.0, 1.0, 5.0), ParameterError);
  CHECK_THROWS_AS(mixed_arterial_content(20.0, -0.1, 5.0), ParameterError);

  TwinParams p = reference_twin();
  p.base_shunt_fraction = 0.1;
  MechanicsObservation m;
  m.alveolar_ventilation_L_per_min = 6;
  const auto t = gas_exchange_targets(p, 0.0, m, 0.5);
  CHECK(t.arterial_content == t.end_capillary_content);
  CHECK(t.pao2 == doctest::Approx(t.alveolar_po2).epsilon(1e-9));
}

TEST_CASE("content inversion round-trips and clamps") {
  for (double p : {30.0, 60.0, 95.0, 300.0}) {
    const auto inv = invert_o2_content(o2_content(p, 12), 12);
    CHECK_FALSE(inv.clamped);
    CHECK(inv.p_mmHg == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(invert_o2_content(1e6, 12).clamped);
  CHECK(invert_o2_content(0, 12).clamped);
}

TEST_CASE("injury update") {
  const auto twin = initial_state(reference_twin());
  CHECK(twin.effective_compliance_mL_per_cmH2O == twin.params.compliance_mL_per_cmH2O);
  MechanicsObservation m;
  m.settings = admission_action();

  m.driving_pressure_cmH2O = 12;
  m.pip_cmH2O = 22;
  CHECK(injury_update(twin, m).injury_level == twin.injury_level);

  m.driving_pressure_cmH2O = 20;
  m.pip_cmH2O = 28;
  const auto hurt = injury_update(twin, m);
  CHECK(hurt.injury_level - twin.injury_level == doctest::Approx(0.05));
  CHECK(hurt.effective_compliance_mL_per_cmH2O ==
        doctest::Approx(50 * std::exp(-0.5 * hurt.injury_level)));

  m.driving_pressure_cmH2O = 20;
  m.pip_cmH2O = 35;
  CHECK(injury_update(twin, m).injury_level == doctest::Approx(0.05 + 0.1));
}

TEST_CASE("effective shunt and recruitment") {
  TwinParams p = reference_twin();
  p.base_shunt_fraction = 0.2;
  CHECK(peep_recruitment(5) == 1.0);
  CHECK(peep_recruitment(10) == doctest::Approx(std::exp(-0.3)));
  CHECK(effective_shunt(p, 0.5, 5) == doctest::Approx(0.3));
  CHECK(effective_shunt(p, 100, 5) == 0.9);
}

TEST_CASE("step determinism and the noise-free transition") {
  auto p = reference_twin();
  const auto twin = initial_state(p);
  const Action a = make_action(8, 0.45, 16, {1, 2}, 12);
  const auto [s1, m1] = step_twin(twin, a, 42);
  const auto [s2, m2] = step_twin(twin, a, 42);
  CHECK(s1 == s2);
  CHECK(m1 == m2);
  CHECK(s1.time_step == twin.time_step + 1);

  p.noise_std.fill(0.0);
  const auto quiet = initial_state(p);
  const auto [det, dm] = deterministic_step(quiet, a);
  const auto [noisy, nm] = step_twin(quiet, a, 7);
  CHECK(noisy == det);
  CHECK(nm == dm);
}

TEST_CASE("PaO2 rises with each FiO2 bin when noise is off") {
  auto p = reference_twin();
  p.noise_std.fill(0.0);
  const auto twin = initial_state(p);
  double prev = -1;
  for (double f : kFio2Grid) {
    const auto [next, m] = deterministic_step(twin, make_action(8, f, 16, {1, 2}, 12));
    CHECK(next.pao2() > prev);
    prev = next.pao2();
  }
}

TEST_CASE("driving pressure identity") {
  const auto twin = initial_state(reference_twin());
  for (int i = 0; i < kNumActions; i += 97) {
    const auto m = simulate_breath_mechanics(twin, decode_action(ActionIndex{i}));
    CHECK(m.driving_pressure_cmH2O == m.pip_cmH2O - m.peep_set_cmH2O);
  }
}

TEST_CASE("cohort sampling") {
  ParamRanges r;
  const auto cohort = spawn_cohort(98, 5, r);
  CHECK(cohort.size() == 98);
  for (const auto& p : cohort) CHECK_NOTHROW(validate(p));
  CHECK(spawn_cohort(98, 5, r) == cohort);
  CHECK(spawn_cohort(98, 6, r) != cohort);

  ParamRanges fixed = r;
  fixed.compliance = {40, 40, true};
  fixed.resistance = {12, 12, false};
  const auto one = spawn_cohort(1, 1, fixed);
  REQUIRE(one.size() == 1);
  CHECK(one[0].compliance_mL_per_cmH2O == doctest::Approx(40).epsilon(1e-12));
  CHECK(one[0].resistance_cmH2O_s_per_L == 12);

  ParamRanges bad = r;
  bad.compliance = {60, 25, true};
  CHECK_THROWS_AS(spawn_cohort(3, 1, bad), ConfigError);
  bad = r;
  bad.deadspace = {50, 200, false};
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("parameter invariants") {
  TwinParams p;
  CHECK_NOTHROW(validate(p));
  p.compliance_mL_per_cmH2O = 10;
  CHECK_THROWS_AS(validate(p), ParameterError);
  p = TwinParams{};
  p.vco2_L_per_min = 0.3;
  p.vo2_L_per_min = 0.25;  // RQ 1.2
  CHECK_THROWS_AS(validate(p), ParameterError);
}

TEST_CASE("injury never decreases and compliance never exceeds baseline over an episode") {
  const auto cohort = spawn_cohort(5, 11, ParamRanges{});
  for (const auto& p : cohort) {
    auto twin = initial_state(p);
    for (int t = 0; t < 24; ++t) {
      const Action a = decode_action(ActionIndex{(t * 2417) % kNumActions});
      const auto [next, m] = step_twin(twin, a, 100 + static_cast<std::uint64_t>(t));
      CHECK(next.injury_level >= twin.injury_level);
      CHECK(next.effective_compliance_mL_per_cmH2O <= p.compliance_mL_per_cmH2O);
      CHECK(next.effective_shunt_fraction >= p.base_shunt_fraction * peep_recruitment(a.peep_cmH2O) - 1e-15);
      CHECK(next.obs[Channel::spo2] > 0);
      CHECK(next.obs[Channel::spo2] <= 1);
      CHECK(next.pao2() > 0);
      CHECK(next.paco2() > 0);
      twin = next;
    }
  }
}

}  // TEST_SUITE
