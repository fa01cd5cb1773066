#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "ventlab/error.hpp"
#include "ventlab/online_eval.hpp"

using namespace ventlab;

namespace {

RolloutConfig short_config(int horizon = 6) {
  RolloutConfig c;
  c.horizon = horizon;
  c.norms = {20, 10};
  return c;
}

RolloutStep step_with(bool ok, double dp) {
  RolloutStep s;
  s.flags.pao2_ok = ok;
  s.mech.driving_pressure_cmH2O = dp;
  return s;
}

RolloutRecord record_with(double initial_dp, std::initializer_list<std::pair<bool, double>> steps) {
  RolloutRecord r;
  r.initial_mech.driving_pressure_cmH2O = initial_dp;
  for (auto [ok, dp] : steps) r.steps.push_back(step_with(ok, dp));
  return r;
}

}  // namespace

TEST_SUITE("online_eval") {

TEST_CASE("safety flag boundaries") {
  PatientState s;
  s[Channel::pao2] = 60;
  s[Channel::paco2] = 40;
  MechanicsObservation m;
  m.pip_cmH2O = 35;
  auto f = safety_flags(s, m);
  CHECK_FALSE(f.pao2_ok);
  CHECK(f.pip_ok);
  CHECK(f.paco2_ok);
  CHECK_FALSE(f.all());
  s[Channel::pao2] = 60.01;
  CHECK(safety_flags(s, m).all());
  m.pip_cmH2O = 35.01;
  CHECK_FALSE(safety_flags(s, m).pip_ok);
  m.pip_cmH2O = 30;
  s[Channel::paco2] = 60;
  CHECK_FALSE(safety_flags(s, m).paco2_ok);
  s[Channel::paco2] = 59.99;
  CHECK(safety_flags(s, m).paco2_ok);
}

TEST_CASE("conservative settings keep a healthy twin within every limit") {
  TwinParams healthy;
  healthy.compliance_mL_per_cmH2O = 60;
  healthy.resistance_cmH2O_s_per_L = 8;
  healthy.base_shunt_fraction = 0.05;
  healthy.baseline = spawn_cohort(1, 3, ParamRanges{})[0].baseline;
  const ConstantPolicy safe(encode_action({8, 0.5, 16, {1, 2}, 10}), "safe");
  const auto r = rollout(safe, healthy, 0, short_config(24), 1);
  REQUIRE(r.steps.size() == 24);
  CHECK_FALSE(r.failed);
  for (const auto& s : r.steps) CHECK(s.flags.all());
  CHECK(compliance_metrics(std::span(&r, 1)).safety_rate == 100.0);
}

TEST_CASE("maximum pressures always violate the PIP limit") {
  const ConstantPolicy high(encode_action({18, 0.5, 16, {1, 2}, 25}), "high");
  const auto cohort = spawn_cohort(3, 4, ParamRanges{});
  for (const auto& r : rollout_cohort(high, cohort, short_config(), 2)) {
    for (const auto& s : r.steps) {
      CHECK(s.mech.pip_cmH2O == 43.0);
      CHECK_FALSE(s.flags.pip_ok);
    }
  }
}

TEST_CASE("compliance metrics count steps") {
  const auto a = record_with(10, {{true, 8}, {true, 10}, {false, 9}, {true, 12}});
  const auto m = compliance_metrics(std::span(&a, 1));
  CHECK(m.safety_rate == doctest::Approx(75.0));
  CHECK(m.reduced_dp_rate == doctest::Approx(50.0));

  const auto flat = record_with(10, {{true, 10}, {true, 10}, {true, 10}});
  const auto mf = compliance_metrics(std::span(&flat, 1));
  CHECK(mf.reduced_dp_rate == 0.0);
  CHECK(mf.safety_rate == 100.0);

  std::vector<RolloutRecord> both{a, flat};
  const auto m1 = compliance_metrics(both);
  std::reverse(both.begin(), both.end());
  const auto m2 = compliance_metrics(both);
  CHECK(m1.safety_rate == m2.safety_rate);
  CHECK(m1.reduced_dp_rate == m2.reduced_dp_rate);
  CHECK(m1.safety_rate == doctest::Approx(100.0 * 6 / 7));
}

TEST_CASE("rollouts are deterministic per seed") {
  const auto cohort = spawn_cohort(4, 5, ParamRanges{});
  const ClinicianPolicy clin;
  const auto a = rollout_cohort(clin, cohort, short_config(), 9);
  const auto b = rollout_cohort(clin, cohort, short_config(), 9);
  const auto c = rollout_cohort(clin, cohort, short_config(), 10);
  REQUIRE(a.size() == 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].steps.size() == b[i].steps.size());
    for (std::size_t t = 0; t < a[i].steps.size(); ++t) {
      CHECK(a[i].steps[t].state == b[i].steps[t].state);
      CHECK(a[i].steps[t].action == b[i].steps[t].action);
      CHECK(a[i].steps[t].reward == b[i].steps[t].reward);
      differs = differs || a[i].steps[t].state != c[i].steps[t].state;
    }
    CHECK(a[i].mortality == b[i].mortality);
    CHECK(a[i].mortality >= 0);
    CHECK(a[i].mortality <= 1);
    CHECK(std::abs(a[i].cumulative_reward) <= 6.0);
  }
  CHECK(differs);
  // Each twin's stream is its own: a single-twin rollout reproduces the cohort entry.
  const auto solo = rollout(clin, cohort[2], 2, short_config(), 9);
  CHECK(solo.steps.back().state == a[2].steps.back().state);
}

TEST_CASE("network policy acts through the checkpoint") {
  const auto& d = fixtures::small_dataset();
  Checkpoint ck;
  ck.net = fixtures::tiny_net();
  ck.params = Network(ck.net).init_params(12);
  ck.target = ck.params;
  const NetworkPolicy pol(ck, d.normalizer);
  const auto cohort = spawn_cohort(2, 6, ParamRanges{});
  const auto r = rollout_cohort(pol, cohort, short_config(4), 1);
  REQUIRE(r.size() == 2);
  for (const auto& rec : r) {
    CHECK(rec.steps.size() == 4);
    for (const auto& s : rec.steps) {
      CHECK(s.action.value >= 0);
      CHECK(s.action.value < kNumActions);
    }
  }
}

TEST_CASE("action histograms") {
  const std::vector<ActionIndex> same(50, encode_action({10, 0.45, 14, {1, 3}, 12}));
  const auto h = action_distribution(same);
  CHECK(h.count == 50);
  CHECK(h.percent[0][2] == 100.0);
  CHECK(h.percent[1][2] == 100.0);
  CHECK(h.percent[2][2] == 100.0);
  CHECK(h.percent[3][1] == 100.0);
  CHECK(h.percent[4][3] == 100.0);

  const RandomPolicy rnd;
  Rng rng(4);
  MechanicsObservation m;
  std::vector<PatientState> hist(1);
  std::vector<Decision> batch(30000, Decision{hist, &m, &rng});
  const auto acts = rnd.act(batch);
  const auto hr = action_distribution(acts);
  for (double p : hr.percent[0]) CHECK(p == doctest::Approx(100.0 / 6).epsilon(0.06));
  for (const auto& dim : hr.percent) {
    CHECK(std::accumulate(dim.begin(), dim.end(), 0.0) == doctest::Approx(100.0).epsilon(1e-11));
  }

  std::ostringstream os;
  write_histogram_csv(os, "const", h);
  const std::string csv = os.str();
  CHECK(csv.rfind("policy,dimension,bin,value,percent\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 + 8 + 7 + 5 + 8);
}

TEST_CASE("OOD controls") {
  const auto& d = fixtures::small_dataset();
  const ParamRanges ranges;
  CHECK(extend_ranges(ranges, 0.0).compliance.lo == ranges.compliance.lo);
  CHECK(extend_ranges(ranges, 0.0).compliance.hi == ranges.compliance.hi);

  OodConfig zero;
  zero.count = 20;
  zero.extension = 0.0;
  const auto ext0 = spawn_cohort(500, 3, extend_ranges(ranges, 0.0));
  for (const auto& t : ext0) {
    CHECK(t.compliance_mL_per_cmH2O >= ranges.compliance.lo);
    CHECK(t.compliance_mL_per_cmH2O <= ranges.compliance.hi);
  }

  const auto heldout = fixtures::random_windows(10, 3, 5);
  zero.shift_sigma = 0.0;
  CHECK(make_ood_states(OodMode::feature_shift, ranges, d.normalizer, 3, heldout, zero, 1) == heldout);

  OodConfig shift;
  const auto shifted = make_ood_states(OodMode::feature_shift, ranges, d.normalizer, 3, heldout, shift, 1);
  for (std::size_t w = 0; w < 10; ++w) {
    int moved = 0;
    for (std::size_t c = 0; c < kStateDim; ++c) {
      const double delta = shifted[w * 3 * kStateDim + c] - heldout[w * 3 * kStateDim + c];
      if (delta != 0.0) {
        ++moved;
        CHECK(delta == doctest::Approx(3.0));
      }
    }
    CHECK(moved >= 1);
  }

  const auto ext = make_ood_states(OodMode::extended_params, ranges, d.normalizer, 3, {}, zero, 2);
  CHECK(ext.size() == 20 * 3 * kStateDim);
}

TEST_CASE("extended ranges put the expected mass outside the training range") {
  const ParamRanges ranges;
  const auto wide = spawn_cohort(10000, 8, extend_ranges(ranges, 0.2));
  int outside = 0;
  for (const auto& t : wide)
    outside += t.compliance_mL_per_cmH2O < ranges.compliance.lo || t.compliance_mL_per_cmH2O > ranges.compliance.hi;
  // Log-uniform widening by 20% of the log width on both sides: 0.4 / 1.4 of the mass.
  CHECK(outside / 10000.0 == doctest::Approx(0.4 / 1.4).epsilon(0.05));
}

TEST_CASE("sample mean and standard deviation") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto m = mean_std(v);
  CHECK(m.mean == 3.0);
  CHECK(m.std == doctest::Approx(std::sqrt(2.5)));
  CHECK(mean_std(std::vector<double>{4.0}).std == 0.0);
}

TEST_CASE("online report aggregates five seeds") {
  const auto cohort = spawn_cohort(3, 7, ParamRanges{});
  const ClinicianPolicy clin;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto rep = evaluate_policy_online(clin, cohort, short_config(), seeds);
  CHECK(rep.policy == "clinician");
  REQUIRE(rep.seeds.size() == 5);
  std::vector<double> rates;
  for (const auto& s : rep.seeds) {
    CHECK(s.compliance.safety_rate >= 0);
    CHECK(s.compliance.safety_rate <= 100);
    CHECK(s.compliance.reduced_dp_rate >= 0);
    CHECK(s.compliance.reduced_dp_rate <= 100);
    rates.push_back(s.compliance.safety_rate);
  }
  const auto ms = mean_std(rates);
  CHECK(rep.safety_rate.mean == doctest::Approx(ms.mean));
  CHECK(rep.safety_rate.std == doctest::Approx(ms.std));
  CHECK(rep.actions.count == 5 * 3 * 6);
  const auto j = to_json(rep);
  CHECK(j.at("seeds").size() == 5);
  CHECK(j.at("policy") == "clinician");
}

}  // TEST_SUITE
