#include "ventlab/online_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ventlab/apache.hpp"
#include "ventlab/error.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

constexpr std::array<const char*, 5> kDimNames{"peep", "fio2", "rr", "ie", "pvent"};

double bin_value(int dim, int bin) {
  ActionBins bins{};
  bins[static_cast<std::size_t>(dim)] = bin;
  const Action a = from_bins(bins);
  switch (dim) {
    case 0: return a.peep_cmH2O;
    case 1: return a.fio2;
    case 2: return a.rr_per_min;
    case 3: return static_cast<double>(a.ie.insp) / a.ie.exp;
    default: return a.pvent_cmH2O;
  }
}

}  // namespace

NetworkPolicy::NetworkPolicy(const Checkpoint& ck, StateNormalizer norm, double bcq_threshold)
    : selector_(ck, bcq_threshold), norm_(norm), len_(ck.net.seq_len) {}

std::vector<ActionIndex> NetworkPolicy::act(std::span<const Decision> batch) const {
  const auto per = static_cast<std::size_t>(len_) * kStateDim;
  std::vector<double> w(batch.size() * per);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto hist = last_window(batch[i].history, len_);
    for (std::size_t j = 0; j < hist.size(); ++j)
      norm_.apply_to(hist[j], std::span<double>(w).subspan(i * per + j * kStateDim, kStateDim));
  }
  return selector_.select_windows(w, static_cast<int>(batch.size()));
}

std::vector<ActionIndex> ClinicianPolicy::act(std::span<const Decision> batch) const {
  std::vector<ActionIndex> out;
  out.reserve(batch.size());
  for (const auto& d : batch) out.push_back(scripted_clinician(d.history.back(), *d.mech, eps_, *d.rng, targets_));
  return out;
}

std::vector<ActionIndex> RandomPolicy::act(std::span<const Decision> batch) const {
  std::vector<ActionIndex> out;
  out.reserve(batch.size());
  for (const auto& d : batch) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    out.push_back(ActionIndex{pick(*d.rng)});
  }
  return out;
}

SafetyFlags safety_flags(const PatientState& s, const MechanicsObservation& m) {
  return {.pao2_ok = s[Channel::pao2] > 60.0,
          .paco2_ok = s[Channel::paco2] < 60.0,
          .pip_ok = m.pip_cmH2O <= 35.0};
}

static std::vector<RolloutRecord> run_rollouts(const Policy& policy, std::span<const TwinParams> cohort,
                                        std::span<const int> ids, const RolloutConfig& cfg,
                                        std::uint64_t seed) {
  const std::size_t n = cohort.size();
  std::vector<RolloutRecord> rec(n);
  std::vector<TwinState> twin(n);
  std::vector<MechanicsObservation> mech(n);
  std::vector<std::vector<PatientState>> hist(n);
  std::vector<Rng> rng;
  rng.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng.emplace_back(derive_seed(seed, {0x0e7a1ULL, static_cast<std::uint64_t>(ids[i])}));
    twin[i] = initial_state(cohort[i]);
    mech[i] = initial_mechanics(twin[i]);
    apply_process_noise(twin[i], rng[i]);
    hist[i].push_back(twin[i].obs);
    rec[i].twin_id = ids[i];
    rec[i].initial_state = twin[i].obs;
    rec[i].initial_mech = mech[i];
  }

  for (int t = 0; t < cfg.horizon; ++t) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < n; ++i)
      if (!rec[i].failed) live.push_back(i);
    if (live.empty()) break;
    std::vector<Decision> dec;
    for (std::size_t i : live) dec.push_back({hist[i], &mech[i], &rng[i]});
    const auto actions = policy.act(dec);
    const bool last = t == cfg.horizon - 1;

#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < live.size(); ++k) {
      const std::size_t i = live[k];
      try {
        const std::uint64_t step_seed = rng[i]();
        auto [next, m] = step_twin(twin[i], decode_action(actions[k]), step_seed, cfg.injury);
        std::optional<bool> survived;
        if (last) {
          const int apache = apache2_score(next.obs, m.settings.fio2);
          rec[i].mortality = death_probability(apache, next.injury_level, cfg.injury_weight);
          rec[i].survived = uniform01(rng[i]) >= rec[i].mortality;
          survived = rec[i].survived;
        }
        RolloutStep s;
        s.state = next.obs;
        s.action = actions[k];
        s.mech = m;
        s.reward = compute_reward(twin[i].obs, next.obs, mech[i], m, last, survived, cfg.norms);
        s.flags = safety_flags(next.obs, m);
        rec[i].cumulative_reward += s.reward;
        rec[i].steps.push_back(s);
        hist[i].push_back(next.obs);
        twin[i] = std::move(next);
        mech[i] = m;
      } catch (const Error& e) {
        rec[i].failed = true;
        rec[i].failure = e.what();
      }
    }
  }
  return rec;
}

std::vector<RolloutRecord> rollout_cohort(const Policy& policy, std::span<const TwinParams> cohort,
                                          const RolloutConfig& cfg, std::uint64_t seed) {
  std::vector<int> ids(cohort.size());
  std::iota(ids.begin(), ids.end(), 0);
  return run_rollouts(policy, cohort, ids, cfg, seed);
}

RolloutRecord rollout(const Policy& policy, const TwinParams& twin, int twin_id,
                      const RolloutConfig& cfg, std::uint64_t seed) {
  const int ids[1] = {twin_id};
  return run_rollouts(policy, std::span<const TwinParams>(&twin, 1), ids, cfg, seed).front();
}

ComplianceMetrics compliance_metrics(std::span<const RolloutRecord> records) {
  std::size_t steps = 0, safe = 0, reduced = 0;
  for (const auto& r : records) {
    const double dp0 = r.initial_mech.driving_pressure_cmH2O;
    for (const auto& s : r.steps) {
      ++steps;
      if (s.flags.all()) ++safe;
      if (s.mech.driving_pressure_cmH2O < dp0) ++reduced;
    }
  }
  ComplianceMetrics m;
  if (steps == 0) return m;
  m.safety_rate = 100.0 * static_cast<double>(safe) / static_cast<double>(steps);
  m.reduced_dp_rate = 100.0 * static_cast<double>(reduced) / static_cast<double>(steps);
  return m;
}

std::vector<double> initial_windows(std::span<const TwinParams> cohort, const StateNormalizer& norm,
                                    int L, std::uint64_t seed) {
  const auto per = static_cast<std::size_t>(L) * kStateDim;
  std::vector<double> out(cohort.size() * per);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    Rng rng(derive_seed(seed, {0x0e7a1ULL, i}));
    TwinState t = initial_state(cohort[i]);
    apply_process_noise(t, rng);
    for (int j = 0; j < L; ++j)
      norm.apply_to(t.obs, std::span<double>(out).subspan(i * per + static_cast<std::size_t>(j) * kStateDim, kStateDim));
  }
  return out;
}

std::vector<double> make_ood_states(OodMode mode, const ParamRanges& ranges, const StateNormalizer& norm,
                                    int L, std::span<const double> heldout, const OodConfig& cfg,
                                    std::uint64_t seed) {
  if (mode == OodMode::extended_params) {
    const auto cohort = spawn_cohort(cfg.count, derive_seed(seed, {0x00dULL}), extend_ranges(ranges, cfg.extension));
    return initial_windows(cohort, norm, L, derive_seed(seed, {0x00eULL}));
  }
  const auto per = static_cast<std::size_t>(L) * kStateDim;
  if (heldout.size() % per != 0) throw ContractError("held-out windows have the wrong shape");
  std::vector<double> out(heldout.begin(), heldout.end());
  Rng rng(derive_seed(seed, {0x5b1f7ULL}));
  for (std::size_t w = 0; w < out.size() / per; ++w) {
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < kStateDim; ++c)
      if (uniform01(rng) < cfg.shift_fraction) chosen.push_back(c);
    if (chosen.empty() && cfg.shift_fraction > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, kStateDim - 1);
      chosen.push_back(pick(rng));
    }
    for (std::size_t c : chosen)
      for (int j = 0; j < L; ++j) out[w * per + static_cast<std::size_t>(j) * kStateDim + c] += cfg.shift_sigma;
  }
  return out;
}

ActionHistogram action_distribution(std::span<const ActionIndex> actions) {
  ActionHistogram h;
  for (std::size_t d = 0; d < 5; ++d) h.percent[d].assign(static_cast<std::size_t>(kActionRadix[d]), 0.0);
  h.count = actions.size();
  if (actions.empty()) return h;
  for (ActionIndex a : actions) {
    const auto bins = decode_bins(a);
    for (std::size_t d = 0; d < 5; ++d) h.percent[d][static_cast<std::size_t>(bins[d])] += 1.0;
  }
  for (auto& dim : h.percent)
    for (double& v : dim) v = 100.0 * v / static_cast<double>(actions.size());
  return h;
}

ActionHistogram action_distribution(std::span<const RolloutRecord> records) {
  std::vector<ActionIndex> a;
  for (const auto& r : records)
    for (const auto& s : r.steps) a.push_back(s.action);
  return action_distribution(a);
}

ActionHistogram action_distribution(const std::vector<Episode>& episodes) {
  std::vector<ActionIndex> a;
  for (const auto& e : episodes) a.insert(a.end(), e.actions.begin(), e.actions.end());
  return action_distribution(a);
}

void write_histogram_csv(std::ostream& os, const std::string& policy, const ActionHistogram& h, bool header) {
  if (header) os << "policy,dimension,bin,value,percent\n";
  for (std::size_t d = 0; d < 5; ++d)
    for (std::size_t b = 0; b < h.percent[d].size(); ++b) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6g,%.12g\n", kDimNames[d], b,
                    bin_value(static_cast<int>(d), static_cast<int>(b)), h.percent[d][b]);
      os << policy << ',' << buf;
    }
}

MeanStd mean_std(std::span<const double> v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0;
    for (double x : v) s += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return m;
}

OnlineReport evaluate_policy_online(const Policy& policy, std::span<const TwinParams> cohort,
                                    const RolloutConfig& cfg, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ContractError("online evaluation needs at least one seed");
  OnlineReport rep;
  rep.policy = policy.id();
  std::vector<double> safety, dp, ret, mort;
  std::vector<ActionIndex> actions;
  for (std::uint64_t s : seeds) {
    const auto recs = rollout_cohort(policy, cohort, cfg, s);
    SeedMetrics m;
    m.seed = s;
    m.compliance = compliance_metrics(recs);
    for (const auto& r : recs) {
      m.cumulative_reward += r.cumulative_reward / static_cast<double>(recs.size());
      m.mortality += r.mortality / static_cast<double>(recs.size());
      m.failures += r.failed ? 1 : 0;
      for (const auto& st : r.steps) actions.push_back(st.action);
    }
    safety.push_back(m.compliance.safety_rate);
    dp.push_back(m.compliance.reduced_dp_rate);
    ret.push_back(m.cumulative_reward);
    mort.push_back(m.mortality);
    rep.seeds.push_back(m);
  }
  rep.safety_rate = mean_std(safety);
  rep.reduced_dp_rate = mean_std(dp);
  rep.cumulative_reward = mean_std(ret);
  rep.mortality = mean_std(mort);
  rep.actions = action_distribution(actions);
  return rep;
}

nlohmann::json to_json(const OnlineReport& r) {
  auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed},
                     {"safety_rate", s.compliance.safety_rate},
                     {"reduced_dp_rate", s.compliance.reduced_dp_rate},
                     {"cumulative_reward", s.cumulative_reward},
                     {"mortality", s.mortality},
                     {"failures", s.failures}});
  return {{"policy", r.policy},
          {"safety_rate", ms(r.safety_rate)},
          {"reduced_dp_rate", ms(r.reduced_dp_rate)},
          {"cumulative_reward", ms(r.cumulative_reward)},
          {"mortality", ms(r.mortality)},
          {"seeds", seeds}};
}

}  // namespace ventlab
