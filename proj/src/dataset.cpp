#include "ventlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ventlab/apache.hpp"
#include "ventlab/error.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<Channel, 10> kLabChannels{
    Channel::lactate, Channel::na,  Channel::k,   Channel::cl,        Channel::hco3,
    Channel::creatinine, Channel::bun, Channel::wbc, Channel::platelets, Channel::hb};

bool complete(const PatientState& s) {
  return std::none_of(s.values.begin(), s.values.end(), [](double v) { return is_missing(v); });
}

Episode roll_episode(const TwinParams& params, int twin_id, int episode_id,
                     const DatasetConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(twin_id),
                                 static_cast<std::uint64_t>(episode_id)}));
  Episode e;
  e.twin_id = twin_id;
  e.episode_id = episode_id;
  const auto H = static_cast<std::size_t>(cfg.horizon_steps);
  e.states.reserve(H + 1);
  e.mechs.reserve(H + 1);
  e.actions.reserve(H);

  TwinState twin = initial_state(params);
  MechanicsObservation mech = initial_mechanics(twin);
  apply_process_noise(twin, rng);
  e.states.push_back(twin.obs);
  e.mechs.push_back(mech);

  for (std::size_t t = 0; t < H; ++t) {
    const ActionIndex a = scripted_clinician(twin.obs, mech, cfg.clinician_eps, rng, cfg.clinician);
    const std::uint64_t step_seed = rng();
    auto [next, m] = step_twin(twin, decode_action(a), step_seed, cfg.injury);
    e.actions.push_back(a);
    e.states.push_back(next.obs);
    e.mechs.push_back(m);
    twin = std::move(next);
    mech = m;
  }
  const int apache_final = apache2_score(twin.obs, mech.settings.fio2);
  e.final_injury = twin.injury_level;
  e.death_probability = death_probability(apache_final, twin.injury_level, cfg.injury_weight);
  e.survived = uniform01(rng) >= e.death_probability;
  return e;
}

}  // namespace

bool is_missing(double v) { return std::isnan(v); }

Transition transition_at(const Episode& e, int step) {
  if (step < 0 || step >= e.horizon()) throw ContractError("transition step out of range");
  const auto t = static_cast<std::size_t>(step);
  Transition tr;
  tr.state = e.states[t];
  tr.mech = e.mechs[t];
  tr.action = e.actions[t];
  tr.reward = t < e.rewards.size() ? e.rewards[t] : 0.0;
  tr.next_state = e.states[t + 1];
  tr.next_mech = e.mechs[t + 1];
  tr.terminal = step == e.horizon() - 1;
  if (tr.terminal) tr.survived = e.survived;
  tr.episode_id = e.episode_id;
  tr.step_index = step;
  return tr;
}

double death_probability(double apache_final, double injury_final, double injury_weight) {
  const double logit = -3.517 + 0.146 * apache_final + injury_weight * injury_final;
  return 1.0 / (1.0 + std::exp(-logit));
}

std::vector<Episode> generate_episodes(const std::vector<TwinParams>& cohort,
                                       const DatasetConfig& cfg) {
  if (cfg.episodes_per_twin < 1 || cfg.horizon_steps < 1)
    throw ConfigError("episodes_per_twin and horizon_steps must be positive");
  const int per = cfg.episodes_per_twin;
  const int total = static_cast<int>(cohort.size()) * per;
  std::vector<Episode> out(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i)
    out[static_cast<std::size_t>(i)] =
        roll_episode(cohort[static_cast<std::size_t>(i / per)], i / per, i, cfg);
  return out;
}

void inject_missing(std::vector<Episode>& episodes, double rate, std::uint64_t seed) {
  if (!(rate >= 0 && rate < 1)) throw ConfigError("missing_rate must lie in [0, 1)");
  if (rate == 0) return;
  for (auto& e : episodes) {
    Rng rng(derive_seed(seed, {0x5eedULL, static_cast<std::uint64_t>(e.episode_id)}));
    for (auto& s : e.states)
      for (Channel c : kLabChannels)
        if (uniform01(rng) < rate) s[c] = kNaN;
  }
}

void impute_missing(std::vector<std::vector<PatientState>>& series, int k,
                    std::span<const PatientState> reference) {
  if (k < 1) throw ConfigError("knn k must be positive");
  for (std::size_t c = 0; c < kStateDim; ++c) {
    bool seen = false;
    for (const auto& s : series)
      for (const auto& row : s) seen = seen || !is_missing(row.values[c]);
    for (const auto& row : reference) seen = seen || !is_missing(row.values[c]);
    if (!seen)
      throw DataError("channel '" + std::string(kChannels[c].name) + "' is never observed");
  }

  for (auto& s : series) {
    for (std::size_t c = 0; c < kStateDim; ++c) {
      double last = kNaN;
      for (auto& row : s) {
        if (is_missing(row.values[c])) row.values[c] = last;
        else last = row.values[c];
      }
    }
  }

  bool any_gap = false;
  for (const auto& s : series)
    for (const auto& row : s) any_gap = any_gap || !complete(row);
  if (!any_gap) return;

  std::vector<const PatientState*> pool;
  for (const auto& row : reference)
    if (complete(row)) pool.push_back(&row);
  if (pool.empty()) throw DataError("no complete rows available for k-NN imputation");

  std::array<double, kStateDim> mean{};
  std::array<double, kStateDim> sd{};
  for (const auto* r : pool)
    for (std::size_t c = 0; c < kStateDim; ++c) mean[c] += r->values[c];
  for (auto& m : mean) m /= static_cast<double>(pool.size());
  for (const auto* r : pool)
    for (std::size_t c = 0; c < kStateDim; ++c) sd[c] += (r->values[c] - mean[c]) * (r->values[c] - mean[c]);
  for (auto& v : sd) {
    v = std::sqrt(v / static_cast<double>(pool.size()));
    if (v < 1e-12) v = 1.0;
  }

  const std::size_t kk = std::min(pool.size(), static_cast<std::size_t>(k));
  std::vector<std::pair<double, std::size_t>> dist(pool.size());
  for (auto& s : series) {
    for (auto& row : s) {
      if (complete(row)) continue;
      for (std::size_t j = 0; j < pool.size(); ++j) {
        double d = 0;
        for (std::size_t c = 0; c < kStateDim; ++c) {
          if (is_missing(row.values[c])) continue;
          const double z = (row.values[c] - pool[j]->values[c]) / sd[c];
          d += z * z;
        }
        dist[j] = {d, j};
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
      for (std::size_t c = 0; c < kStateDim; ++c) {
        if (!is_missing(row.values[c])) continue;
        double acc = 0;
        for (std::size_t j = 0; j < kk; ++j) acc += pool[dist[j].second]->values[c];
        row.values[c] = acc / static_cast<double>(kk);
      }
    }
  }
}

void impute_missing(std::vector<std::vector<PatientState>>& series, int k) {
  std::vector<PatientState> reference;
  for (const auto& s : series) reference.insert(reference.end(), s.begin(), s.end());
  impute_missing(series, k, reference);
}

Split split_dataset(int n, double ratio, std::uint64_t seed) {
  if (n < 1) throw DataError("cannot split an empty episode set");
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("train ratio must lie in (0, 1)");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5b117ULL}));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * n));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

StateNormalizer StateNormalizer::fit(const std::vector<Episode>& episodes,
                                     std::span<const int> subset) {
  StateNormalizer n;
  std::size_t count = 0;
  for (int i : subset)
    for (const auto& s : episodes[static_cast<std::size_t>(i)].states) {
      for (std::size_t c = 0; c < kStateDim; ++c) n.mean[c] += s.values[c];
      ++count;
    }
  if (count == 0) throw DataError("normalization needs at least one state");
  for (auto& m : n.mean) m /= static_cast<double>(count);
  for (int i : subset)
    for (const auto& s : episodes[static_cast<std::size_t>(i)].states)
      for (std::size_t c = 0; c < kStateDim; ++c)
        n.stddev[c] += (s.values[c] - n.mean[c]) * (s.values[c] - n.mean[c]);
  for (auto& v : n.stddev) {
    v = std::sqrt(v / static_cast<double>(count));
    if (v < 1e-8) v = 1.0;
  }
  return n;
}

PatientState StateNormalizer::apply(const PatientState& s) const {
  PatientState out;
  apply_to(s, out.values);
  return out;
}

void StateNormalizer::apply_to(const PatientState& s, std::span<double> out) const {
  for (std::size_t c = 0; c < kStateDim; ++c) out[c] = (s.values[c] - mean[c]) / stddev[c];
}

RewardNorms fit_reward_norms(const std::vector<Episode>& episodes, std::span<const int> subset) {
  RewardNorms n{0, 0};
  for (int i : subset) {
    const auto& e = episodes[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < e.states.size(); ++t) {
      n.apache_max = std::max<double>(n.apache_max, apache2_score(e.states[t], e.mechs[t].settings.fio2));
      n.dp_max = std::max(n.dp_max, e.mechs[t].driving_pressure_cmH2O);
    }
  }
  if (!(n.apache_max > 0)) n.apache_max = 1;
  if (!(n.dp_max > 0)) n.dp_max = 1;
  return n;
}

void attach_rewards(std::vector<Episode>& episodes, const RewardNorms& norms) {
  for (auto& e : episodes) {
    e.rewards.assign(e.actions.size(), 0.0);
    for (int t = 0; t < e.horizon(); ++t) {
      const auto i = static_cast<std::size_t>(t);
      const bool terminal = t == e.horizon() - 1;
      e.rewards[i] = compute_reward(e.states[i], e.states[i + 1], e.mechs[i], e.mechs[i + 1],
                                    terminal, terminal ? std::optional<bool>(e.survived) : std::nullopt,
                                    norms);
    }
  }
}

Dataset generate_dataset(const std::vector<TwinParams>& cohort, const DatasetConfig& cfg) {
  Dataset d;
  d.config = cfg;
  d.episodes = generate_episodes(cohort, cfg);
  inject_missing(d.episodes, cfg.missing_rate, cfg.seed);
  d.split = split_dataset(static_cast<int>(d.episodes.size()), cfg.train_ratio, cfg.seed);

  std::vector<PatientState> reference;
  for (int i : d.split.train) {
    const auto& s = d.episodes[static_cast<std::size_t>(i)].states;
    reference.insert(reference.end(), s.begin(), s.end());
  }
  std::vector<std::vector<PatientState>> series;
  series.reserve(d.episodes.size());
  for (auto& e : d.episodes) series.push_back(std::move(e.states));
  impute_missing(series, cfg.knn_k, reference);
  for (std::size_t i = 0; i < d.episodes.size(); ++i) d.episodes[i].states = std::move(series[i]);

  d.normalizer = StateNormalizer::fit(d.episodes, d.split.train);
  d.reward_norms = fit_reward_norms(d.episodes, d.split.train);
  attach_rewards(d.episodes, d.reward_norms);
  return d;
}

double cohort_mortality(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw DataError("no episodes");
  double acc = 0;
  for (const auto& e : episodes) acc += e.death_probability;
  return acc / static_cast<double>(episodes.size());
}

std::vector<std::size_t> WindowSet::initial_windows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (step[i] == 0) out.push_back(i);
  return out;
}

void WindowSet::gather(std::size_t i, bool next, std::span<double> out) const {
  const auto ids = next ? next_history_of(i) : history_of(i);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto r = row(ids[j]);
    std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(j * kStateDim));
  }
}

WindowSet make_windows(const std::vector<Episode>& episodes, std::span<const int> subset, int L,
                       const StateNormalizer& norm) {
  if (L < 1) throw ContractError("window length must be at least 1");
  if (subset.empty()) throw DataError("cannot build windows from an empty episode set");
  WindowSet w;
  w.length = L;
  for (int ei : subset) {
    const auto& e = episodes[static_cast<std::size_t>(ei)];
    const int base = static_cast<int>(w.num_rows());
    for (const auto& s : e.states) {
      const std::size_t off = w.rows.size();
      w.rows.resize(off + kStateDim);
      norm.apply_to(s, std::span<double>(w.rows.data() + off, kStateDim));
    }
    for (int t = 0; t < e.horizon(); ++t) {
      for (int j = 0; j < L; ++j) w.history.push_back(base + std::max(0, t - L + 1 + j));
      for (int j = 0; j < L; ++j) w.next_history.push_back(base + std::max(0, t - L + 2 + j));
      w.actions.push_back(e.actions[static_cast<std::size_t>(t)]);
      w.rewards.push_back(t < static_cast<int>(e.rewards.size()) ? e.rewards[static_cast<std::size_t>(t)] : 0.0);
      w.terminal.push_back(t == e.horizon() - 1 ? 1 : 0);
      w.episode.push_back(ei);
      w.step.push_back(t);
    }
  }
  return w;
}

std::vector<PatientState> last_window(std::span<const PatientState> states, int L) {
  if (L < 1) throw ContractError("window length must be at least 1");
  if (states.empty()) throw DataError("empty state history");
  std::vector<PatientState> out;
  const int n = static_cast<int>(states.size());
  for (int j = 0; j < L; ++j)
    out.push_back(states[static_cast<std::size_t>(std::max(0, n - L + j))]);
  return out;
}

Window window_at(const Episode& e, int step, int L) {
  if (step < 0 || step >= e.horizon()) throw ContractError("window step out of range");
  Window w;
  const auto all = std::span<const PatientState>(e.states);
  w.states = last_window(all.first(static_cast<std::size_t>(step) + 1), L);
  w.next_states = last_window(all.first(static_cast<std::size_t>(step) + 2), L);
  w.action = e.actions[static_cast<std::size_t>(step)];
  w.reward = static_cast<std::size_t>(step) < e.rewards.size() ? e.rewards[static_cast<std::size_t>(step)] : 0.0;
  w.terminal = step == e.horizon() - 1;
  return w;
}

}  // namespace ventlab
