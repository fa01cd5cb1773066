#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "ventlab/dataset.hpp"
#include "ventlab/network.hpp"
#include "ventlab/patient_state.hpp"
#include "ventlab/twin.hpp"

namespace fixtures {

inline ventlab::NetConfig tiny_net(int actions = ventlab::kNumActions) {
  ventlab::NetConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.ff_hidden = 12;
  c.mlp_hidden = 6;
  c.seq_len = 3;
  c.num_actions = actions;
  return c;
}

/// Small generated dataset shared by the learning tests.
inline const ventlab::Dataset& small_dataset() {
  static const ventlab::Dataset d = [] {
    const auto cohort = ventlab::spawn_cohort(6, 21, ventlab::ParamRanges{});
    ventlab::DatasetConfig cfg;
    cfg.episodes_per_twin = 2;
    cfg.horizon_steps = 10;
    cfg.seed = 4;
    return ventlab::generate_dataset(cohort, cfg);
  }();
  return d;
}

inline ventlab::WindowSet small_windows(int L, bool train = true) {
  const auto& d = small_dataset();
  return ventlab::make_windows(d.episodes, train ? d.split.train : d.split.test, L, d.normalizer);
}

/// Gaussian windows (batch x len x state_dim).
inline std::vector<double> random_windows(int batch, int len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(batch) * static_cast<std::size_t>(len) *
                          ventlab::kStateDim);
  for (auto& v : out) v = n(rng);
  return out;
}

/// Window set with a single transition built from explicit rows.
inline ventlab::WindowSet single_transition(int L, int action, double reward, bool terminal,
                                            std::uint64_t seed) {
  ventlab::WindowSet w;
  w.length = L;
  const auto rows = random_windows(1, L + 1, seed);
  w.rows = rows;
  for (int j = 0; j < L; ++j) {
    w.history.push_back(j);
    w.next_history.push_back(j + 1);
  }
  w.actions.push_back({action});
  w.rewards.push_back(reward);
  w.terminal.push_back(terminal ? 1 : 0);
  w.episode.push_back(0);
  w.step.push_back(0);
  return w;
}

}  // namespace fixtures
