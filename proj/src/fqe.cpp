#include "ventlab/fqe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "ventlab/baselines.hpp"
#include "ventlab/error.hpp"
#include "ventlab/optim.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

constexpr std::size_t kChunk = 256;

std::vector<double> gather_rows(const WindowSet& data, std::span<const std::size_t> rows, bool next) {
  const auto per = static_cast<std::size_t>(data.length) * kStateDim;
  std::vector<double> out(rows.size() * per);
  for (std::size_t i = 0; i < rows.size(); ++i)
    data.gather(rows[i], next, std::span<double>(out).subspan(i * per, per));
  return out;
}

std::vector<std::size_t> all_rows(const WindowSet& data) {
  std::vector<std::size_t> r(data.size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

GreedySelector::GreedySelector(const Checkpoint& ck, double bcq_threshold)
    : net_(ck.net), params_(ck.params), bcq_(ck.kind == "bcq"), threshold_(bcq_threshold), id_(ck.kind) {
  if (bcq_ && !ck.net.behavior_head) throw ContractError("BCQ checkpoint without an imitation head");
  if (params_.size() != net_.num_params()) throw ContractError("checkpoint does not match its model");
}

std::vector<ActionIndex> GreedySelector::select_windows(std::span<const double> windows, int batch) const {
  const int len = net_.config().seq_len;
  const auto per = static_cast<std::size_t>(len) * kStateDim;
  const int A = net_.config().num_actions;
  std::vector<ActionIndex> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (std::size_t b0 = 0; b0 < static_cast<std::size_t>(batch); b0 += kChunk) {
    const auto n = std::min<std::size_t>(kChunk, static_cast<std::size_t>(batch) - b0);
    const auto f = net_.forward_batch(params_, windows.subspan(b0 * per, n * per), static_cast<int>(n), len,
                                      {.q_full = true, .behavior = bcq_});
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> q(f.q.out.data() + i * static_cast<std::size_t>(A), static_cast<std::size_t>(A));
      if (bcq_) {
        const std::span<const double> lg(f.behavior.out.data() + i * static_cast<std::size_t>(A), static_cast<std::size_t>(A));
        out.push_back(bcq_greedy(q, lg, threshold_));
      } else {
        out.push_back(greedy_index(q));
      }
    }
  }
  return out;
}

std::vector<double> GreedySelector::greedy_values(std::span<const double> windows, int batch) const {
  const int len = net_.config().seq_len;
  const auto per = static_cast<std::size_t>(len) * kStateDim;
  const auto acts = select_windows(windows, batch);
  std::vector<double> out;
  for (std::size_t b0 = 0; b0 < static_cast<std::size_t>(batch); b0 += kChunk) {
    const auto n = std::min<std::size_t>(kChunk, static_cast<std::size_t>(batch) - b0);
    const auto f = net_.forward_batch(params_, windows.subspan(b0 * per, n * per), static_cast<int>(n), len,
                                      {.q_full = false});
    for (std::size_t i = 0; i < n; ++i) out.push_back(net_.q_value(params_, f, static_cast<int>(i), acts[b0 + i].value));
  }
  return out;
}

std::vector<ActionIndex> GreedySelector::select(const WindowSet& data, std::span<const std::size_t> rows,
                                                bool next) const {
  if (data.length != net_.config().seq_len) throw ContractError("window length differs from the policy's");
  const auto w = gather_rows(data, rows, next);
  return select_windows(w, static_cast<int>(rows.size()));
}

std::vector<ActionIndex> LoggedSelector::select(const WindowSet& data, std::span<const std::size_t> rows,
                                                bool next) const {
  std::vector<ActionIndex> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    if (!next) out.push_back(data.actions[r]);
    else if (data.terminal[r] || r + 1 >= data.size()) out.push_back(ActionIndex{0});  // never bootstrapped
    else out.push_back(data.actions[r + 1]);
  }
  return out;
}

// ---- tabular ----

TabularQ::Key TabularQ::key(const WindowSet& data, std::size_t i, bool next, int action) {
  std::vector<double> w(static_cast<std::size_t>(data.length) * kStateDim);
  data.gather(i, next, w);
  return {std::move(w), action};
}

void TabularQ::reset(std::uint64_t) {
  table_.clear();
  target_.clear();
}

std::vector<double> TabularQ::target_values(const WindowSet& data, std::span<const ActionIndex> next_actions) {
  std::vector<double> out(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.terminal[i]) continue;
    const auto it = target_.find(key(data, i, true, next_actions[i].value));
    if (it != target_.end()) out[i] = it->second;
  }
  return out;
}

double TabularQ::regress(const WindowSet& data, std::span<const double> y) {
  std::map<Key, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& a = acc[key(data, i, false, data.actions[i].value)];
    a.first += y[i];
    a.second += 1;
  }
  table_.clear();
  for (auto& [k, a] : acc) table_[k] = a.first / a.second;
  double mse = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = table_[key(data, i, false, data.actions[i].value)] - y[i];
    mse += d * d;
  }
  return mse / static_cast<double>(data.size());
}

std::vector<double> TabularQ::values(const WindowSet& data, std::span<const std::size_t> rows,
                                     std::span<const ActionIndex> actions) {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = table_.find(key(data, rows[i], false, actions[i].value));
    out.push_back(it == table_.end() ? 0.0 : it->second);
  }
  return out;
}

// ---- network ----

void FqeConfig::validate() const {
  if (!(gamma >= 0 && gamma < 1)) throw ConfigError("fqe: gamma must lie in [0, 1)");
  if (refreshes < 1 || epochs < 1 || batch_size < 1) throw ConfigError("fqe: iteration counts must be positive");
  if (!(tol >= 0) || !(eta > 0)) throw ConfigError("fqe: tol must be >= 0 and eta > 0");
}

NetworkQ::NetworkQ(NetConfig cfg, const FqeConfig& fqe) : net_([&] {
  cfg.behavior_head = false;
  return cfg;
}()), cfg_(fqe) {
  reset(fqe.seed);
}

void NetworkQ::reset(std::uint64_t seed) {
  seed_ = seed;
  params_ = net_.init_params(derive_seed(seed, {0xf9eULL}));
  target_ = params_;
  adam_ = {};
  epoch_counter_ = 0;
}

std::vector<double> NetworkQ::batch_values(const WindowSet& data, std::span<const std::size_t> rows, bool next,
                                           std::span<const ActionIndex> actions, std::span<const double> p) const {
  const int len = data.length;
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t b0 = 0; b0 < rows.size(); b0 += kChunk) {
    const auto n = std::min(kChunk, rows.size() - b0);
    const auto w = gather_rows(data, rows.subspan(b0, n), next);
    const auto f = net_.forward_batch(p, w, static_cast<int>(n), len, {.q_full = false});
    for (std::size_t i = 0; i < n; ++i) out.push_back(net_.q_value(p, f, static_cast<int>(i), actions[b0 + i].value));
  }
  return out;
}

std::vector<double> NetworkQ::target_values(const WindowSet& data, std::span<const ActionIndex> next_actions) {
  const auto rows = all_rows(data);
  auto out = batch_values(data, rows, true, next_actions, target_);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (data.terminal[i]) out[i] = 0.0;
  return out;
}

std::vector<double> NetworkQ::values(const WindowSet& data, std::span<const std::size_t> rows,
                                     std::span<const ActionIndex> actions) {
  return batch_values(data, rows, false, actions, params_);
}

double NetworkQ::regress(const WindowSet& data, std::span<const double> y) {
  const std::size_t n = data.size();
  std::vector<std::size_t> order = all_rows(data);
  std::vector<double> grad(net_.num_params());
  const AdamConfig adam{.lr = cfg_.eta};
  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  double mse = 0;
  for (int e = 0; e < cfg_.epochs; ++e) {
    Rng rng(derive_seed(seed_, {0x5e0cULL, static_cast<std::uint64_t>(epoch_counter_++)}));
    std::shuffle(order.begin(), order.end(), rng);
    mse = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += B) {
      const auto m = std::min(B, n - b0);
      const std::span<const std::size_t> rows(order.data() + b0, m);
      const auto w = gather_rows(data, rows, false);
      const auto f = net_.forward_batch(params_, w, static_cast<int>(m), data.length, {.q_full = false});
      std::vector<int> acts(m);
      std::vector<double> g(m);
      for (std::size_t i = 0; i < m; ++i) {
        acts[i] = data.actions[rows[i]].value;
        const double d = net_.q_value(params_, f, static_cast<int>(i), acts[i]) - y[rows[i]];
        mse += d * d;
        g[i] = 2.0 * d / static_cast<double>(m);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      net_.backward_batch(params_, f, {.actions = acts, .sparse = g}, {}, grad);
      adam_step(params_, grad, adam_, adam);
    }
    mse /= static_cast<double>(n);
    if (!std::isfinite(mse)) throw NumericError("fqe: regression loss is not finite");
  }
  return mse;
}

// ---- fitting and scoring ----

FqeResult fit_fqe(EvaluationQ& model, const WindowSet& train, const ActionSelector& policy,
                  const FqeConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw DataError("fqe: empty training set");
  const auto rows = all_rows(train);
  const auto next_actions = policy.select(train, rows, true);

  FqeResult res;
  res.policy_id = policy.id();
  model.reset(cfg.seed);
  std::vector<double> prev;
  for (int it = 1; it <= cfg.refreshes; ++it) {
    model.refresh_target();
    const auto tv = model.target_values(train, next_actions);
    std::vector<double> y(train.size());
    double shift = prev.empty() ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = train.rewards[i] + (train.terminal[i] ? 0.0 : cfg.gamma * tv[i]);
      if (!std::isfinite(y[i])) throw NumericError("fqe: non-finite target at iteration " + std::to_string(it));
      if (!prev.empty()) shift = std::max(shift, std::abs(y[i] - prev[i]));
    }
    const double mse = model.regress(train, y);
    res.trace.push_back({it, shift, mse});
    res.iterations = it;
    if (shift < cfg.tol) {
      res.converged = true;
      break;
    }
    prev = std::move(y);
  }
  return res;
}

FqeScore fqe_score(EvaluationQ& model, const WindowSet& test, const ActionSelector& policy) {
  const auto init = test.initial_windows();
  if (init.empty()) throw DataError("fqe: empty test set");
  const auto acts = policy.select(test, init, false);
  FqeScore s;
  s.per_episode = model.values(test, init, acts);
  for (std::size_t i : init) s.episodes.push_back(test.episode[i]);
  s.mean = std::accumulate(s.per_episode.begin(), s.per_episode.end(), 0.0) / static_cast<double>(init.size());
  return s;
}

double ood_initial_q(const GreedySelector& policy, std::span<const double> windows, int batch) {
  if (batch < 1) throw DataError("ood_initial_q: no windows");
  const auto v = policy.greedy_values(windows, batch);
  return std::accumulate(v.begin(), v.end(), 0.0) / batch;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw ContractError("pearson: need at least 3 paired values");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DataError("pearson: correlation undefined for a constant series");
  Correlation c;
  c.n = static_cast<int>(x.size());
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.p = 0.0;
    return c;
  }
  const double df = n - 2;
  const double t = c.r * std::sqrt(df / (1 - c.r * c.r));
  const boost::math::students_t dist(df);
  c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

}  // namespace ventlab
