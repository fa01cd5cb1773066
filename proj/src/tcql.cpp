#include "ventlab/tcql.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "ventlab/baselines.hpp"
#include "ventlab/error.hpp"
#include "ventlab/kernels.hpp"
#include "ventlab/optim.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

double logsumexp(std::span<const double> x, double tau) {
  double mx = -INFINITY;
  for (double v : x) mx = std::max(mx, v / tau);
  double s = 0;
  for (double v : x) s += std::exp(v / tau - mx);
  return mx + std::log(s);
}

/// Writes softmax(x / tau) into p and returns log sum exp(x / tau).
double softmax(std::span<const double> x, double tau, std::span<double> p) {
  double mx = -INFINITY;
  for (double v : x) mx = std::max(mx, v / tau);
  double s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    p[j] = std::exp(x[j] / tau - mx);
    s += p[j];
  }
  const double inv = 1.0 / s;
  for (double& v : p) v *= inv;
  return mx + std::log(s);
}

void check(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component: ") + name);
}

std::span<const double> row(const std::vector<double>& m, int i, int n) {
  return {m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n), static_cast<std::size_t>(n)};
}

/// First len-1 states of each window.
std::vector<double> short_windows(const Batch& b) {
  const auto per = static_cast<std::size_t>(b.length) * kStateDim;
  const auto keep = per - kStateDim;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(b.size) * keep);
  for (int i = 0; i < b.size; ++i) {
    auto first = b.states.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * per);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
  if (!(gamma > 0 && gamma < 1)) fail("gamma must lie in (0, 1)");
  if (!(alpha0 >= 0)) fail("alpha0 must be non-negative");
  if (!(beta >= 0)) fail("beta must be non-negative");
  if (!(tau_cql > 0)) fail("tau_cql must be positive");
  if (!(lambda_sc >= 0)) fail("lambda_sc must be non-negative");
  if (!(eta > 0)) fail("eta must be positive");
  if (target_period < 1) fail("target_period must be at least 1");
  if (!(rho > 0 && rho <= 1)) fail("rho must lie in (0, 1]");
  if (batch_size < 1) fail("batch_size must be positive");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (!(bc_weight >= 0)) fail("bc_weight must be non-negative");
  if (!(bcq_threshold > 0 && bcq_threshold <= 1)) fail("bcq_threshold must lie in (0, 1]");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"alpha0", c.alpha0},
          {"beta", c.beta},
          {"tau_cql", c.tau_cql},
          {"lambda_sc", c.lambda_sc},
          {"sc_full_vector", c.sc_full_vector},
          {"eta", c.eta},
          {"clip_norm", c.clip_norm},
          {"target_period", c.target_period},
          {"rho", c.rho},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"behavior_cloning", c.behavior_cloning},
          {"bc_weight", c.bc_weight},
          {"bcq_threshold", c.bcq_threshold}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "alpha0") c.alpha0 = v.get<double>();
    else if (key == "beta") c.beta = v.get<double>();
    else if (key == "tau_cql") c.tau_cql = v.get<double>();
    else if (key == "lambda_sc") c.lambda_sc = v.get<double>();
    else if (key == "sc_full_vector") c.sc_full_vector = v.get<bool>();
    else if (key == "eta") c.eta = v.get<double>();
    else if (key == "clip_norm") c.clip_norm = v.get<double>();
    else if (key == "target_period") c.target_period = v.get<int>();
    else if (key == "rho") c.rho = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "total_steps") c.total_steps = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "behavior_cloning") c.behavior_cloning = v.get<bool>();
    else if (key == "bc_weight") c.bc_weight = v.get<double>();
    else if (key == "bcq_threshold") c.bcq_threshold = v.get<double>();
    else throw ConfigError("train: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

Batch make_batch(const WindowSet& data, std::span<const std::size_t> rows) {
  Batch b;
  b.size = static_cast<int>(rows.size());
  b.length = data.length;
  const auto per = static_cast<std::size_t>(data.length) * kStateDim;
  b.states.resize(rows.size() * per);
  b.next_states.resize(rows.size() * per);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= data.size()) throw ContractError("batch row out of range");
    data.gather(r, false, std::span<double>(b.states).subspan(i * per, per));
    data.gather(r, true, std::span<double>(b.next_states).subspan(i * per, per));
    b.actions.push_back(data.actions[r].value);
    b.rewards.push_back(data.rewards[r]);
    b.terminal.push_back(data.terminal[r]);
  }
  return b;
}

double cql_term(std::span<const double> q, ActionIndex a_data, double tau) {
  if (a_data.value < 0 || static_cast<std::size_t>(a_data.value) >= q.size())
    throw ContractError("cql_term: action outside the q-vector");
  const double v = tau * logsumexp(q, tau) - q[static_cast<std::size_t>(a_data.value)];
  // Rounding can leave a tiny negative residue when one action dominates.
  return std::max(v, 0.0);
}

void cql_term_grad(std::span<const double> q, int a_data, double tau, double scale,
                   std::span<double> out) {
  const double lse = logsumexp(q, tau);
  for (std::size_t j = 0; j < q.size(); ++j) out[j] += scale * std::exp(q[j] / tau - lse);
  out[static_cast<std::size_t>(a_data)] -= scale;
}

double adaptive_coeff(double u, double alpha0, double beta) { return alpha0 * std::exp(beta * u); }

double sc_loss(std::span<const double> q_full, std::span<const double> q_short, int batch, int n) {
  if (q_full.size() != q_short.size() || q_full.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(n))
    throw ContractError("sc_loss: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < q_full.size(); ++i) s += (q_full[i] - q_short[i]) * (q_full[i] - q_short[i]);
  return s / batch;
}

double td_loss(std::span<const double> q_sa, std::span<const double> y) {
  if (q_sa.size() != y.size() || q_sa.empty()) throw ContractError("td_loss: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (q_sa[i] - y[i]) * (q_sa[i] - y[i]);
  return s / static_cast<double>(y.size());
}

FrozenTerms compute_frozen_terms(const Network& net, std::span<const double> params,
                                 std::span<const double> target, const Batch& b,
                                 const TrainConfig& cfg) {
  const int A = net.config().num_actions;
  FrozenTerms f;
  f.y.assign(static_cast<std::size_t>(b.size), 0.0);
  f.alpha.assign(static_cast<std::size_t>(b.size), 0.0);

  const auto cur = net.forward_batch(params, b.states, b.size, b.length, {.q_full = false});
  for (int i = 0; i < b.size; ++i)
    f.alpha[static_cast<std::size_t>(i)] = adaptive_coeff(cur.uncertainty[static_cast<std::size_t>(i)], cfg.alpha0, cfg.beta);

  const bool any_open = std::any_of(b.terminal.begin(), b.terminal.end(), [](auto t) { return t == 0; });
  if (!any_open) {
    for (int i = 0; i < b.size; ++i) f.y[static_cast<std::size_t>(i)] = b.rewards[static_cast<std::size_t>(i)];
    return f;
  }
  const auto online = net.forward_batch(params, b.next_states, b.size, b.length,
                                        {.q_full = true, .behavior = cfg.behavior_cloning});
  const auto tgt = net.forward_batch(target, b.next_states, b.size, b.length, {.q_full = false});
  for (int i = 0; i < b.size; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (b.terminal[ui]) {
      f.y[ui] = b.rewards[ui];
      continue;
    }
    const auto q = row(online.q.out, i, A);
    const ActionIndex best = cfg.behavior_cloning
                                 ? bcq_greedy(q, row(online.behavior.out, i, A), cfg.bcq_threshold)
                                 : greedy_index(q);
    f.y[ui] = b.rewards[ui] + cfg.gamma * net.q_value(target, tgt, i, best.value);
  }
  return f;
}

LossBreakdown evaluate_loss(const Network& net, std::span<const double> params, const Batch& b,
                            const FrozenTerms& frozen, const TrainConfig& cfg,
                            std::span<double> grad, LossTerms terms) {
  const int B = b.size;
  const int A = net.config().num_actions;
  const bool want_grad = !grad.empty();
  const bool sc_on = terms.sc && cfg.lambda_sc > 0 && b.length >= 2;
  const bool bc_on = terms.bc && cfg.behavior_cloning;
  const bool full = terms.cql || (sc_on && cfg.sc_full_vector);
  if (frozen.y.size() != static_cast<std::size_t>(B) || frozen.alpha.size() != static_cast<std::size_t>(B))
    throw ContractError("frozen terms do not match the batch");

  const auto F = net.forward_batch(params, b.states, B, b.length, {.q_full = full, .behavior = bc_on});
  const auto BA = static_cast<std::size_t>(B) * static_cast<std::size_t>(A);
  std::vector<double> q_sa(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i)
    q_sa[static_cast<std::size_t>(i)] = full ? F.q.out[static_cast<std::size_t>(i) * static_cast<std::size_t>(A) + static_cast<std::size_t>(b.actions[static_cast<std::size_t>(i)])]
                                             : net.q_value(params, F, i, b.actions[static_cast<std::size_t>(i)]);

  LossBreakdown lb;
  std::vector<double> dense(want_grad && full ? BA : 0, 0.0);
  std::vector<double> sparse(want_grad ? static_cast<std::size_t>(B) : 0, 0.0);

  if (terms.td) {
    lb.td = td_loss(q_sa, frozen.y);
    check(lb.td, "td");
    if (want_grad)
      for (int i = 0; i < B; ++i)
        sparse[static_cast<std::size_t>(i)] += 2.0 * (q_sa[static_cast<std::size_t>(i)] - frozen.y[static_cast<std::size_t>(i)]) / B;
  }

  if (terms.cql) {
    double raw = 0, weighted = 0, coeff = 0;
    std::vector<double> probs(static_cast<std::size_t>(A));
    for (int i = 0; i < B; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto q = row(F.q.out, i, A);
      const double lse = softmax(q, cfg.tau_cql, probs);
      const double l = std::max(cfg.tau_cql * lse - q[static_cast<std::size_t>(b.actions[ui])], 0.0);
      raw += l;
      weighted += frozen.alpha[ui] * l;
      coeff += frozen.alpha[ui];
      if (want_grad && frozen.alpha[ui] != 0.0) {
        const double k = frozen.alpha[ui] / B;
        double* d = dense.data() + ui * static_cast<std::size_t>(A);
        for (int j = 0; j < A; ++j) d[j] += k * probs[static_cast<std::size_t>(j)];
        d[b.actions[ui]] -= k;
      }
    }
    lb.cql_raw = raw / B;
    lb.cql_weighted = weighted / B;
    lb.coeff_mean = coeff / B;
    check(lb.cql_raw, "cql");
  }

  BatchForward S;
  std::vector<double> dense_short, sparse_short;
  if (sc_on) {
    const auto sw = short_windows(b);
    S = net.forward_batch(params, sw, B, b.length - 1, {.q_full = cfg.sc_full_vector});
    if (cfg.sc_full_vector) {
      lb.sc = sc_loss(F.q.out, S.q.out, B, A);
      if (want_grad) {
        dense_short.assign(BA, 0.0);
        const double k = 2.0 * cfg.lambda_sc / B;
        for (std::size_t j = 0; j < BA; ++j) {
          const double d = k * (F.q.out[j] - S.q.out[j]);
          dense[j] += d;
          dense_short[j] = -d;
        }
      }
    } else {
      double s = 0;
      if (want_grad) sparse_short.assign(static_cast<std::size_t>(B), 0.0);
      for (int i = 0; i < B; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double d = q_sa[ui] - net.q_value(params, S, i, b.actions[ui]);
        s += d * d;
        if (want_grad) {
          sparse[ui] += 2.0 * cfg.lambda_sc * d / B;
          sparse_short[ui] = -2.0 * cfg.lambda_sc * d / B;
        }
      }
      lb.sc = s / B;
    }
    check(lb.sc, "sc");
  }

  std::vector<double> dbeh;
  if (bc_on) {
    double ce = 0;
    if (want_grad) dbeh.assign(BA, 0.0);
    std::vector<double> probs(static_cast<std::size_t>(A));
    for (int i = 0; i < B; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto logits = row(F.behavior.out, i, A);
      ce += softmax(logits, 1.0, probs) - logits[static_cast<std::size_t>(b.actions[ui])];
      if (want_grad) {
        const double k = cfg.bc_weight / B;
        double* d = dbeh.data() + ui * static_cast<std::size_t>(A);
        for (int j = 0; j < A; ++j) d[j] = k * probs[static_cast<std::size_t>(j)];
        d[b.actions[ui]] -= k;
      }
    }
    lb.bc = ce / B;
    check(lb.bc, "bc");
  }

  lb.total = lb.td + lb.cql_weighted + cfg.lambda_sc * lb.sc + cfg.bc_weight * lb.bc;
  check(lb.total, "total");

  if (want_grad) {
    const bool any_sparse = terms.td || (sc_on && !cfg.sc_full_vector);
    HeadGradient hq{.dense = dense, .actions = b.actions, .sparse = any_sparse ? std::span<const double>(sparse) : std::span<const double>{}};
    HeadGradient hb{.dense = dbeh};
    net.backward_batch(params, F, hq, hb, grad);
    if (sc_on) {
      HeadGradient hs{.dense = dense_short, .actions = b.actions, .sparse = sparse_short};
      net.backward_batch(params, S, hs, {}, grad);
    }
  }
  return lb;
}

LossBreakdown total_loss(const Network& net, std::span<const double> params,
                         std::span<const double> target, const Batch& batch,
                         const TrainConfig& cfg) {
  const auto frozen = compute_frozen_terms(net, params, target, batch, cfg);
  return evaluate_loss(net, params, batch, frozen, cfg);
}

void write_metrics_header(std::ostream& os) { os << "step,td,cql_raw,coeff_mean,sc,total,grad_norm\n"; }

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<long long>(r.step), r.loss.td, r.loss.cql_raw, r.loss.coeff_mean,
                r.loss.sc, r.loss.total, r.grad_norm);
  os << buf;
}

Checkpoint train(const WindowSet& data, const NetConfig& net_cfg, const TrainConfig& cfg,
                 const std::function<void(const MetricsRow&)>& on_step) {
  cfg.validate();
  if (data.size() == 0) throw DataError("train: empty dataset");
  NetConfig nc = net_cfg;
  if (data.length != net_cfg.seq_len) throw ConfigError("train: window length differs from model seq_len");
  if (cfg.behavior_cloning) nc.behavior_head = true;
  const Network net(nc);

  Checkpoint ck;
  ck.net = nc;
  ck.train_config = to_json(cfg);
  ck.seed = cfg.seed;
  ck.params = net.init_params(cfg.seed);
  ck.target = ck.params;
  const AdamConfig adam{.lr = cfg.eta, .clip_norm = cfg.clip_norm};

  Rng rng(derive_seed(cfg.seed, {0xba7c4ULL}));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::size_t> rows(static_cast<std::size_t>(cfg.batch_size));
  std::vector<double> grad(net.num_params());
  for (int step = 1; step <= cfg.total_steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const Batch batch = make_batch(data, rows);
    const auto frozen = compute_frozen_terms(net, ck.params, ck.target, batch, cfg);
    std::fill(grad.begin(), grad.end(), 0.0);
    MetricsRow m;
    m.step = step;
    m.loss = evaluate_loss(net, ck.params, batch, frozen, cfg, grad);
    require_finite(net, grad, "gradient at step " + std::to_string(step));
    m.grad_norm = adam_step(ck.params, grad, ck.adam, adam);
    if (step % cfg.target_period == 0) polyak_update(ck.target, ck.params, cfg.rho);
    ck.step = step;
    if (on_step) on_step(m);
  }
  require_finite(net, ck.params, "parameters after training");
  return ck;
}

ActionIndex greedy_action(const Network& net, std::span<const double> params,
                          std::span<const double> window, int len) {
  return greedy_index(net.forward(params, window, len).q);
}

}  // namespace ventlab
