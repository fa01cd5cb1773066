#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "ventlab/error.hpp"
#include "ventlab/optim.hpp"
#include "ventlab/tcql.hpp"

using namespace ventlab;

namespace {

/// Parameters whose Q-head ignores the input: the output weights are zeroed
/// and the bias carries the table. The uncertainty head is zeroed as well, so
/// u = 0 and alpha = alpha0.
std::vector<double> constant_q(const Network& net, std::uint64_t seed, std::span<const double> table) {
  auto p = net.init_params(seed);
  const auto& w2 = net.entry("qhead.w2");
  std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(w2.offset), w2.size(), 0.0);
  const auto& b2 = net.entry("qhead.b2");
  std::copy(table.begin(), table.end(), p.begin() + static_cast<std::ptrdiff_t>(b2.offset));
  const auto& uw = net.entry("uncertainty.w");
  std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(uw.offset), uw.size(), 0.0);
  return p;
}

Batch one_row_batch(int L, int action, double reward, bool terminal) {
  const auto w = fixtures::single_transition(L, action, reward, terminal, 99);
  const std::vector<std::size_t> rows{0};
  return make_batch(w, rows);
}

double lse(std::span<const double> q, double tau) {
  const double m = *std::max_element(q.begin(), q.end());
  double s = 0;
  for (double v : q) s += std::exp((v - m) / tau);
  return m / tau + std::log(s);
}

/// Fixed-coefficient CQL objective written directly from network outputs.
double fixed_cql_oracle(const Network& net, std::span<const double> p, std::span<const double> tgt,
                        const Batch& b, const TrainConfig& cfg) {
  const int A = net.config().num_actions;
  const auto cur = net.forward_batch(p, b.states, b.size, b.length);
  const auto nxt = net.forward_batch(p, b.next_states, b.size, b.length);
  const auto nxt_t = net.forward_batch(tgt, b.next_states, b.size, b.length);
  double td = 0, pen = 0;
  for (int i = 0; i < b.size; ++i) {
    const auto off = static_cast<std::size_t>(i) * static_cast<std::size_t>(A);
    const std::span<const double> q(cur.q.out.data() + off, static_cast<std::size_t>(A));
    const std::span<const double> qn(nxt.q.out.data() + off, static_cast<std::size_t>(A));
    int best = 0;
    for (int j = 1; j < A; ++j)
      if (qn[static_cast<std::size_t>(j)] > qn[static_cast<std::size_t>(best)]) best = j;
    const double boot = nxt_t.q.out[off + static_cast<std::size_t>(best)];
    const double y = b.rewards[static_cast<std::size_t>(i)] +
                     (b.terminal[static_cast<std::size_t>(i)] ? 0.0 : cfg.gamma * boot);
    const double qa = q[static_cast<std::size_t>(b.actions[static_cast<std::size_t>(i)])];
    td += (qa - y) * (qa - y);
    pen += cfg.tau_cql * lse(q, cfg.tau_cql) - qa;
  }
  return (td + cfg.alpha0 * pen) / b.size;
}

double regret_gap(const Network& net, std::span<const double> p, const Batch& b) {
  const int A = net.config().num_actions;
  const auto f = net.forward_batch(p, b.states, b.size, b.length);
  double gap = 0;
  for (int i = 0; i < b.size; ++i) {
    const auto off = static_cast<std::size_t>(i) * static_cast<std::size_t>(A);
    double mean = 0;
    for (int j = 0; j < A; ++j) mean += f.q.out[off + static_cast<std::size_t>(j)];
    mean /= A;
    gap += f.q.out[off + static_cast<std::size_t>(b.actions[static_cast<std::size_t>(i)])] - mean;
  }
  return gap / b.size;
}

}  // namespace

TEST_SUITE("tcql") {

TEST_CASE("td loss examples") {
  CHECK(td_loss(std::vector<double>{0.3}, std::vector<double>{1.0}) == doctest::Approx(0.49).epsilon(1e-14));
  CHECK(td_loss(std::vector<double>{0.7, -2}, std::vector<double>{0.7, -2}) == 0.0);
  CHECK_THROWS_AS(td_loss(std::vector<double>{1}, std::vector<double>{}), ContractError);
}

TEST_CASE("double-Q target on hand-set tables") {
  const Network net(fixtures::tiny_net(2));
  const std::vector<double> online_table{1.0, 0.0};
  const std::vector<double> target_table{0.5, 0.2};
  const auto p = constant_q(net, 1, online_table);
  const auto tgt = constant_q(net, 2, target_table);
  TrainConfig cfg;
  cfg.gamma = 0.9;
  const Batch open = one_row_batch(3, 1, 0.0, false);
  CHECK(compute_frozen_terms(net, p, tgt, open, cfg).y[0] == doctest::Approx(0.45).epsilon(1e-12));

  // Online argmax picks action 1 when the online table prefers it.
  const std::vector<double> flipped{0.0, 1.0};
  const auto p2 = constant_q(net, 1, flipped);
  CHECK(compute_frozen_terms(net, p2, tgt, open, cfg).y[0] == doctest::Approx(0.18).epsilon(1e-12));

  const Batch term = one_row_batch(3, 0, 1.0, true);
  CHECK(compute_frozen_terms(net, p, tgt, term, cfg).y[0] == 1.0);

  // Pure double-DQN path: alpha0 = 0, lambda = 0, L = 1.
  auto c1 = fixtures::tiny_net(2);
  c1.seq_len = 1;
  const Network n1(c1);
  const auto q1 = constant_q(n1, 3, online_table);
  const auto t1 = constant_q(n1, 4, target_table);
  cfg.alpha0 = 0;
  cfg.lambda_sc = 0;
  const Batch b1 = one_row_batch(1, 1, 0.25, false);
  const auto lb = total_loss(n1, q1, t1, b1, cfg);
  const double y = 0.25 + 0.9 * 0.5;
  CHECK(std::abs(lb.td - (0.0 - y) * (0.0 - y)) <= 1e-12);
  CHECK(lb.total == lb.td);
}

TEST_CASE("conservative term examples") {
  CHECK(cql_term(std::vector<double>{0, 0}, {0}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(cql_term(std::vector<double>{0, 0}, {1}, 1.0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(cql_term(std::vector<double>{1, 0}, {1}, 1.0) == doctest::Approx(std::log(std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(cql_term(std::vector<double>{1, 0}, {1}, 1.0) == doctest::Approx(1.3133).epsilon(1e-4));
  CHECK(cql_term(std::vector<double>{1, 0.5, -2}, {0}, 1e-3) < 1e-3);
  CHECK_THROWS_AS(cql_term(std::vector<double>{1, 0}, {2}, 1.0), ContractError);
}

TEST_CASE("conservative term is non-negative on random vectors") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> t(0.01, 5.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> q(1 + trial % 40);
    for (auto& v : q) v = n(rng);
    const int a = static_cast<int>(rng() % q.size());
    CHECK(cql_term(q, {a}, t(rng)) >= 0.0);
  }
}

TEST_CASE("adaptive coefficient anchors") {
  CHECK(adaptive_coeff(0.0, 0.7, 1.3) == 0.7);
  CHECK(adaptive_coeff(std::log(2.0), 1.0, 1.0) == doctest::Approx(2.0).epsilon(1e-15));
  for (double u : {0.0, 0.3, 5.0}) CHECK(adaptive_coeff(u, 0.4, 0.0) == 0.4);
  double prev = -1;
  for (int i = 0; i < 100; ++i) {
    const double a = adaptive_coeff(0.05 * i, 1.0, 1.0);
    CHECK(a > prev);
    prev = a;
  }
}

TEST_CASE("sequence consistency examples") {
  const std::vector<double> a{1, 0};
  const std::vector<double> z{0, 0};
  CHECK(sc_loss(a, a, 1, 2) == 0.0);
  CHECK(sc_loss(a, z, 1, 2) == 1.0);
  const std::vector<double> f{0.3, -1.2, 2.0, 0.1};
  const std::vector<double> s{1.1, 0.4, -0.5, 0.0};
  std::vector<double> f3(f), s3(s);
  for (auto& v : f3) v *= 3;
  for (auto& v : s3) v *= 3;
  CHECK(sc_loss(f3, s3, 2, 2) == doctest::Approx(9 * sc_loss(f, s, 2, 2)).epsilon(1e-14));
  CHECK_THROWS_AS(sc_loss(a, f, 1, 2), ContractError);
}

TEST_CASE("Polyak averaging") {
  std::vector<double> tgt{0.0};
  const std::vector<double> th{2.0};
  polyak_update(tgt, th, 0.5);
  CHECK(tgt[0] == 1.0);
  polyak_update(tgt, th, 1.0);
  CHECK(tgt[0] == 2.0);
  std::vector<double> t2{5.0};
  const double rho = 0.1;
  for (int n = 1; n <= 50; ++n) {
    polyak_update(t2, th, rho);
    CHECK(std::abs(t2[0] - 2.0) == doctest::Approx(std::pow(1 - rho, n) * 3.0).epsilon(1e-10));
  }
  CHECK_THROWS_AS(polyak_update(tgt, th, 0.0), ContractError);
  CHECK_THROWS_AS(polyak_update(tgt, std::vector<double>{1, 2}, 0.5), ContractError);
}

TEST_CASE("hand-evaluated objective on one transition") {
  const Network net(fixtures::tiny_net(2));
  const std::vector<double> table{0.5, 0.2};
  const auto p = constant_q(net, 7, table);
  TrainConfig cfg;
  cfg.gamma = 0.9;
  cfg.alpha0 = 1.0;
  cfg.tau_cql = 1.0;
  cfg.lambda_sc = 0.1;
  const Batch b = one_row_batch(3, 1, 0.1, false);
  const auto lb = total_loss(net, p, p, b, cfg);
  // y = 0.1 + 0.9 * 0.5 = 0.55; td = (0.2 - 0.55)^2; cql = log(e^0.5 + e^0.2) - 0.2; sc = 0.
  const double td = 0.35 * 0.35;
  const double cql = std::log(std::exp(0.5) + std::exp(0.2)) - 0.2;
  CHECK(std::abs(lb.td - td) <= 1e-10);
  CHECK(std::abs(lb.cql_raw - cql) <= 1e-10);
  CHECK(lb.coeff_mean == 1.0);
  CHECK(std::abs(lb.sc) <= 1e-20);
  CHECK(std::abs(lb.total - (td + cql)) <= 1e-10);
}

TEST_CASE("fixed coefficient CQL matches an independent implementation") {
  const auto data = fixtures::small_windows(3);
  const Network net(fixtures::tiny_net());
  TrainConfig cfg;
  cfg.beta = 0;
  cfg.lambda_sc = 0;
  cfg.alpha0 = 0.8;
  cfg.tau_cql = 0.5;
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    const auto p = net.init_params(30 + draw);
    auto tgt = net.init_params(40 + draw);
    const std::vector<std::size_t> rows{draw, 3 + draw, 11, 20, 23};
    const Batch b = make_batch(data, rows);
    const auto lb = total_loss(net, p, tgt, b, cfg);
    CHECK(std::abs(lb.total - fixed_cql_oracle(net, p, tgt, b, cfg)) <= 1e-10);
  }
}

TEST_CASE("breakdown composes the total") {
  const auto data = fixtures::small_windows(3);
  const Network net(fixtures::tiny_net());
  const auto p = net.init_params(8);
  const std::vector<std::size_t> rows{1, 2, 3, 4};
  const Batch b = make_batch(data, rows);
  TrainConfig cfg;
  cfg.lambda_sc = 0.25;
  const auto lb = total_loss(net, p, p, b, cfg);
  CHECK(lb.total == doctest::Approx(lb.td + lb.cql_weighted + 0.25 * lb.sc).epsilon(1e-15));
  CHECK(lb.cql_raw >= 0);
  CHECK(lb.coeff_mean >= cfg.alpha0);
  CHECK(lb.sc > 0);

  cfg.alpha0 = 0;
  cfg.lambda_sc = 0;
  const auto pure = total_loss(net, p, p, b, cfg);
  CHECK(pure.total == pure.td);
  CHECK(pure.cql_weighted == 0);
}

TEST_CASE("penalty step does not reduce the dataset-action margin") {
  const auto data = fixtures::small_windows(3);
  const Network net(fixtures::tiny_net());
  TrainConfig cfg;
  const LossTerms only_penalty{false, true, false, false};
  for (double lr : {1e-3, 1e-4}) {
    for (std::uint64_t draw = 0; draw < 3; ++draw) {
      auto p = net.init_params(50 + draw);
      const std::vector<std::size_t> rows{draw, 4, 8, 12, 16, 19};
      const Batch b = make_batch(data, rows);
      const auto frozen = compute_frozen_terms(net, p, p, b, cfg);
      std::vector<double> g(p.size(), 0.0);
      evaluate_loss(net, p, b, frozen, cfg, g, only_penalty);
      const double before = regret_gap(net, p, b);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      CHECK(regret_gap(net, p, b) >= before);
    }
  }
}

TEST_CASE("training overfits a single transition") {
  const auto data = fixtures::single_transition(3, 17, 1.0, true, 3);
  TrainConfig cfg;
  cfg.alpha0 = 0;
  cfg.lambda_sc = 0;
  cfg.batch_size = 1;
  cfg.total_steps = 400;
  cfg.eta = 3e-3;
  double last_td = 1;
  train(data, fixtures::tiny_net(64), cfg, [&](const MetricsRow& m) { last_td = m.loss.td; });
  CHECK(last_td < 1e-3);
}

TEST_CASE("training is deterministic and the penalty stays non-negative") {
  const auto data = fixtures::small_windows(3);
  TrainConfig cfg;
  cfg.total_steps = 15;
  cfg.batch_size = 4;
  cfg.seed = 9;
  int steps = 0;
  const auto a = train(data, fixtures::tiny_net(), cfg, [&](const MetricsRow& m) {
    CHECK(m.loss.cql_raw >= 0);
    CHECK(std::isfinite(m.loss.total));
    ++steps;
  });
  const auto b = train(data, fixtures::tiny_net(), cfg);
  CHECK(steps == 15);
  CHECK(a.params == b.params);
  CHECK(a.target == b.target);
  CHECK(a.adam.m == b.adam.m);
  cfg.seed = 10;
  CHECK(train(data, fixtures::tiny_net(), cfg).params != a.params);
}

TEST_CASE("greedy action follows the Q-vector") {
  const Network net(fixtures::tiny_net(12));
  std::vector<double> table(12, 0.0);
  table[7] = 1;
  const auto p = constant_q(net, 1, table);
  const auto w = fixtures::random_windows(1, 3, 1);
  CHECK(greedy_action(net, p, w, 3).value == 7);
  table[7] = 0;
  table[3] = table[9] = 2;
  CHECK(greedy_action(net, constant_q(net, 1, table), w, 3).value == 3);
}

TEST_CASE("training configuration is validated") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  for (auto mutate : std::initializer_list<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.gamma = 1.0; },
           [](TrainConfig& c) { c.tau_cql = 0; },
           [](TrainConfig& c) { c.rho = 0; },
           [](TrainConfig& c) { c.batch_size = 0; },
           [](TrainConfig& c) { c.alpha0 = -1; },
           [](TrainConfig& c) { c.eta = 0; }}) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  CHECK_THROWS_AS(train_config_from_json({{"unknown", 1}}), ConfigError);
  const auto back = train_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
}

TEST_CASE("metrics rows are CSV with full precision") {
  std::ostringstream os;
  write_metrics_header(os);
  MetricsRow r;
  r.step = 3;
  r.loss.td = 0.1;
  r.loss.total = 1.0 / 3.0;
  write_metrics_row(os, r);
  const std::string s = os.str();
  CHECK(s.rfind("step,td,cql_raw,coeff_mean,sc,total,grad_norm\n", 0) == 0);
  CHECK(s.find("3,0.10000000000000001,0,0,0,0.33333333333333331,0\n") != std::string::npos);
}

}  // TEST_SUITE
