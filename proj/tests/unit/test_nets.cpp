#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "ventlab/error.hpp"
#include "ventlab/network.hpp"
#include "ventlab/optim.hpp"
#include "ventlab/tcql.hpp"

using namespace ventlab;

namespace {

double population_variance(std::vector<double> v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

std::vector<double> repeat_state(int len, std::uint64_t seed) {
  const auto one = fixtures::random_windows(1, 1, seed);
  std::vector<double> out;
  for (int i = 0; i < len; ++i) out.insert(out.end(), one.begin(), one.end());
  return out;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("default shapes") {
  const Network net(NetConfig{});
  const auto p = net.init_params(1);
  CHECK(p.size() == net.num_params());
  const auto w = fixtures::random_windows(1, 4, 2);
  const auto out = net.forward(p, w, 4);
  CHECK(out.q.size() == 13440);
  CHECK(out.hidden_states.size() == 4 * 64);
  CHECK(out.last.size() == 64);
  CHECK(out.mean.size() == 64);
  CHECK(out.psi.size() == 4);
  for (double v : out.q) CHECK(std::isfinite(v));
  CHECK(net.entry("qhead.w2").rows == 256);
  CHECK(net.entry("qhead.w2").cols == 13440);
  CHECK(net.entry("uncertainty.w").rows == 64);
  CHECK(std::any_of(p.begin() + static_cast<std::ptrdiff_t>(net.entry("uncertainty.w").offset),
                    p.begin() + static_cast<std::ptrdiff_t>(net.entry("uncertainty.w").offset + 64),
                    [](double v) { return v != 0.0; }));
  CHECK_THROWS_AS(net.entry("nope"), ContractError);
  NetConfig bad;
  bad.heads = 3;
  CHECK_THROWS_AS(Network{bad}, ConfigError);
}

TEST_CASE("summary features follow their definitions") {
  const Network net(fixtures::tiny_net(50));
  const auto p = net.init_params(3);
  const auto w = fixtures::random_windows(1, 3, 4);
  const auto o = net.forward(p, w, 3);
  const int h = 8;
  for (int c = 0; c < h; ++c) {
    CHECK(o.last[static_cast<std::size_t>(c)] == o.hidden_states[static_cast<std::size_t>(2 * h + c)]);
    const double m = (o.hidden_states[static_cast<std::size_t>(c)] +
                      o.hidden_states[static_cast<std::size_t>(h + c)] +
                      o.hidden_states[static_cast<std::size_t>(2 * h + c)]) / 3.0;
    CHECK(o.mean[static_cast<std::size_t>(c)] == doctest::Approx(m).epsilon(1e-14));
  }
  CHECK(o.uncertainty >= 0);
  CHECK(o.uncertainty == doctest::Approx(population_variance(o.psi)).epsilon(1e-12));
}

TEST_CASE("identical states without positional encoding give zero uncertainty") {
  auto cfg = fixtures::tiny_net(20);
  cfg.positional_encoding = false;
  const Network net(cfg);
  const auto p = net.init_params(5);
  const auto o = net.forward(p, repeat_state(3, 6), 3);
  for (int r = 1; r < 3; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(o.hidden_states[static_cast<std::size_t>(r * 8 + c)] ==
            doctest::Approx(o.hidden_states[static_cast<std::size_t>(c)]).epsilon(1e-12));
  CHECK(o.uncertainty == doctest::Approx(0.0).epsilon(1e-20));

  // With positional encodings the rows differ and the variance is positive.
  cfg.positional_encoding = true;
  const Network pe(cfg);
  CHECK(pe.forward(p, repeat_state(3, 6), 3).uncertainty > 0);
}

TEST_CASE("uncertainty does not depend on the order of the rows") {
  const Network net(fixtures::tiny_net(20));
  const auto p = net.init_params(7);
  const auto o = net.forward(p, fixtures::random_windows(1, 3, 8), 3);
  auto psi = o.psi;
  std::reverse(psi.begin(), psi.end());
  CHECK(population_variance(psi) == doctest::Approx(o.uncertainty).epsilon(1e-12));
  std::rotate(psi.begin(), psi.begin() + 1, psi.end());
  CHECK(population_variance(psi) == doctest::Approx(o.uncertainty).epsilon(1e-12));
}

TEST_CASE("short path runs the truncated window") {
  const Network net(fixtures::tiny_net(30));
  const auto p = net.init_params(9);
  const auto w = fixtures::random_windows(1, 3, 10);
  const auto s = net.forward_short(p, w, 3);
  const auto t = net.forward(p, std::span<const double>(w).first(2 * kStateDim), 2);
  CHECK(s.length == 2);
  CHECK(s.last == t.last);
  CHECK(s.q == t.q);
  const auto full = net.forward(p, w, 3);
  CHECK(full.q != s.q);

  const auto w2 = fixtures::random_windows(1, 2, 11);
  const auto s2 = net.forward_short(p, w2, 2);
  CHECK(s2.q == net.forward(p, std::span<const double>(w2).first(kStateDim), 1).q);
  CHECK_THROWS_AS(net.forward_short(p, std::span<const double>(w2).first(kStateDim), 1), ContractError);
  CHECK_THROWS_AS(net.forward(p, w2, 3), ContractError);
}

TEST_CASE("layer norm rows are standardized before the affine map") {
  const Network net(fixtures::tiny_net(10));
  const auto p = net.init_params(12);
  EncoderCache cache;
  net.encode(p, fixtures::random_windows(4, 3, 13), 4, 3, cache);
  for (const auto& layer : cache.layers) {
    for (const auto* xhat : {&layer.xhat1, &layer.xhat2}) {
      for (int r = 0; r < 12; ++r) {
        double m = 0, v = 0;
        for (int c = 0; c < 8; ++c) m += (*xhat)[static_cast<std::size_t>(r * 8 + c)];
        m /= 8;
        for (int c = 0; c < 8; ++c) {
          const double d = (*xhat)[static_cast<std::size_t>(r * 8 + c)] - m;
          v += d * d;
        }
        v /= 8;
        CHECK(std::abs(m) < 1e-5);
        CHECK(std::abs(v - 1) < 1e-5);
      }
    }
  }
}

TEST_CASE("forward is deterministic and batch agrees with single") {
  const Network net(fixtures::tiny_net(40));
  const auto p = net.init_params(14);
  const auto w = fixtures::random_windows(3, 3, 15);
  const auto a = net.forward(p, std::span<const double>(w).first(3 * kStateDim), 3);
  const auto b = net.forward(p, std::span<const double>(w).first(3 * kStateDim), 3);
  CHECK(a.q == b.q);
  CHECK(a.uncertainty == b.uncertainty);
  const auto f = net.forward_batch(p, w, 3, 3);
  for (int j = 0; j < 40; ++j) {
    CHECK(f.q.out[static_cast<std::size_t>(j)] == doctest::Approx(a.q[static_cast<std::size_t>(j)]).epsilon(1e-12));
    CHECK(net.q_value(p, f, 0, j) == doctest::Approx(a.q[static_cast<std::size_t>(j)]).epsilon(1e-12));
  }
  CHECK(f.uncertainty[0] == doctest::Approx(a.uncertainty).epsilon(1e-12));
  CHECK(net.init_params(14) == p);
  CHECK(net.init_params(15) != p);
}

TEST_CASE("greedy index breaks ties toward the lowest index") {
  std::vector<double> q(13, 0.0);
  q[7] = 1.0;
  CHECK(greedy_index(q).value == 7);
  std::fill(q.begin(), q.end(), 0.0);
  q[3] = 2.0;
  q[9] = 2.0;
  CHECK(greedy_index(q).value == 3);
  for (auto& v : q) v *= 5.0;
  CHECK(greedy_index(q).value == 3);
}

TEST_CASE("gradient of a constant loss is exactly zero") {
  const Network net(fixtures::tiny_net(25));
  const auto p = net.init_params(16);
  const auto f = net.forward_batch(p, fixtures::random_windows(2, 3, 17), 2, 3);
  std::vector<double> grad(net.num_params(), 0.0);
  net.backward_batch(p, f, {}, {}, grad);
  CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("quadratic probe gradient matches finite differences") {
  const Network net(fixtures::tiny_net(25));
  const auto p = net.init_params(18);
  const auto& e = net.entry("qhead.w1");
  std::vector<double> analytic(p.size(), 0.0);
  for (std::size_t i = 0; i < e.size(); ++i) analytic[e.offset + i] = p[e.offset + i];
  const auto loss = [&](std::span<const double> x) {
    double s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += 0.5 * x[e.offset + i] * x[e.offset + i];
    return s;
  };
  const auto r = grad_check(net, p, analytic, loss, {.fraction = 0.2});
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("analytic gradients of every loss component match finite differences") {
  const auto data = fixtures::small_windows(3);
  const Network net(fixtures::tiny_net());
  const auto p = net.init_params(19);
  auto target = p;
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += 1e-3 * std::sin(static_cast<double>(i));
  const std::vector<std::size_t> rows{0, 5, 9, 17};
  const Batch batch = make_batch(data, rows);
  TrainConfig cfg;
  cfg.lambda_sc = 0.3;
  const auto frozen = compute_frozen_terms(net, p, target, batch, cfg);

  const LossTerms cases[] = {{true, false, false, false},
                             {false, true, false, false},
                             {false, false, true, false},
                             {true, true, true, true}};
  for (const auto& terms : cases) {
    std::vector<double> grad(p.size(), 0.0);
    evaluate_loss(net, p, batch, frozen, cfg, grad, terms);
    const auto loss = [&](std::span<const double> x) {
      return evaluate_loss(net, x, batch, frozen, cfg, {}, terms).total;
    };
    const auto r = grad_check(net, p, grad, loss, {.fraction = 0.01, .seed = 3});
    INFO("terms td/cql/sc = " << terms.td << terms.cql << terms.sc << " worst " << r.worst_param);
    CHECK(r.max_rel_error < 1e-4);
  }
}

}  // TEST_SUITE
