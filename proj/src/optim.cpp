#include "ventlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ventlab/error.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {

double l2_norm(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  const double n = l2_norm(grad);
  if (max_norm > 0 && n > max_norm) {
    const double s = max_norm / n;
    for (double& g : grad) g *= s;
  }
  return n;
}

double adam_step(std::span<double> params, std::span<double> grad, AdamState& st,
                 const AdamConfig& cfg) {
  if (grad.size() != params.size()) throw ContractError("gradient and parameter sizes differ");
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
    st.t = 0;
  }
  const double norm = clip_grad_norm(grad, cfg.clip_norm);
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    params[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
  return norm;
}

void polyak_update(std::span<double> target, std::span<const double> params, double rho) {
  if (target.size() != params.size()) throw ContractError("polyak: shape mismatch");
  if (!(rho > 0.0 && rho <= 1.0)) throw ContractError("polyak: rho must lie in (0, 1]");
  if (rho == 1.0) {
    std::copy(params.begin(), params.end(), target.begin());
    return;
  }
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rho * params[i] + (1.0 - rho) * target[i];
}

void require_finite(const Network& net, std::span<const double> values, const std::string& what) {
  for (const auto& e : net.entries()) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!std::isfinite(values[e.offset + i]))
        throw NumericError(what + ": non-finite value in '" + e.name + "'");
    }
  }
}

GradCheckResult grad_check(const Network& net, std::span<const double> params,
                           std::span<const double> analytic,
                           const std::function<double(std::span<const double>)>& loss,
                           const GradCheckOptions& opt) {
  const std::size_t n = params.size();
  if (analytic.size() != n) throw ContractError("grad_check: gradient size mismatch");
  const auto want = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(opt.fraction * static_cast<double>(n))),
      std::min<std::size_t>(n, static_cast<std::size_t>(opt.min_coords)), n);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(opt.seed, {0x96adULL}));
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(want);
  std::sort(idx.begin(), idx.end());

  std::vector<double> p(params.begin(), params.end());
  GradCheckResult res;
  for (std::size_t j : idx) {
    const double orig = p[j];
    p[j] = orig + opt.step;
    const double up = loss(p);
    p[j] = orig - opt.step;
    const double down = loss(p);
    p[j] = orig;
    const double num = (up - down) / (2.0 * opt.step);
    const double a = analytic[j];
    const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), opt.floor});
    ++res.checked;
    if (rel > res.max_rel_error || res.checked == 1) {
      res.max_rel_error = rel;
      res.worst_index = j;
    }
  }
  for (const auto& e : net.entries())
    if (res.worst_index >= e.offset && res.worst_index < e.offset + e.size()) res.worst_param = e.name;
  return res;
}

}  // namespace ventlab
