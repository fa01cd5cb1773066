#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ventlab/network.hpp"

namespace ventlab {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

double l2_norm(std::span<const double> x);

/// Scales grad in place so its norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

/// One Adam step with global-norm clipping. Returns the pre-clip gradient norm.
double adam_step(std::span<double> params, std::span<double> grad, AdamState& state,
                 const AdamConfig& cfg);

/// target <- rho * params + (1 - rho) * target. Throws ContractError on size mismatch or rho outside (0, 1].
void polyak_update(std::span<double> target, std::span<const double> params, double rho);

/// Throws NumericError naming the first parameter array holding a NaN or Inf.
void require_finite(const Network& net, std::span<const double> values, const std::string& what);

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  int checked = 0;
};

struct GradCheckOptions {
  double fraction = 0.01;  // random coordinate subsample
  int min_coords = 50;
  double step = 1e-5;
  double floor = 1e-5;  // denominator floor for the relative error
  std::uint64_t seed = 0;
};

/// Compares an analytic gradient with central differences of `loss` on a random
/// subsample of coordinates. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const Network& net, std::span<const double> params,
                           std::span<const double> analytic,
                           const std::function<double(std::span<const double>)>& loss,
                           const GradCheckOptions& opt = {});

}  // namespace ventlab
