#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "ventlab/action.hpp"
#include "ventlab/checkpoint.hpp"
#include "ventlab/dataset.hpp"
#include "ventlab/network.hpp"

namespace ventlab {

struct TrainConfig {
  double gamma = 0.99;
  double alpha0 = 1.0;
  double beta = 1.0;
  double tau_cql = 1.0;
  double lambda_sc = 0.1;
  bool sc_full_vector = true;  // false: consistency on the logged action only
  double eta = 3e-4;
  double clip_norm = 10.0;
  int target_period = 1;  // K
  double rho = 0.005;
  int batch_size = 32;
  int total_steps = 2000;
  std::uint64_t seed = 0;
  // Imitation head (discrete BCQ); disabled for the other methods.
  bool behavior_cloning = false;
  double bc_weight = 1.0;
  double bcq_threshold = 0.3;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Overlays the keys of j onto `base`; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct LossBreakdown {
  double td = 0;
  double cql_raw = 0;
  double coeff_mean = 0;
  double cql_weighted = 0;
  double sc = 0;
  double bc = 0;
  double total = 0;
};

/// Minibatch of windows in network layout (size x length x state_dim).
struct Batch {
  int size = 0;
  int length = 0;
  std::vector<double> states;
  std::vector<double> next_states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
};

Batch make_batch(const WindowSet& data, std::span<const std::size_t> rows);

/// Per-sample quantities that enter the loss as constants: the Bellman target
/// y and the adaptive penalty coefficient.
struct FrozenTerms {
  std::vector<double> y;
  std::vector<double> alpha;
};

/// Which loss terms to include (for checking components in isolation).
struct LossTerms {
  bool td = true;
  bool cql = true;
  bool sc = true;
  bool bc = true;
};

// Scalar pieces of the objective.
double cql_term(std::span<const double> q, ActionIndex a_data, double tau);
/// Gradient of cql_term w.r.t. q, scaled by `scale` and added to out.
void cql_term_grad(std::span<const double> q, int a_data, double tau, double scale,
                   std::span<double> out);
double adaptive_coeff(double u, double alpha0, double beta);
/// Squared L2 distance averaged over `batch` rows of width n.
double sc_loss(std::span<const double> q_full, std::span<const double> q_short, int batch, int n);
/// Mean squared error between q(s, a) and y.
double td_loss(std::span<const double> q_sa, std::span<const double> y);

/// Double-Q Bellman targets: y = r + gamma * Qtarget(S', argmax_a' Q(S', a')),
/// y = r on terminal rows. With behavior cloning the argmax runs over the
/// imitation-admissible set. Also evaluates alpha = alpha0 * exp(beta * u(S)).
FrozenTerms compute_frozen_terms(const Network& net, std::span<const double> params,
                                 std::span<const double> target, const Batch& batch,
                                 const TrainConfig& cfg);

/// Evaluates the objective with frozen targets and coefficients; when grad is
/// non-empty accumulates the gradient into it. Non-finite components throw
/// NumericError naming the component.
LossBreakdown evaluate_loss(const Network& net, std::span<const double> params, const Batch& batch,
                            const FrozenTerms& frozen, const TrainConfig& cfg,
                            std::span<double> grad = {}, LossTerms terms = {});

/// Convenience: frozen terms from (params, target) then evaluate_loss.
LossBreakdown total_loss(const Network& net, std::span<const double> params,
                         std::span<const double> target, const Batch& batch,
                         const TrainConfig& cfg);

struct MetricsRow {
  std::int64_t step = 0;
  LossBreakdown loss;
  double grad_norm = 0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

/// Minibatch training loop. The callback (optional) sees every step's metrics.
/// Aborts with NumericError if the loss becomes non-finite.
Checkpoint train(const WindowSet& data, const NetConfig& net_cfg, const TrainConfig& cfg,
                 const std::function<void(const MetricsRow&)>& on_step = {});

/// Argmax of the Q-vector with ties going to the lowest index.
ActionIndex greedy_action(const Network& net, std::span<const double> params,
                          std::span<const double> window, int len);

}  // namespace ventlab
