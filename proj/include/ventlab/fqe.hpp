#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ventlab/action.hpp"
#include "ventlab/checkpoint.hpp"
#include "ventlab/dataset.hpp"
#include "ventlab/network.hpp"

namespace ventlab {

/// Action choice of a frozen policy on dataset windows. This is all the
/// evaluator sees of the policy.
class ActionSelector {
 public:
  virtual ~ActionSelector() = default;
  virtual std::string id() const = 0;
  /// Action at the current (next == false) or next history of each listed window.
  virtual std::vector<ActionIndex> select(const WindowSet& data, std::span<const std::size_t> rows,
                                          bool next) const = 0;
};

/// Greedy action of a trained network; BCQ checkpoints use the filtered argmax.
class GreedySelector final : public ActionSelector {
 public:
  explicit GreedySelector(const Checkpoint& ck, double bcq_threshold = 0.3);
  std::string id() const override { return id_; }
  std::vector<ActionIndex> select(const WindowSet& data, std::span<const std::size_t> rows,
                                  bool next) const override;
  /// Greedy actions for raw network input (batch x len x state_dim).
  std::vector<ActionIndex> select_windows(std::span<const double> windows, int batch) const;
  /// Q of the greedy action for each window.
  std::vector<double> greedy_values(std::span<const double> windows, int batch) const;

 private:
  Network net_;
  std::vector<double> params_;
  bool bcq_ = false;
  double threshold_ = 0.3;
  std::string id_;
};

/// The behavior policy itself: the logged action of the window, and for the
/// next history the logged action of the following step.
class LoggedSelector final : public ActionSelector {
 public:
  std::string id() const override { return "clinician"; }
  std::vector<ActionIndex> select(const WindowSet& data, std::span<const std::size_t> rows,
                                  bool next) const override;
};

/// Function class fitted by FQE.
class EvaluationQ {
 public:
  virtual ~EvaluationQ() = default;
  virtual void reset(std::uint64_t seed) = 0;
  /// Copies the current estimate into the frozen target.
  virtual void refresh_target() = 0;
  /// Frozen-target value at the next history of each window.
  virtual std::vector<double> target_values(const WindowSet& data, std::span<const ActionIndex> next_actions) = 0;
  /// Regresses Q(s_i, a_i) onto y_i over the whole set; returns the final mean squared error.
  virtual double regress(const WindowSet& data, std::span<const double> y) = 0;
  /// Current estimate Q(s, a) for listed windows.
  virtual std::vector<double> values(const WindowSet& data, std::span<const std::size_t> rows,
                                     std::span<const ActionIndex> actions) = 0;
};

/// Lookup table over (window content, action) cells; regression sets each
/// cell to the mean target of its samples. Unseen cells read 0.
class TabularQ final : public EvaluationQ {
 public:
  void reset(std::uint64_t) override;
  void refresh_target() override { target_ = table_; }
  std::vector<double> target_values(const WindowSet& data, std::span<const ActionIndex> next_actions) override;
  double regress(const WindowSet& data, std::span<const double> y) override;
  std::vector<double> values(const WindowSet& data, std::span<const std::size_t> rows,
                             std::span<const ActionIndex> actions) override;

 private:
  using Key = std::pair<std::vector<double>, int>;
  static Key key(const WindowSet& data, std::size_t i, bool next, int action);
  std::map<Key, double> table_;
  std::map<Key, double> target_;
};

struct FqeConfig {
  double gamma = 0.99;
  int refreshes = 20;
  int epochs = 5;       // regression epochs per refresh
  double tol = 1e-4;    // early stop on max target shift
  int batch_size = 64;
  double eta = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Network evaluation model of the policy architecture family with its own seed.
class NetworkQ final : public EvaluationQ {
 public:
  NetworkQ(NetConfig cfg, const FqeConfig& fqe);
  void reset(std::uint64_t seed) override;
  void refresh_target() override { target_ = params_; }
  std::vector<double> target_values(const WindowSet& data, std::span<const ActionIndex> next_actions) override;
  double regress(const WindowSet& data, std::span<const double> y) override;
  std::vector<double> values(const WindowSet& data, std::span<const std::size_t> rows,
                             std::span<const ActionIndex> actions) override;
  const std::vector<double>& params() const { return params_; }

 private:
  std::vector<double> batch_values(const WindowSet& data, std::span<const std::size_t> rows, bool next,
                                   std::span<const ActionIndex> actions, std::span<const double> p) const;
  Network net_;
  FqeConfig cfg_;
  std::vector<double> params_;
  std::vector<double> target_;
  AdamState adam_;
  std::uint64_t seed_ = 0;
  std::int64_t epoch_counter_ = 0;
};

struct FqeTracePoint {
  int iteration = 0;
  double target_shift = 0;  // max |y_k - y_{k-1}|, infinity on the first pass
  double regression_mse = 0;
};

struct FqeResult {
  std::string policy_id;
  int iterations = 0;
  bool converged = false;
  std::vector<FqeTracePoint> trace;
};

/// Iterated regression of Q onto r + gamma * Q_target(s', pi(s')) with y = r on
/// terminal windows. Throws NumericError if a target or the regression loss
/// becomes non-finite.
FqeResult fit_fqe(EvaluationQ& model, const WindowSet& train, const ActionSelector& policy,
                  const FqeConfig& cfg);

struct FqeScore {
  double mean = 0;
  std::vector<double> per_episode;  // Q(s0, pi(s0)) of each initial window
  std::vector<int> episodes;        // source episode positions
};

/// Mean of Q(s0, pi(s0)) over the initial window of each episode in `test`.
/// Throws DataError on an empty set.
FqeScore fqe_score(EvaluationQ& model, const WindowSet& test, const ActionSelector& policy);

/// Mean over windows of the policy's own action value max_a Q(w, a) (over the
/// admissible set for BCQ).
double ood_initial_q(const GreedySelector& policy, std::span<const double> windows, int batch);

/// Return level treated as the value ceiling in the OOD diagnostic.
inline constexpr double kMaxReturn = 1.0;

struct Correlation {
  double r = 0;
  double p = 1;
  int n = 0;
};

/// Pearson r with a two-sided t-test p-value. Throws ContractError for fewer than
/// 3 pairs or mismatched sizes and DataError when either side has zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

}  // namespace ventlab
