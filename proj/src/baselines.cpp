#include "ventlab/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "ventlab/error.hpp"

namespace ventlab {

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::tcql: return "tcql";
    case MethodKind::ddqn: return "ddqn";
    case MethodKind::cql_fixed: return "cql_fixed";
    case MethodKind::bcq: return "bcq";
  }
  return "unknown";
}

MethodKind parse_method(std::string_view s) {
  if (s == "tcql") return MethodKind::tcql;
  if (s == "ddqn") return MethodKind::ddqn;
  if (s == "cql" || s == "cql_fixed") return MethodKind::cql_fixed;
  if (s == "bcq") return MethodKind::bcq;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

TrainConfig method_config(MethodKind k, TrainConfig c) {
  switch (k) {
    case MethodKind::tcql:
      c.behavior_cloning = false;
      break;
    case MethodKind::ddqn:
      c.alpha0 = 0;
      c.lambda_sc = 0;
      c.behavior_cloning = false;
      break;
    case MethodKind::cql_fixed:
      c.beta = 0;
      c.lambda_sc = 0;
      c.behavior_cloning = false;
      break;
    case MethodKind::bcq:
      c.alpha0 = 0;
      c.lambda_sc = 0;
      c.behavior_cloning = true;
      break;
  }
  c.validate();
  return c;
}

Checkpoint train_method(MethodKind k, const WindowSet& data, const NetConfig& net_cfg,
                        const TrainConfig& base, const std::function<void(const MetricsRow&)>& on_step) {
  NetConfig nc = net_cfg;
  nc.behavior_head = k == MethodKind::bcq;
  Checkpoint ck = train(data, nc, method_config(k, base), on_step);
  ck.kind = to_string(k);
  return ck;
}

ActionIndex bcq_greedy(std::span<const double> q, std::span<const double> logits, double threshold) {
  if (q.size() != logits.size() || q.empty()) throw ContractError("bcq_greedy: shape mismatch");
  if (!(threshold > 0 && threshold <= 1)) throw ContractError("bcq_greedy: threshold outside (0, 1]");
  const double top = *std::max_element(logits.begin(), logits.end());
  // p(a) / max p = exp(logit_a - max logit)
  const double cut = std::log(threshold);
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (logits[a] - top < cut && logits[a] != top) continue;
    if (best < 0 || q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  return ActionIndex{best};
}

ActionIndex bcq_greedy(const Network& net, std::span<const double> params,
                       std::span<const double> window, int len, double threshold) {
  const auto f = net.forward_batch(params, window, 1, len, {.q_full = true, .behavior = true});
  return bcq_greedy(f.q.out, f.behavior.out, threshold);
}

}  // namespace ventlab
