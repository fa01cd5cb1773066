#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

#include "ventlab/tcql.hpp"

namespace ventlab {

enum class MethodKind { tcql, ddqn, cql_fixed, bcq };

std::string to_string(MethodKind k);
/// Accepts tcql, ddqn, cql (or cql_fixed) and bcq. Throws ConfigError otherwise.
MethodKind parse_method(std::string_view s);

/// Training configuration of a method derived from the T-CQL settings:
/// DDQN drops the penalty and the consistency term, fixed CQL drops the
/// uncertainty scaling and the consistency term, BCQ is DDQN plus an
/// imitation head and the admissible-action filter.
TrainConfig method_config(MethodKind k, TrainConfig base);

/// Trains with the method's configuration and tags the checkpoint with its kind.
Checkpoint train_method(MethodKind k, const WindowSet& data, const NetConfig& net_cfg,
                        const TrainConfig& base,
                        const std::function<void(const MetricsRow&)>& on_step = {});

/// Argmax of q over {a : p(a) / max p >= threshold}, p = softmax(logits).
/// Ties go to the lowest index; the imitation argmax is always admissible.
ActionIndex bcq_greedy(std::span<const double> q, std::span<const double> logits, double threshold);

/// Greedy BCQ action for one window using the checkpoint's two heads.
ActionIndex bcq_greedy(const Network& net, std::span<const double> params,
                       std::span<const double> window, int len, double threshold);

}  // namespace ventlab
