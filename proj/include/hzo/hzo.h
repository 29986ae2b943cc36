#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hzo/ledger.h"
#include "hzo/network.h"
#include "hzo/oracle.h"
#include "hzo/tensor.h"

namespace hzo {

/// How a recursion leaf turns its output target into parameter gradients.
enum class UpdateRule {
  /// Exact single-layer VJP: delta = T * act'(z), dW = delta a^T, db = delta.
  ExactLocal,
  /// Literal delta rule: dW = T a^T, db = T. Only differs from ExactLocal
  /// for non-identity activations. Non-dense layers use ExactLocal.
  PureDeltaRule,
};

std::string to_string(UpdateRule rule);
UpdateRule parse_update_rule(const std::string& name);

/// Default perturbation size for each storage format.
double default_epsilon(Precision precision);

struct HzoConfig {
  double epsilon = 1e-5;
  double eta = 1e-2;
  UpdateRule update_rule = UpdateRule::ExactLocal;
  PrecisionPolicy policy;
  /// Workers for the perturbation queries of one bisection.
  unsigned threads = 1;
  /// Use batched spatial perturbation when a right span is conv-only.
  bool spatial_parallel = false;

  void validate() const;
};

/// Central-difference Jacobian of a right span at a bisection point.
struct JacobianEstimate {
  Span right;
  Tensor jacobian;  // [M_j x M_k]
  double epsilon = 0.0;
  std::uint64_t queries = 0;  // layer evaluations spent
  bool non_finite = false;
  bool saturated = false;     // a rounding hit the format's range limit
};

/// Column n is [N(a_k + eps e_n) - N(a_k - eps e_n)] / (2 eps). Charges
/// 2 * M_k span-forwards of right.depth() layers as Jacobian work at `level`.
/// Columns may be computed concurrently; each lands in its own slot.
JacobianEstimate estimate_jacobian(const Network& net, const Span& right, const Tensor& a_k,
                                   double epsilon, QueryLedger* ledger = nullptr,
                                   unsigned threads = 1, PrecisionPolicy policy = {},
                                   int level = 0);

/// T_k = J^T T_j, attached to the boundary just before the right span.
TargetSignal propagate_target(const JacobianEstimate& j, const TargetSignal& t_j,
                              PrecisionPolicy policy = {});

/// Parameter gradients of one layer from its output target.
std::vector<Tensor> local_gradient(const Layer& layer, const Tensor& a_prev,
                                   const TargetSignal& t_i, UpdateRule rule,
                                   PrecisionPolicy policy = {});

/// Applies W <- W - eta * dW to every parameter of `layer`; returns the gradients used.
std::vector<Tensor> local_update(Layer& layer, const Tensor& a_prev, const TargetSignal& t_i,
                                 const HzoConfig& cfg);

/// One step of the recursion, for trace inspection.
struct TraceEvent {
  enum class Action { Bisect, Local };
  Span span;
  Action action = Action::Local;
  std::size_t split = 0;  // bisection point k for Bisect events
  int level = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct RecursionRecord {
  /// Estimated targets in the order they were produced.
  std::vector<TargetSignal> targets;
  std::vector<TraceEvent> trace;
  /// Branches abandoned because a target went non-finite.
  std::vector<std::string> diagnostics;

  /// Estimated target at boundary k, or nullptr if none was recorded.
  const TargetSignal* target_at(std::size_t boundary) const;
};

/// Hierarchical update of `span`: bisect at k = floor((i+j)/2), estimate the
/// right half's Jacobian at a_k, form T_k, recurse right with (a_k, T_out)
/// and then left with (a_in, T_k). Leaves apply local_update in place.
RecursionRecord hzo_recurse(Network& net, const Span& span, const Tensor& a_in,
                            const TargetSignal& t_out, const HzoConfig& cfg, QueryLedger& ledger);

struct HzoEstimate {
  double loss = 0.0;
  GradientBundle gradients;
  RecursionRecord record;
  QueryLedger ledger;
};

/// Same traversal and queries as hzo_recurse over the whole network, but
/// collects the leaf gradients instead of applying them. The network is
/// evaluated under cfg.policy.
HzoEstimate hzo_estimate_gradient(const Network& net, const Tensor& input, const Label& label,
                                  LossKind loss, const HzoConfig& cfg);

}  // namespace hzo
