#include "hzo/hzo.h"

#include <functional>
#include <optional>

#include "hzo/errors.h"
#include "hzo/parallel.h"
#include "hzo/spp.h"

namespace hzo {
namespace {

using LeafSink =
    std::function<void(std::size_t layer, const Tensor& a_prev, const TargetSignal& t_out)>;

struct Recursion {
  const Network& net;
  const HzoConfig& cfg;
  QueryLedger& ledger;
  RecursionRecord& record;
  const LeafSink& leaf;

  void run(const Span& span, const Tensor& a_in, const TargetSignal& t_out, int level) {
    if (span.first == span.last) {
      record.trace.push_back({span, TraceEvent::Action::Local, 0, level});
      // The leaf evaluates f_i once to obtain its pre-activation.
      ledger.charge(QueryKind::LocalStep, 1, 1, level);
      leaf(span.first, a_in, t_out);
      return;
    }
    const std::size_t k = (span.first + span.last) / 2;
    record.trace.push_back({span, TraceEvent::Action::Bisect, k, level});
    const Span left{span.first, k};
    const Span right{k + 1, span.last};

    const Tensor a_k = forward(net, left, a_in, &ledger, QueryKind::LeftForward, level);
    TargetSignal t_k;
    if (cfg.spatial_parallel && is_conv_span(net, right)) {
      const auto& conv = std::get<Conv2D>(net.layer(right.first));
      const auto groups =
          build_disjoint_groups(conv.height, conv.width, receptive_field(net, right));
      t_k = spp_estimate_jacobian_action(net, right, a_k, t_out, cfg.epsilon, groups, &ledger,
                                         cfg.threads, cfg.policy, level);
    } else {
      const auto j = estimate_jacobian(net, right, a_k, cfg.epsilon, &ledger, cfg.threads,
                                       cfg.policy, level);
      t_k = propagate_target(j, t_out, cfg.policy);
    }
    record.targets.push_back(t_k);

    run(right, a_k, t_out, level + 1);
    if (!t_k.value.all_finite()) {
      record.diagnostics.push_back("non-finite target at boundary " + std::to_string(k) +
                                   "; skipped span " + to_string(left));
      return;
    }
    run(left, a_in, t_k, level + 1);
  }
};

void check_target(const Network& net, const Span& span, const Tensor& a_in,
                  const TargetSignal& t_out) {
  net.validate_span(span);
  if (a_in.size() != net.width(span.first - 1)) {
    throw DimensionError("input width " + std::to_string(a_in.size()) + " vs span input " +
                         std::to_string(net.width(span.first - 1)));
  }
  if (t_out.layer != span.last || t_out.value.size() != net.width(span.last)) {
    throw DimensionError("target must sit at boundary " + std::to_string(span.last) +
                         " with width " + std::to_string(net.width(span.last)));
  }
}

}  // namespace

std::string to_string(UpdateRule rule) {
  return rule == UpdateRule::ExactLocal ? "exact-local" : "delta-rule";
}

UpdateRule parse_update_rule(const std::string& name) {
  if (name == "exact-local" || name == "exact") return UpdateRule::ExactLocal;
  if (name == "delta-rule" || name == "delta") return UpdateRule::PureDeltaRule;
  throw InputError("unknown update rule '" + name + "'");
}

double default_epsilon(Precision precision) {
  switch (precision) {
    case Precision::Double: return 1e-5;
    case Precision::Single: return 1e-3;
    case Precision::HalfEmulated: return 1e-2;
  }
  return 1e-5;
}

void HzoConfig::validate() const {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(eta >= 0.0)) throw InputError("eta must be non-negative");
}

JacobianEstimate estimate_jacobian(const Network& net, const Span& right, const Tensor& a_k,
                                   double epsilon, QueryLedger* ledger, unsigned threads,
                                   PrecisionPolicy policy, int level) {
  net.validate_span(right);
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  const std::size_t cols = net.width(right.first - 1);
  const std::size_t rows = net.width(right.last);
  if (a_k.size() != cols) {
    throw DimensionError("bisection activation width " + std::to_string(a_k.size()) +
                         " vs right span input " + std::to_string(cols));
  }
  const std::uint64_t overflow_before = overflow_events();
  JacobianEstimate est;
  est.right = right;
  est.epsilon = epsilon;
  est.jacobian = Tensor({rows, cols});
  parallel_for(cols, threads, [&](std::size_t n) {
    Tensor plus = a_k;
    Tensor minus = a_k;
    plus[n] = policy.round(a_k[n] + epsilon);
    minus[n] = policy.round(a_k[n] - epsilon);
    const Tensor fp = forward(net, right, plus);
    const Tensor fm = forward(net, right, minus);
    for (std::size_t m = 0; m < rows; ++m) {
      est.jacobian.at(m, n) = policy.round(policy.round(fp[m] - fm[m]) / (2.0 * epsilon));
    }
  });
  est.queries = 2 * cols * right.depth();
  est.non_finite = !est.jacobian.all_finite();
  est.saturated = overflow_events() != overflow_before;
  if (ledger) ledger->charge(QueryKind::Jacobian, 2 * cols, right.depth(), level);
  return est;
}

TargetSignal propagate_target(const JacobianEstimate& j, const TargetSignal& t_j,
                              PrecisionPolicy policy) {
  if (j.jacobian.rank() != 2 || j.jacobian.extent(0) != t_j.value.size()) {
    throw DimensionError("propagate_target: Jacobian " + shape_string(j.jacobian.shape()) +
                         " vs target width " + std::to_string(t_j.value.size()));
  }
  return {j.right.first - 1, matvec_transposed(j.jacobian, t_j.value, policy)};
}

std::vector<Tensor> local_gradient(const Layer& layer, const Tensor& a_prev,
                                   const TargetSignal& t_i, UpdateRule rule,
                                   PrecisionPolicy policy) {
  if (a_prev.size() != input_width(layer) || t_i.value.size() != output_width(layer)) {
    throw DimensionError("local update: widths " + std::to_string(a_prev.size()) + " -> " +
                         std::to_string(t_i.value.size()) + " do not fit the layer");
  }
  if (rule == UpdateRule::PureDeltaRule && std::holds_alternative<Dense>(layer)) {
    return {outer(t_i.value, a_prev, policy), round_through(t_i.value, policy)};
  }
  auto grads = layer_vjp(layer, a_prev, t_i.value).grads;
  for (auto& g : grads) round_in_place(g, policy);
  return grads;
}

std::vector<Tensor> local_update(Layer& layer, const Tensor& a_prev, const TargetSignal& t_i,
                                 const HzoConfig& cfg) {
  auto grads = local_gradient(layer, a_prev, t_i, cfg.update_rule, cfg.policy);
  auto params = parameters(layer);
  for (std::size_t p = 0; p < params.size(); ++p) axpy(*params[p], -cfg.eta, grads[p], cfg.policy);
  return grads;
}

const TargetSignal* RecursionRecord::target_at(std::size_t boundary) const {
  for (const auto& t : targets) {
    if (t.layer == boundary) return &t;
  }
  return nullptr;
}

RecursionRecord hzo_recurse(Network& net, const Span& span, const Tensor& a_in,
                            const TargetSignal& t_out, const HzoConfig& cfg, QueryLedger& ledger) {
  cfg.validate();
  check_target(net, span, a_in, t_out);
  RecursionRecord record;
  const LeafSink leaf = [&](std::size_t l, const Tensor& a_prev, const TargetSignal& t) {
    local_update(net.layer(l), a_prev, t, cfg);
  };
  Recursion{net, cfg, ledger, record, leaf}.run(span, a_in, t_out, 0);
  return record;
}

HzoEstimate hzo_estimate_gradient(const Network& net, const Tensor& input, const Label& label,
                                  LossKind loss, const HzoConfig& cfg) {
  cfg.validate();
  std::optional<Network> converted;
  if (net.policy() != cfg.policy) {
    converted = net;
    converted->set_policy(cfg.policy);
  }
  const Network& view = converted ? *converted : net;

  HzoEstimate est;
  const Tensor output = forward(view, view.full_span(), input, &est.ledger, QueryKind::Reference);
  est.loss = loss_value(output, label, loss);
  const TargetSignal t_out{view.depth(),
                           round_through(loss_gradient(output, label, loss), cfg.policy)};
  est.gradients = GradientBundle::zeros_like(view);
  const LeafSink leaf = [&](std::size_t l, const Tensor& a_prev, const TargetSignal& t) {
    est.gradients.layer(l) = local_gradient(view.layer(l), a_prev, t, cfg.update_rule, cfg.policy);
  };
  Recursion{view, cfg, est.ledger, est.record, leaf}.run(view.full_span(), input, t_out, 0);
  return est;
}

}  // namespace hzo
