#include "hzo/baselines.h"

#include <algorithm>
#include <cmath>

#include "hzo/errors.h"
#include "hzo/hzo.h"
#include "hzo/parallel.h"

namespace hzo {
namespace {

/// (layer, tensor, entry) address of every scalar parameter, in bundle order.
struct ParamRef {
  std::size_t layer;
  std::size_t tensor;
  std::size_t entry;
};

std::vector<ParamRef> enumerate_parameters(const Network& net) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    const auto params = parameters(net.layer(l));
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t e = 0; e < params[t]->size(); ++e) refs.push_back({l, t, e});
    }
  }
  return refs;
}

double& parameter(Network& net, const ParamRef& ref) {
  return (*parameters(net.layer(ref.layer))[ref.tensor])[ref.entry];
}

double full_loss(const Network& net, const Tensor& input, const Label& label, LossKind loss) {
  return loss_value(forward(net, net.full_span(), input), label, loss);
}

/// Unit-norm Gaussian direction over all parameters.
std::vector<double> direction(std::size_t count, Rng rng) {
  std::vector<double> u(count);
  double norm = 0.0;
  for (double& v : u) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

void shift_all(Network& net, const std::vector<ParamRef>& refs, const std::vector<double>& u,
               double step) {
  const PrecisionPolicy policy = net.policy();
  for (std::size_t p = 0; p < refs.size(); ++p) {
    double& v = parameter(net, refs[p]);
    v = policy.round(v + step * u[p]);
  }
}

}  // namespace

GradientBundle zo_activation_gradient(const Network& net, const Tensor& input, const Label& label,
                                      LossKind loss, double epsilon, QueryLedger* ledger,
                                      unsigned threads) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  const PrecisionPolicy policy = net.policy();
  const std::size_t depth = net.depth();
  const auto acts = activations(net, input, ledger, QueryKind::Reference);

  std::vector<Tensor> targets(depth + 1);
  targets[depth] = round_through(loss_gradient(acts[depth], label, loss), policy);
  for (std::size_t l = 1; l < depth; ++l) {
    const Span downstream{l + 1, depth};
    const Tensor& a = acts[l];
    Tensor t(a.shape());
    parallel_for(a.size(), threads, [&](std::size_t m) {
      Tensor plus = a;
      Tensor minus = a;
      plus[m] = policy.round(a[m] + epsilon);
      minus[m] = policy.round(a[m] - epsilon);
      const double lp = loss_value(forward(net, downstream, plus), label, loss);
      const double lm = loss_value(forward(net, downstream, minus), label, loss);
      t[m] = policy.round(policy.round(lp - lm) / (2.0 * epsilon));
    });
    if (ledger) ledger->charge(QueryKind::Perturbation, 2 * a.size(), downstream.depth());
    targets[l] = std::move(t);
  }

  GradientBundle g;
  g.layers.resize(depth);
  for (std::size_t l = 1; l <= depth; ++l) {
    g.layer(l) = local_gradient(net.layer(l), acts[l - 1], {l, targets[l]},
                                UpdateRule::ExactLocal, policy);
  }
  return g;
}

GradientBundle zo_weight_gradient(const Network& net, const Tensor& input, const Label& label,
                                  LossKind loss, const BaselineKind& kind, double epsilon, Rng& rng,
                                  QueryLedger* ledger, unsigned threads) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  const PrecisionPolicy policy = net.policy();
  const auto refs = enumerate_parameters(net);
  GradientBundle g = GradientBundle::zeros_like(net);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, refs.size()));

  switch (kind.type) {
    case BaselineKind::Type::WeightCoordinate: {
      std::vector<double> flat(refs.size());
      parallel_for(workers, static_cast<unsigned>(workers), [&](std::size_t w) {
        Network local = net;
        for (std::size_t p = w; p < refs.size(); p += workers) {
          double& v = parameter(local, refs[p]);
          const double saved = v;
          v = policy.round(saved + epsilon);
          const double lp = full_loss(local, input, label, loss);
          v = policy.round(saved - epsilon);
          const double lm = full_loss(local, input, label, loss);
          v = saved;
          flat[p] = policy.round(policy.round(lp - lm) / (2.0 * epsilon));
        }
      });
      for (std::size_t p = 0; p < refs.size(); ++p) {
        g.layer(refs[p].layer)[refs[p].tensor][refs[p].entry] = flat[p];
      }
      if (ledger) ledger->charge(QueryKind::Perturbation, 2 * refs.size(), net.depth());
      return g;
    }
    case BaselineKind::Type::WeightRandomDirections: {
      if (kind.directions == 0) throw InputError("random-direction estimator needs q >= 1");
      const Rng base(rng.next_u64());
      const std::size_t q = kind.directions;
      std::vector<double> coeff(q);
      const std::size_t dir_workers = std::min<std::size_t>(std::max(1u, threads), q);
      parallel_for(dir_workers, static_cast<unsigned>(dir_workers), [&](std::size_t w) {
        Network local = net;
        for (std::size_t i = w; i < q; i += dir_workers) {
          const auto u = direction(refs.size(), base.split(i));
          shift_all(local, refs, u, epsilon);
          const double lp = full_loss(local, input, label, loss);
          local = net;
          shift_all(local, refs, u, -epsilon);
          const double lm = full_loss(local, input, label, loss);
          local = net;
          coeff[i] = (lp - lm) / (2.0 * epsilon);
        }
      });
      std::vector<double> flat(refs.size(), 0.0);
      for (std::size_t i = 0; i < q; ++i) {
        const auto u = direction(refs.size(), base.split(i));
        for (std::size_t p = 0; p < refs.size(); ++p) flat[p] += coeff[i] * u[p];
      }
      for (std::size_t p = 0; p < refs.size(); ++p) {
        g.layer(refs[p].layer)[refs[p].tensor][refs[p].entry] =
            policy.round(flat[p] / static_cast<double>(q));
      }
      if (ledger) ledger->charge(QueryKind::Perturbation, 2 * q, net.depth());
      return g;
    }
    case BaselineKind::Type::ActivationPerturbation:
      return zo_activation_gradient(net, input, label, loss, epsilon, ledger, threads);
  }
  return g;
}

}  // namespace hzo
