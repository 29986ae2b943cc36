#include <gtest/gtest.h>

#include <cmath>

#include "hzo/architectures.h"
#include "hzo/errors.h"
#include "hzo/oracle.h"

using namespace hzo;

namespace {

// Relative error with an absolute floor for near-zero entries.
double rel(double a, double b) { return std::fabs(a - b) / std::max(1e-4, std::fabs(b)); }

Layer random_layer(int kind, Rng& r, Activation act) {
  switch (kind) {
    case 0:
      return Dense{gaussian({4, 5}, 0.6, r), gaussian({4}, 0.2, r), act};
    case 1: {
      Residual res;
      res.inner.push_back({gaussian({5, 5}, 0.5, r), gaussian({5}, 0.2, r), act});
      res.inner.push_back({gaussian({5, 5}, 0.5, r), gaussian({5}, 0.2, r), Activation::Identity});
      return res;
    }
    case 2: {
      Conv2D c;
      c.kernel = gaussian({2, 2, 3, 3}, 0.4, r);
      c.bias = gaussian({2}, 0.2, r);
      c.height = 3;
      c.width = 4;
      c.act = act;
      return c;
    }
    default:
      return Flatten{6};
  }
}

// Scalar probe <u, layer(x)> for finite differencing.
double probe(const Layer& layer, const Tensor& x, const Tensor& u) {
  return dot(u, apply_layer(layer, x));
}

}  // namespace

TEST(Loss, MseAndGradient) {
  const Tensor a = Tensor::vector({1.0, -2.0});
  const Tensor y = Tensor::vector({0.5, 0.0});
  EXPECT_DOUBLE_EQ(loss_value(a, y, LossKind::MSE), 0.5 * (0.25 + 4.0));
  const Tensor g = loss_gradient(a, y, LossKind::MSE);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[1], -2.0);
}

TEST(Loss, CrossEntropyIsStable) {
  const Tensor a = Tensor::vector({1000.0, 0.0, -1000.0});
  EXPECT_NEAR(loss_value(a, std::size_t{0}, LossKind::SoftmaxCrossEntropy), 0.0, 1e-12);
  EXPECT_NEAR(loss_value(a, std::size_t{1}, LossKind::SoftmaxCrossEntropy), 1000.0, 1e-9);
  EXPECT_THROW(loss_value(a, std::size_t{3}, LossKind::SoftmaxCrossEntropy), InputError);
  EXPECT_EQ(parse_loss("ce"), LossKind::SoftmaxCrossEntropy);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    const Tensor a = gaussian({5}, 2.0, r);
    const Label labels[2] = {gaussian({5}, 1.0, r), static_cast<std::size_t>(r.below(5))};
    const LossKind kinds[2] = {LossKind::MSE, LossKind::SoftmaxCrossEntropy};
    for (int k = 0; k < 2; ++k) {
      const Tensor g = loss_gradient(a, labels[k], kinds[k]);
      for (std::size_t i = 0; i < 5; ++i) {
        Tensor p = a, m = a;
        p[i] += 1e-5;
        m[i] -= 1e-5;
        const double fd =
            (loss_value(p, labels[k], kinds[k]) - loss_value(m, labels[k], kinds[k])) / 2e-5;
        ASSERT_NEAR(g[i], fd, 1e-7);
      }
    }
  }
}

TEST(Vjp, MatchesFiniteDifferencesForEveryLayerKind) {
  const double eps = 1e-5;
  for (int kind = 0; kind < 4; ++kind) {
    for (Activation act : {Activation::GELU, Activation::Tanh, Activation::ReLU}) {
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng r(seed * 7 + kind);
        Layer layer = random_layer(kind, r, act);
        const Tensor x = gaussian({input_width(layer)}, 1.0, r);
        const Tensor u = gaussian({output_width(layer)}, 1.0, r);
        if (act == Activation::ReLU) {
          // Stay clear of kinks: skip draws with a pre-activation near zero.
          bool near_kink = false;
          if (auto* d = std::get_if<Dense>(&layer)) {
            for (double z : dense_preactivation(*d, x, {}).values()) near_kink |= std::fabs(z) < 1e-3;
          } else if (auto* c = std::get_if<Conv2D>(&layer)) {
            for (double z : conv_preactivation(*c, x, {}).values()) near_kink |= std::fabs(z) < 1e-3;
          } else if (auto* res = std::get_if<Residual>(&layer)) {
            for (double z : dense_preactivation(res->inner[0], x, {}).values()) {
              near_kink |= std::fabs(z) < 1e-3;
            }
          }
          if (near_kink) continue;
        }
        const auto vjp = layer_vjp(layer, x, u);
        for (std::size_t i = 0; i < x.size(); ++i) {
          Tensor p = x, m = x;
          p[i] += eps;
          m[i] -= eps;
          const double fd = (probe(layer, p, u) - probe(layer, m, u)) / (2 * eps);
          ASSERT_LT(rel(vjp.downstream[i], fd), 1e-6) << kind << " " << seed;
        }
        auto params = parameters(layer);
        for (std::size_t t = 0; t < params.size(); ++t) {
          for (std::size_t e = 0; e < params[t]->size(); ++e) {
            double& v = (*params[t])[e];
            const double saved = v;
            v = saved + eps;
            const double lp = probe(layer, x, u);
            v = saved - eps;
            const double lm = probe(layer, x, u);
            v = saved;
            ASSERT_LT(rel(vjp.grads[t][e], (lp - lm) / (2 * eps)), 1e-6)
                << kind << " " << seed << " " << vjp.grads[t][e] << " " << (lp - lm) / (2 * eps);
          }
        }
      }
    }
  }
}

TEST(Vjp, JacobianRowsAreVjpsOfBasis) {
  Rng r(3);
  const Layer layer = random_layer(0, r, Activation::Tanh);
  const Tensor x = gaussian({5}, 1.0, r);
  const Tensor j = layer_jacobian(layer, x);
  ASSERT_EQ(j.shape(), (std::vector<std::size_t>{4, 5}));
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor p = x, m = x;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    const Tensor d = scale(sub(apply_layer(layer, p), apply_layer(layer, m)), 1.0 / 2e-6);
    for (std::size_t o = 0; o < 4; ++o) ASSERT_NEAR(j.at(o, i), d[o], 1e-8);
  }
}

TEST(Backprop, MatchesBruteForceParameterDifferences) {
  MlpSpec spec;
  spec.input_width = 6;
  spec.width = 6;
  spec.output_width = 6;
  spec.depth = 4;
  spec.act = Activation::GELU;
  spec.bias_scale = 0.1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(seed);
    Network net = make_plain_mlp(spec, r);
    const Tensor x = gaussian({6}, 1.0, r);
    const Label y = gaussian({6}, 1.0, r);
    const auto bp = backprop(net, x, y, LossKind::MSE);
    const auto loss = [&] { return loss_value(forward(net, net.full_span(), x), y, LossKind::MSE); };
    EXPECT_DOUBLE_EQ(bp.loss, loss());
    for (std::size_t l = 1; l <= net.depth(); ++l) {
      auto params = parameters(net.layer(l));
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t e = 0; e < params[t]->size(); ++e) {
          double& v = (*params[t])[e];
          const double saved = v;
          v = saved + 1e-5;
          const double lp = loss();
          v = saved - 1e-5;
          const double lm = loss();
          v = saved;
          ASSERT_LT(rel(bp.gradients.layer(l)[t][e], (lp - lm) / 2e-5), 1e-6);
        }
      }
    }
  }
}

TEST(Backprop, BoundaryTargetsAndLedger) {
  MlpSpec spec;
  spec.depth = 5;
  Rng r(4);
  const Network net = make_residual_mlp(spec, r);
  const Tensor x = gaussian({16}, 1.0, r);
  const Label y = std::size_t{3};
  QueryLedger ledger;
  const auto bp = backprop(net, x, y, LossKind::SoftmaxCrossEntropy, &ledger);
  EXPECT_EQ(ledger.layer_evals(), 2 * net.depth());
  ASSERT_EQ(bp.boundary_targets.size(), net.depth() + 1);
  const auto acts = activations(net, x);
  const Tensor tl = loss_gradient(acts.back(), y, LossKind::SoftmaxCrossEntropy);
  EXPECT_TRUE(bitwise_equal(bp.boundary_targets.back(), tl));
  // T_2 against a finite difference of the loss through layers 3..L.
  for (std::size_t m = 0; m < 16; ++m) {
    Tensor p = acts[2], q = acts[2];
    p[m] += 1e-5;
    q[m] -= 1e-5;
    const double fd = (loss_value(forward(net, {3, 5}, p), y, LossKind::SoftmaxCrossEntropy) -
                       loss_value(forward(net, {3, 5}, q), y, LossKind::SoftmaxCrossEntropy)) /
                      2e-5;
    EXPECT_NEAR(bp.boundary_targets[2][m], fd, 1e-7);
  }
}

TEST(Backprop, OutputTargetMatchesFiniteDifference) {
  Rng r(5);
  MlpSpec spec;
  const Network net = make_plain_mlp(spec, r);
  const Tensor x = gaussian({16}, 1.0, r);
  const Label y = gaussian({16}, 1.0, r);
  const auto lt = loss_and_output_target(net, x, y, LossKind::MSE);
  EXPECT_EQ(lt.target.layer, net.depth());
  const Tensor a = forward(net, net.full_span(), x);
  for (std::size_t m = 0; m < 16; ++m) {
    Tensor p = a, q = a;
    p[m] += 1e-5;
    q[m] -= 1e-5;
    const double fd = (loss_value(p, y, LossKind::MSE) - loss_value(q, y, LossKind::MSE)) / 2e-5;
    EXPECT_NEAR(lt.target.value[m], fd, 1e-7);
  }
}

TEST(GradientBundle, FlattenAndArithmetic) {
  Rng r(6);
  MlpSpec spec;
  spec.depth = 3;
  const Network net = make_plain_mlp(spec, r);
  GradientBundle a = GradientBundle::zeros_like(net);
  EXPECT_EQ(a.size(), net.parameter_count());
  GradientBundle b = a;
  b.layer(2)[1][3] = 2.0;
  a.add_scaled(b, 0.5);
  EXPECT_EQ(a.layer(2)[1][3], 1.0);
  a.scale_by(4.0);
  EXPECT_EQ(a.flatten_layer(2)[16 * 16 + 3], 4.0);
}
