#include <gtest/gtest.h>

#include "hzo/analysis.h"
#include "hzo/architectures.h"
#include "hzo/baselines.h"
#include "hzo/errors.h"

using namespace hzo;

namespace {

Network mlp(std::size_t depth, std::size_t width, Activation act, std::uint64_t seed) {
  MlpSpec spec;
  spec.input_width = spec.width = spec.output_width = width;
  spec.depth = depth;
  spec.act = act;
  spec.bias_scale = 0.1;
  Rng r(seed);
  return make_plain_mlp(spec, r);
}

double rel_error(const GradientBundle& g, const GradientBundle& ref) {
  return norm2(sub(g.flatten(), ref.flatten())) / norm2(ref.flatten());
}

}  // namespace

TEST(ZoActivation, AffineExactAndLedger) {
  const Network net = mlp(8, 8, Activation::Identity, 1);
  Rng r(2);
  const Tensor x = gaussian({8}, 1.0, r);
  const Label y = gaussian({8}, 1.0, r);
  QueryLedger ledger;
  const auto g = zo_activation_gradient(net, x, y, LossKind::MSE, 1e-3, &ledger);
  EXPECT_LE(rel_error(g, backprop(net, x, y, LossKind::MSE).gradients), 1e-9);
  // sum_{l=1}^{7} 2*8*(8-l) = 448 perturbation evals plus one reference pass.
  EXPECT_EQ(ledger.layer_evals_of(QueryKind::Perturbation), 448u);
  EXPECT_EQ(ledger.layer_evals(), 456u);
}

TEST(ZoActivation, SmoothNetworkAlignment) {
  const Network net = mlp(16, 8, Activation::GELU, 3);
  Rng r(4);
  const Tensor x = gaussian({8}, 1.0, r);
  const Label y = gaussian({8}, 1.0, r);
  const auto g = zo_activation_gradient(net, x, y, LossKind::MSE, 1e-5);
  EXPECT_GE(cosine_similarity(g, backprop(net, x, y, LossKind::MSE).gradients).value, 0.999);
}

TEST(ZoWeight, CoordinateAffineExactAndCount) {
  const Network net = mlp(3, 4, Activation::Identity, 5);
  Rng r(6);
  const Tensor x = gaussian({4}, 1.0, r);
  const Label y = gaussian({4}, 1.0, r);
  QueryLedger ledger;
  Rng dir(0);
  const auto g = zo_weight_gradient(net, x, y, LossKind::MSE,
                                    {BaselineKind::Type::WeightCoordinate, 1}, 1e-3, dir, &ledger);
  EXPECT_LE(rel_error(g, backprop(net, x, y, LossKind::MSE).gradients), 1e-9);
  EXPECT_EQ(ledger.layer_evals(), 2 * net.parameter_count() * net.depth());
}

TEST(ZoWeight, CoordinateThreadInvariant) {
  const Network net = mlp(4, 5, Activation::Tanh, 7);
  Rng r(8);
  const Tensor x = gaussian({5}, 1.0, r);
  const Label y = gaussian({5}, 1.0, r);
  Rng d1(0), d2(0);
  const BaselineKind kind{BaselineKind::Type::WeightCoordinate, 1};
  const auto a = zo_weight_gradient(net, x, y, LossKind::MSE, kind, 1e-5, d1, nullptr, 1);
  const auto b = zo_weight_gradient(net, x, y, LossKind::MSE, kind, 1e-5, d2, nullptr, 8);
  EXPECT_TRUE(bitwise_equal(a.flatten(), b.flatten()));
}

TEST(ZoWeight, RandomDirectionsDeterministicAndAligned) {
  const Network net = mlp(2, 3, Activation::Tanh, 9);
  Rng r(10);
  const Tensor x = gaussian({3}, 1.0, r);
  const Label y = gaussian({3}, 1.0, r);
  const BaselineKind kind{BaselineKind::Type::WeightRandomDirections, 4000};
  Rng d1(77), d2(77);
  QueryLedger ledger;
  const auto a = zo_weight_gradient(net, x, y, LossKind::MSE, kind, 1e-5, d1, &ledger, 1);
  const auto b = zo_weight_gradient(net, x, y, LossKind::MSE, kind, 1e-5, d2, nullptr, 4);
  EXPECT_TRUE(bitwise_equal(a.flatten(), b.flatten()));
  EXPECT_EQ(ledger.layer_evals(), 2u * 4000u * 2u);
  // Expected value is g / P; many directions give a well-aligned estimate.
  EXPECT_GE(cosine_similarity(a, backprop(net, x, y, LossKind::MSE).gradients).value, 0.9);
}

TEST(ZoWeight, RejectsBadArguments) {
  const Network net = mlp(2, 3, Activation::Tanh, 11);
  Rng d(0);
  const Tensor x({3});
  EXPECT_THROW(zo_weight_gradient(net, x, Tensor({3}), LossKind::MSE,
                                  {BaselineKind::Type::WeightRandomDirections, 0}, 1e-3, d),
               InputError);
  EXPECT_THROW(zo_activation_gradient(net, x, Tensor({3}), LossKind::MSE, 0.0), InputError);
}
