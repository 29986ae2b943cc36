#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hzo/analysis.h"
#include "hzo/architectures.h"
#include "hzo/errors.h"

using namespace hzo;

namespace {

GradientBundle bundle_from(const Network& net, Rng& r) {
  GradientBundle g = GradientBundle::zeros_like(net);
  for (auto& layer : g.layers)
    for (Tensor& t : layer)
      for (double& v : t.values()) v = r.normal();
  return g;
}

}  // namespace

TEST(Cosine, IdentityOppositeOrthogonal) {
  Rng r(1);
  MlpSpec spec;
  spec.depth = 3;
  const Network net = make_plain_mlp(spec, r);
  GradientBundle g = bundle_from(net, r);
  EXPECT_NEAR(cosine_similarity(g, g).value, 1.0, 1e-15);
  GradientBundle neg = g;
  neg.scale_by(-1.0);
  EXPECT_NEAR(cosine_similarity(g, neg).value, -1.0, 1e-15);

  // Gram-Schmidt: h - (<h,g>/<g,g>) g is orthogonal to g.
  GradientBundle h = bundle_from(net, r);
  const Tensor fg = g.flatten(), fh = h.flatten();
  h.add_scaled(g, -dot(fh, fg) / dot(fg, fg));
  EXPECT_NEAR(cosine_similarity(g, h).value, 0.0, 1e-12);

  const Cosine zero = cosine_similarity(Tensor({4}), Tensor::vector({1, 2, 3, 4}));
  EXPECT_TRUE(zero.zero_norm);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_THROW(cosine_similarity(Tensor({3}), Tensor({4})), DimensionError);
}

TEST(Report, ErrorVanishesWhenAligned) {
  Rng r(2);
  MlpSpec spec;
  spec.depth = 4;
  const Network net = make_plain_mlp(spec, r);
  const GradientBundle g = bundle_from(net, r);
  const auto rep = make_report(g, g, {});
  EXPECT_EQ(rep.layer_cosine.size(), 4u);
  EXPECT_NEAR(rep.global_cosine, 1.0, 1e-15);
  EXPECT_LE(rep.error_norm, 1e-12 * rep.oracle_norm);
  EXPECT_EQ(relative_error(g, g), 0.0);
}

TEST(Envelope, KnownValues) {
  EXPECT_DOUBLE_EQ(error_envelope(1.0, 0.3, 0.1, 12), 0.3 * 0.01 * 12);
  EXPECT_DOUBLE_EQ(error_envelope(2.0, 1.0, 1.0, 3), 7.0);
  EXPECT_EQ(error_envelope(1.7, 0.0, 0.5, 9), 0.0);
  // Continuous through lip = 1.
  EXPECT_NEAR(error_envelope(1.0 + 1e-9, 1.0, 1.0, 10), 10.0, 1e-6);
}

TEST(Envelope, MatchedScaleFitsBetter) {
  const std::vector<double> depths{4, 8, 16, 32};
  std::vector<double> errors;
  for (double d : depths) errors.push_back(5.0 * error_envelope(1.3, 1.0, 1.0, d));
  EXPECT_NEAR(envelope_fit_residual(depths, errors, 1.3), 0.0, 1e-20);
  EXPECT_GT(envelope_fit_residual(depths, errors, 1.0), 1e-3);
}

TEST(Curvature, SupremumOfSecondDerivative) {
  EXPECT_EQ(curvature_bound(Activation::Identity), 0.0);
  EXPECT_FALSE(curvature_bound(Activation::ReLU).has_value());
  // tanh'' peaks at 4 / (3 sqrt 3); gelu'' = phi(x)(2 - x^2) peaks at x = 0.
  EXPECT_NEAR(*curvature_bound(Activation::Tanh), 4.0 / (3.0 * std::sqrt(3.0)), 1e-6);
  EXPECT_NEAR(*curvature_bound(Activation::GELU), 2.0 / std::sqrt(2.0 * std::numbers::pi), 1e-6);
}

TEST(Lipschitz, SpectralNormOfKnownMatrices) {
  EXPECT_NEAR(spectral_norm(Tensor::matrix(2, 2, {3, 0, 0, 1})), 3.0, 1e-12);
  EXPECT_NEAR(spectral_norm(Tensor::matrix(2, 3, {1, 1, 0, 0, 0, 2})), 2.0, 1e-9);
  Rng r(3);
  EXPECT_NEAR(spectral_norm(orthogonal_init(8, 8, 1.3, r)), 1.3, 1e-9);
}

TEST(Lipschitz, LayerEstimates) {
  for (Activation act : {Activation::Identity, Activation::Tanh}) {
    Rng r(4);
    const double c = 1.3;
    const Network net({Dense{orthogonal_init(6, 6, c, r), Tensor({6}), act},
                       Dense{orthogonal_init(6, 6, c, r), Tensor({6}), act}});
    const auto est = estimate_lipschitz(net, Tensor({6}));
    ASSERT_EQ(est.per_layer.size(), 2u);
    EXPECT_NEAR(est.per_layer[0], c, 1e-6);
    EXPECT_NEAR(est.per_layer[1], c, 1e-6);
    EXPECT_NEAR(est.network, c * c, 1e-6);
  }
  Residual res;
  res.inner.push_back({Tensor({5, 5}), Tensor({5}), Activation::GELU});
  Rng r(5);
  const auto est = estimate_lipschitz(Network({res}), gaussian({5}, 1.0, r));
  EXPECT_NEAR(est.network, 1.0, 1e-9);
}

TEST(Slope, PowerLaws) {
  const std::vector<double> xs{1, 2, 4, 8, 16};
  std::vector<double> sq, cube, flat;
  for (double x : xs) {
    sq.push_back(x * x);
    cube.push_back(0.3 * x * x * x);
    flat.push_back(7.0);
  }
  EXPECT_NEAR(fit_loglog_slope(xs, sq), 2.0, 1e-9);
  EXPECT_NEAR(fit_loglog_slope(xs, cube), 3.0, 1e-9);
  EXPECT_NEAR(fit_loglog_slope(xs, flat), 0.0, 1e-9);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(fit_loglog_slope(two, two), InputError);
  const std::vector<double> three{1, 2, 3}, neg{1, -2, 3};
  EXPECT_THROW(fit_loglog_slope(three, neg), InputError);
}

TEST(Queries, ClosedFormAndRecursion) {
  EXPECT_EQ(predicted_queries(16, 64), 6144u);
  EXPECT_EQ(predicted_queries(4, 2), 8u);
  EXPECT_EQ(predicted_queries(9, 1), 0u);
  for (std::uint64_t l : {2u, 4u, 8u, 16u, 32u, 128u}) {
    EXPECT_EQ(predicted_queries(16, l), 16 * l * static_cast<std::uint64_t>(std::log2(l)));
  }
  // L = 3: split at 2 (right depth 1), then (1,2) splits at 1 (right depth 1).
  EXPECT_EQ(predicted_queries(5, 3), 2u * 5 * 1 + 2u * 5 * 1);
  // Mixed widths: bisection at k charges 2 * M_k * (last - k).
  const std::vector<std::size_t> widths{3, 7, 2, 9, 4};
  // (1,4): k=2, M_2=2, right depth 2 -> 8; (3,4): k=3, M_3=9 -> 18; (1,2): k=1, M_1=7 -> 14.
  EXPECT_EQ(predicted_queries(widths), 8u + 18u + 14u);
}
