#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hzo/architectures.h"
#include "hzo/errors.h"
#include "hzo/network.h"

using namespace hzo;

namespace {

Dense dense(std::size_t in, std::size_t out, Activation act, Rng& r) {
  return {gaussian({out, in}, 0.5, r), gaussian({out}, 0.1, r), act};
}

Network mixed_net(Rng& r) {
  Conv2D c;
  c.kernel = gaussian({2, 1, 3, 3}, 0.4, r);
  c.bias = gaussian({2}, 0.1, r);
  c.height = 4;
  c.width = 5;
  c.act = Activation::Tanh;
  Residual res;
  res.inner.push_back(dense(6, 6, Activation::GELU, r));
  res.inner.push_back(dense(6, 6, Activation::Identity, r));
  return Network({c, Flatten{40}, dense(40, 6, Activation::ReLU, r), res,
                  dense(6, 3, Activation::Identity, r)});
}

// Same-padded stride-1 convolution written directly from its definition.
Tensor naive_conv(const Conv2D& c, const Tensor& x) {
  const std::size_t co_n = c.kernel.extent(0), ci_n = c.kernel.extent(1), k = c.kernel.extent(2);
  const long pad = static_cast<long>(k / 2);
  Tensor out({co_n * c.height * c.width});
  for (std::size_t co = 0; co < co_n; ++co) {
    for (long y = 0; y < static_cast<long>(c.height); ++y) {
      for (long xx = 0; xx < static_cast<long>(c.width); ++xx) {
        double acc = c.bias[co];
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          for (long ky = 0; ky < static_cast<long>(k); ++ky) {
            for (long kx = 0; kx < static_cast<long>(k); ++kx) {
              const long iy = y + ky - pad, ix = xx + kx - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(c.height) ||
                  ix >= static_cast<long>(c.width)) {
                continue;
              }
              acc += c.kernel[((co * ci_n + ci) * k + ky) * k + kx] *
                     x[(ci * c.height + iy) * c.width + ix];
            }
          }
        }
        out[(co * c.height + y) * c.width + xx] = activate(c.act, acc);
      }
    }
  }
  return out;
}

}  // namespace

TEST(Activation, DerivativesMatchFiniteDifferences) {
  for (Activation act : {Activation::Identity, Activation::GELU, Activation::Tanh}) {
    for (double x = -4.0; x <= 4.0; x += 0.37) {
      const double h = 1e-5;
      const double d1 = (activate(act, x + h) - activate(act, x - h)) / (2 * h);
      const double d2 =
          (activate_derivative(act, x + h) - activate_derivative(act, x - h)) / (2 * h);
      EXPECT_NEAR(activate_derivative(act, x), d1, 1e-8) << to_string(act) << " " << x;
      EXPECT_NEAR(activate_second_derivative(act, x), d2, 1e-7) << to_string(act) << " " << x;
    }
  }
  EXPECT_EQ(activate_derivative(Activation::ReLU, 0.0), 0.0);
  EXPECT_EQ(activate_derivative(Activation::ReLU, 0.5), 1.0);
}

TEST(Activation, GeluKnownValues) {
  EXPECT_NEAR(activate(Activation::GELU, 1.0), 0.8413447460685429, 1e-15);
  EXPECT_EQ(activate(Activation::GELU, 0.0), 0.0);
  EXPECT_THROW(parse_activation("swish"), InputError);
}

TEST(Network, RejectsWidthMismatch) {
  Rng r(1);
  EXPECT_THROW(Network({dense(3, 4, Activation::ReLU, r), dense(5, 2, Activation::ReLU, r)}),
               DimensionError);
}

TEST(Network, DenseForwardMatchesDefinition) {
  Rng r(2);
  const Dense d = dense(3, 2, Activation::Tanh, r);
  const Network net({d});
  const Tensor x = Tensor::vector({0.3, -1.2, 0.7});
  const Tensor y = forward(net, net.full_span(), x);
  for (std::size_t i = 0; i < 2; ++i) {
    double z = d.bias[i];
    for (std::size_t j = 0; j < 3; ++j) z += d.weight.at(i, j) * x[j];
    EXPECT_NEAR(y[i], std::tanh(z), 1e-15);
  }
}

TEST(Network, ConvForwardMatchesNaiveConvolution) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    Conv2D c;
    const std::size_t k = 2 * r.below(3) + 1;
    c.kernel = gaussian({2, 3, k, k}, 0.5, r);
    c.bias = gaussian({2}, 0.2, r);
    c.height = 3 + r.below(4);
    c.width = 3 + r.below(4);
    c.act = Activation::GELU;
    const Tensor x = gaussian({3 * c.height * c.width}, 1.0, r);
    const Tensor y = apply_layer(c, x);
    const Tensor ref = naive_conv(c, x);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Network, ResidualAddsInnerChain) {
  Rng r(4);
  Residual res;
  res.inner.push_back(dense(4, 4, Activation::Tanh, r));
  const Tensor x = gaussian({4}, 1.0, r);
  const Tensor inner = apply_layer(res.inner[0], x);
  const Tensor y = apply_layer(res, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i] + inner[i]);
}

TEST(Network, ForwardComposesOverAnySplit) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const Network net = mixed_net(r);
    const Tensor x = gaussian({20}, 1.0, r);
    const Tensor whole = forward(net, net.full_span(), x);
    for (std::size_t k = 1; k < net.depth(); ++k) {
      const Tensor left = forward(net, {1, k}, x);
      const Tensor right = forward(net, {k + 1, net.depth()}, left);
      ASSERT_TRUE(bitwise_equal(whole, right));
    }
    const auto acts = activations(net, x);
    ASSERT_TRUE(bitwise_equal(acts.back(), whole));
  }
}

TEST(Network, ForwardChargesLedger) {
  Rng r(5);
  const Network net = mixed_net(r);
  QueryLedger l;
  forward(net, {2, 4}, forward(net, {1, 1}, gaussian({20}, 1.0, r)), &l, QueryKind::LeftForward);
  EXPECT_EQ(l.layer_evals(), 3u);
  EXPECT_EQ(l.span_forwards(), 1u);
  EXPECT_THROW(forward(net, {3, 2}, Tensor({40})), DimensionError);
  EXPECT_THROW(forward(net, {1, 2}, Tensor({7})), DimensionError);
}

TEST(Network, SetPolicyRoundsParameters) {
  Rng r(6);
  Network net = mixed_net(r);
  net.set_policy({Precision::HalfEmulated});
  for (const auto& layer : net.layers()) {
    for (const Tensor* p : parameters(layer)) {
      for (double v : p->values()) ASSERT_EQ(v, round_to_half(v));
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng r(7);
  const Network net = mixed_net(r);
  const auto bytes = serialize(net);
  const Network back = deserialize(bytes);
  ASSERT_EQ(back.depth(), net.depth());
  EXPECT_EQ(serialize(back), bytes);
  const Tensor x = gaussian({20}, 1.0, r);
  EXPECT_TRUE(bitwise_equal(forward(net, net.full_span(), x), forward(back, back.full_span(), x)));

  const auto path = std::filesystem::temp_directory_path() / "hzo_roundtrip.ckpt";
  save(net, path);
  EXPECT_EQ(serialize(load(path)), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, HeaderLayout) {
  Rng r(8);
  const Network net({dense(2, 3, Activation::GELU, r)});
  const auto b = serialize(net);
  ASSERT_EQ(std::string(b.begin(), b.begin() + 4), "HZO1");
  EXPECT_EQ(b[4], 1);  // version, little-endian
  EXPECT_EQ(b[8], 1);  // layer count
  EXPECT_EQ(b[12], 0);  // Dense
  EXPECT_EQ(b[13], 2);  // GELU
  EXPECT_EQ(b[14], 2);  // rank
  EXPECT_EQ(b[18], 3);  // out
  EXPECT_EQ(b[26], 2);  // in
  // header 34 bytes, then 6 weights and 3 biases as f64
  EXPECT_EQ(b.size(), 34u + 9u * 8u);
}

TEST(Checkpoint, ErrorsCarryOffsets) {
  Rng r(9);
  const auto good = serialize(mixed_net(r));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  try {
    deserialize(bad_magic);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  auto bad_version = good;
  bad_version[4] = 9;
  try {
    deserialize(bad_version);
    FAIL();
  } catch (const UnsupportedVersionError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }

  auto truncated = good;
  truncated.resize(good.size() - 5);
  try {
    deserialize(truncated);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_LE(e.offset(), truncated.size());
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }

  auto trailing = good;
  trailing.push_back(0);
  try {
    deserialize(trailing);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), good.size());
  }

  EXPECT_THROW(deserialize({}), ParseError);
}

TEST(Architectures, ShapesAndDepth) {
  Rng r(10);
  MlpSpec spec;
  spec.depth = 6;
  spec.input_width = 2;
  spec.output_width = 3;
  const Network plain = make_plain_mlp(spec, r);
  EXPECT_EQ(plain.depth(), 6u);
  EXPECT_EQ(plain.width(0), 2u);
  EXPECT_EQ(plain.width(6), 3u);
  const Network res = make_residual_mlp(spec, r);
  EXPECT_EQ(res.depth(), 6u);
  EXPECT_EQ(kind_of(res.layer(3)), LayerKind::Residual);
  ConvSpec cs;
  cs.classes = 4;
  const Network conv = make_conv_net(cs, r);
  EXPECT_EQ(conv.depth(), cs.conv_layers + 2);
  EXPECT_EQ(conv.width(conv.depth()), 4u);
}

TEST(Architectures, SameSeedSameNetwork) {
  MlpSpec spec;
  Rng a(12), b(12);
  EXPECT_EQ(serialize(make_residual_mlp(spec, a)), serialize(make_residual_mlp(spec, b)));
}
