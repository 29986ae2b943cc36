#include "hzo/architectures.h"

#include <cmath>

#include "hzo/errors.h"

namespace hzo {
namespace {

Dense make_dense(std::size_t in, std::size_t out, Activation act, double gain, bool orthogonal,
                 double bias_scale, Rng& rng) {
  Dense d;
  d.act = act;
  d.weight = orthogonal ? orthogonal_init(out, in, gain, rng) : fan_in_init(out, in, gain, rng);
  d.bias = gaussian({out}, bias_scale, rng);
  return d;
}

}  // namespace

double default_gain(Activation act) { return act == Activation::ReLU ? std::sqrt(2.0) : 1.0; }

Network make_plain_mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.depth == 0) throw InputError("depth must be at least 1");
  std::vector<Layer> layers;
  const double gain =
      spec.orthogonal ? spec.weight_scale : spec.weight_scale * default_gain(spec.act);
  for (std::size_t l = 1; l <= spec.depth; ++l) {
    const std::size_t in = l == 1 ? spec.input_width : spec.width;
    const std::size_t out = l == spec.depth ? spec.output_width : spec.width;
    const Activation act = l == spec.depth ? spec.head_act : spec.act;
    layers.emplace_back(make_dense(in, out, act, gain, spec.orthogonal, spec.bias_scale, rng));
  }
  return Network(std::move(layers));
}

Network make_residual_mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.depth < 3) return make_plain_mlp(spec, rng);
  std::vector<Layer> layers;
  const double gain =
      spec.orthogonal ? spec.weight_scale : spec.weight_scale * default_gain(spec.act);
  layers.emplace_back(make_dense(spec.input_width, spec.width, spec.act, gain, spec.orthogonal,
                                 spec.bias_scale, rng));
  for (std::size_t l = 2; l < spec.depth; ++l) {
    Residual block;
    block.inner.push_back(make_dense(spec.width, spec.width, spec.act, spec.residual_scale,
                                     spec.orthogonal, spec.bias_scale, rng));
    layers.emplace_back(std::move(block));
  }
  layers.emplace_back(make_dense(spec.width, spec.output_width, spec.head_act, gain,
                                 spec.orthogonal, spec.bias_scale, rng));
  return Network(std::move(layers));
}

Network make_conv_net(const ConvSpec& spec, Rng& rng) {
  if (spec.conv_layers == 0) throw InputError("conv net needs at least one conv layer");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < spec.conv_layers; ++l) {
    const std::size_t cin = l == 0 ? spec.in_channels : spec.channels;
    Conv2D c;
    c.act = spec.act;
    c.height = spec.height;
    c.width = spec.width;
    const double fan_in = static_cast<double>(cin * spec.kernel * spec.kernel);
    c.kernel = gaussian({spec.channels, cin, spec.kernel, spec.kernel},
                        spec.weight_scale * default_gain(spec.act) / std::sqrt(fan_in), rng);
    c.bias = gaussian({spec.channels}, spec.bias_scale, rng);
    layers.emplace_back(std::move(c));
  }
  if (spec.classes > 0) {
    const std::size_t flat = spec.channels * spec.height * spec.width;
    layers.emplace_back(Flatten{flat});
    layers.emplace_back(
        make_dense(flat, spec.classes, Activation::Identity, 1.0, false, 0.0, rng));
  }
  return Network(std::move(layers));
}

}  // namespace hzo
