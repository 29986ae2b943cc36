#pragma once

#include <cstddef>

#include "hzo/network.h"
#include "hzo/rng.h"

namespace hzo {

/// Shape and initialization of a fully connected stack.
struct MlpSpec {
  std::size_t input_width = 16;
  std::size_t width = 16;
  std::size_t output_width = 16;
  /// Total layer count L, projections and head included.
  std::size_t depth = 4;
  Activation act = Activation::GELU;
  Activation head_act = Activation::Identity;
  /// Gain of the plain layers (fan-in scaled) or scale c of orthogonal weights.
  double weight_scale = 1.0;
  /// Gain of the dense layer inside each residual block.
  double residual_scale = 0.5;
  bool orthogonal = false;
  double bias_scale = 0.0;
};

/// L dense layers: input -> width -> ... -> width -> output.
Network make_plain_mlp(const MlpSpec& spec, Rng& rng);

/// Dense projection, L-2 single-layer residual blocks, dense head.
/// Depths below 3 fall back to the plain stack.
Network make_residual_mlp(const MlpSpec& spec, Rng& rng);

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t channels = 2;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t kernel = 3;
  std::size_t conv_layers = 2;
  Activation act = Activation::GELU;
  /// Width of the dense head after flattening; 0 means no head.
  std::size_t classes = 0;
  double weight_scale = 1.0;
  double bias_scale = 0.1;
};

/// conv_layers convolutions, then (if classes > 0) Flatten and a dense head.
Network make_conv_net(const ConvSpec& spec, Rng& rng);

/// Gain that keeps activations at unit scale for fan-in initialization.
double default_gain(Activation act);

}  // namespace hzo
