#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "hzo/ledger.h"
#include "hzo/tensor.h"

namespace hzo {

enum class Activation : std::uint8_t { Identity = 0, ReLU = 1, GELU = 2, Tanh = 3 };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

double activate(Activation act, double x);
/// First derivative. ReLU'(0) is taken as 0.
double activate_derivative(Activation act, double x);
/// Second derivative; ReLU reports 0 everywhere (its distributional part at 0 is not representable).
double activate_second_derivative(Activation act, double x);

/// a = act(W x + b), W is [out x in].
struct Dense {
  Tensor weight;
  Tensor bias;
  Activation act = Activation::Identity;
};

/// a = x + inner_n(...inner_1(x)). Atomic for bisection purposes.
struct Residual {
  std::vector<Dense> inner;
};

/// Stride-1 same-padded 2-D convolution on a [C, H, W] map stored flat.
/// kernel is [C_out x C_in x k x k] with odd k.
struct Conv2D {
  Tensor kernel;
  Tensor bias;
  std::size_t height = 0;
  std::size_t width = 0;
  Activation act = Activation::Identity;

  std::size_t in_channels() const { return kernel.extent(1); }
  std::size_t out_channels() const { return kernel.extent(0); }
  std::size_t kernel_size() const { return kernel.extent(2); }
};

/// Reinterprets a [C, H, W] map as a vector. Identity on the flat data.
struct Flatten {
  std::size_t width = 0;
};

using Layer = std::variant<Dense, Residual, Conv2D, Flatten>;

enum class LayerKind : std::uint8_t { Dense = 0, Residual = 1, Conv2D = 2, Flatten = 3 };

LayerKind kind_of(const Layer& layer);
std::string to_string(LayerKind kind);
std::size_t input_width(const Layer& layer);
std::size_t output_width(const Layer& layer);

/// Parameter tensors in a fixed order: weight then bias for each affine part.
std::vector<Tensor*> parameters(Layer& layer);
std::vector<const Tensor*> parameters(const Layer& layer);

/// Pre-activation W x + b of a dense unit, accumulated in 64-bit and rounded once.
Tensor dense_preactivation(const Dense& dense, const Tensor& x, PrecisionPolicy policy);
Tensor conv_preactivation(const Conv2D& conv, const Tensor& x, PrecisionPolicy policy);
Tensor apply_activation(Activation act, const Tensor& z, PrecisionPolicy policy);

/// Evaluates one layer. Throws DimensionError on width mismatch.
Tensor apply_layer(const Layer& layer, const Tensor& x, PrecisionPolicy policy = {});

/// Layers i..j, 1-based and inclusive.
struct Span {
  std::size_t first = 1;
  std::size_t last = 1;

  std::size_t depth() const noexcept { return last - first + 1; }
  friend bool operator==(const Span&, const Span&) = default;
};

std::string to_string(const Span& span);

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers, PrecisionPolicy policy = {});

  /// Number of layers L.
  std::size_t depth() const noexcept { return layers_.size(); }
  Span full_span() const { return {1, depth()}; }

  /// Layer l, 1-based.
  const Layer& layer(std::size_t l) const { return layers_.at(l - 1); }
  Layer& layer(std::size_t l) { return layers_.at(l - 1); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Activation width M_b at boundary b in [0, L].
  std::size_t width(std::size_t boundary) const { return widths_.at(boundary); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }

  PrecisionPolicy policy() const noexcept { return policy_; }
  /// Switches the storage format and rounds every parameter into it.
  void set_policy(PrecisionPolicy policy);

  std::size_t parameter_count() const;

  void validate_span(const Span& span) const;

 private:
  std::vector<Layer> layers_;
  std::vector<std::size_t> widths_;
  PrecisionPolicy policy_;
};

/// a_j = f_j(...f_i(input)) under the network's precision policy. Charges
/// span.depth() layer evaluations and one span-forward to `ledger` if given.
Tensor forward(const Network& net, const Span& span, const Tensor& input,
               QueryLedger* ledger = nullptr, QueryKind kind = QueryKind::Other, int level = 0);

/// All boundary activations a_0..a_L; element l equals forward(net, {1, l}, input).
std::vector<Tensor> activations(const Network& net, const Tensor& input,
                                QueryLedger* ledger = nullptr,
                                QueryKind kind = QueryKind::Reference);

// Checkpoints. See docs/checkpoint_format.md for the byte layout.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(const std::vector<std::uint8_t>& bytes);
void save(const Network& net, const std::filesystem::path& path);
Network load(const std::filesystem::path& path);

}  // namespace hzo
