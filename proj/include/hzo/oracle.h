#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "hzo/ledger.h"
#include "hzo/network.h"
#include "hzo/tensor.h"

namespace hzo {

enum class LossKind { MSE, SoftmaxCrossEntropy };

std::string to_string(LossKind loss);
LossKind parse_loss(const std::string& name);

/// A class index (cross-entropy) or a regression target vector (MSE).
using Label = std::variant<std::size_t, Tensor>;

/// dLoss/da_j attached to boundary j.
struct TargetSignal {
  std::size_t layer = 0;
  Tensor value;
};

/// Per-layer parameter gradients, ordered like `parameters(layer)`.
struct GradientBundle {
  std::vector<std::vector<Tensor>> layers;

  static GradientBundle zeros_like(const Network& net);

  /// Gradient tensors of layer l (1-based).
  std::vector<Tensor>& layer(std::size_t l) { return layers.at(l - 1); }
  const std::vector<Tensor>& layer(std::size_t l) const { return layers.at(l - 1); }

  /// All entries concatenated in layer order.
  Tensor flatten() const;
  /// Entries of layer l (1-based) concatenated.
  Tensor flatten_layer(std::size_t l) const;
  std::size_t size() const;
  bool same_structure(const GradientBundle& other) const;

  void add_scaled(const GradientBundle& other, double factor);
  void scale_by(double factor);
};

/// 0.5 * ||output - y||^2, or -log softmax(output)[y].
double loss_value(const Tensor& output, const Label& label, LossKind loss);
/// dLoss/d output: output - y, or softmax(output) - onehot(y).
Tensor loss_gradient(const Tensor& output, const Label& label, LossKind loss);

struct LossAndTarget {
  double loss = 0.0;
  TargetSignal target;
};

/// Loss of the network output and the analytic output target T_L, in 64-bit.
LossAndTarget loss_and_output_target(const Network& net, const Tensor& input, const Label& label,
                                     LossKind loss);

struct LayerVjp {
  Tensor downstream;           // J^T upstream
  std::vector<Tensor> grads;   // parameter gradients, same order as parameters(layer)
};

/// Exact vector-Jacobian product of one layer at `input`, in 64-bit.
LayerVjp layer_vjp(const Layer& layer, const Tensor& input, const Tensor& upstream);

/// Exact Jacobian d layer(x) / dx at `input`, [out x in], assembled row by row.
Tensor layer_jacobian(const Layer& layer, const Tensor& input);

struct BackpropResult {
  double loss = 0.0;
  GradientBundle gradients;
  /// dLoss/da_l for every boundary l = 0..L.
  std::vector<Tensor> boundary_targets;
};

/// Reverse sweep over the whole chain. Always evaluates in 64-bit, whatever the
/// network's policy. If a ledger is given it is charged one forward and one
/// backward unit per layer.
BackpropResult backprop(const Network& net, const Tensor& input, const Label& label, LossKind loss,
                        QueryLedger* ledger = nullptr);

}  // namespace hzo
