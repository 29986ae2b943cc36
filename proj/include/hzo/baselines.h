#pragma once

#include <cstddef>

#include "hzo/ledger.h"
#include "hzo/network.h"
#include "hzo/oracle.h"
#include "hzo/rng.h"

namespace hzo {

/// Reference zeroth-order estimators.
struct BaselineKind {
  enum class Type { ActivationPerturbation, WeightCoordinate, WeightRandomDirections };
  Type type = Type::WeightCoordinate;
  /// Direction count for WeightRandomDirections.
  std::size_t directions = 1;
};

/// Neuron-wise perturbation: every boundary target T_l (l < L) is a central
/// difference of the loss through the downstream span N_{l+1:L}; leaf
/// gradients then follow the exact local rule. Costs 2 * M_l * (L - l) layer
/// evaluations per boundary plus one reference pass.
GradientBundle zo_activation_gradient(const Network& net, const Tensor& input, const Label& label,
                                      LossKind loss, double epsilon, QueryLedger* ledger = nullptr,
                                      unsigned threads = 1);

/// Weight-space perturbation.
///
/// WeightCoordinate takes a central difference of the loss along every
/// parameter (2 full forwards each). WeightRandomDirections averages the
/// two-point estimate along q unit-norm Gaussian directions u:
/// g = (1/q) sum_i [L(theta + eps u_i) - L(theta - eps u_i)] / (2 eps) * u_i.
/// Direction i is drawn from a stream derived from one draw of `rng`, so the
/// result does not depend on `threads`.
GradientBundle zo_weight_gradient(const Network& net, const Tensor& input, const Label& label,
                                  LossKind loss, const BaselineKind& kind, double epsilon, Rng& rng,
                                  QueryLedger* ledger = nullptr, unsigned threads = 1);

}  // namespace hzo
