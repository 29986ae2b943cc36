#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "hzo/ledger.h"
#include "hzo/network.h"
#include "hzo/oracle.h"

namespace hzo {

/// Spatial positions (h, w) partitioned into groups whose members are at
/// least `separation` apart in the infinity norm.
struct DisjointIndexSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t separation = 1;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> groups;

  std::size_t largest_group() const;
};

/// Residue-class tiling: group (p, q) holds every (h, w) with h = p and
/// w = q (mod R). Empty classes are dropped, leaving min(R,H) * min(R,W) groups.
DisjointIndexSet build_disjoint_groups(std::size_t height, std::size_t width, std::size_t r);

/// True when every layer in `span` is a convolution.
bool is_conv_span(const Network& net, const Span& span);

/// R = 1 + sum(k_i - 1) over the convolutions of `span`.
/// Throws InputError if the span holds a non-convolutional layer.
std::size_t receptive_field(const Network& net, const Span& span);

/// T_k = J^T T_j for a conv-only right span, estimated with batched
/// perturbations: each group and input channel costs one +/- pair of span
/// forwards that perturbs every group position at once. The response of each
/// position is read from the output window of radius floor(R/2) around it.
/// `groups` must be built for the span's feature-map extent.
TargetSignal spp_estimate_jacobian_action(const Network& net, const Span& right,
                                          const Tensor& a_k, const TargetSignal& t_j,
                                          double epsilon, const DisjointIndexSet& groups,
                                          QueryLedger* ledger = nullptr, unsigned threads = 1,
                                          PrecisionPolicy policy = {}, int level = 0);

/// Same quantity, one position and channel at a time (2*C*H*W span forwards).
TargetSignal sequential_jacobian_action(const Network& net, const Span& right, const Tensor& a_k,
                                        const TargetSignal& t_j, double epsilon,
                                        QueryLedger* ledger = nullptr, unsigned threads = 1,
                                        PrecisionPolicy policy = {}, int level = 0);

}  // namespace hzo
