#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace hzo {

/// What a forward query was spent on.
enum class QueryKind {
  Jacobian,      // perturbed pass through a right span during bisection
  LeftForward,   // reference pass producing the activation at a bisection point
  LocalStep,     // single-layer evaluation at a recursion leaf
  Reference,     // unperturbed full pass producing the output and loss
  Perturbation,  // perturbed passes of the baseline estimators
  Backward,      // analytic backward sweep (backprop), one unit per layer
  Other,
};

std::string to_string(QueryKind kind);

/// Counts forward work. Jacobian queries are additionally broken down by
/// recursion level; every other kind goes into `by_kind`, so
/// layer_evals == jacobian_layer_evals() + sum(by_kind) always holds.
class QueryLedger {
 public:
  /// Charges `forwards` span-forwards of `depth` layers each.
  void charge(QueryKind kind, std::uint64_t forwards, std::uint64_t depth, int level = 0);

  void merge(const QueryLedger& other);

  std::uint64_t layer_evals() const noexcept { return layer_evals_; }
  std::uint64_t span_forwards() const noexcept { return span_forwards_; }
  const std::map<int, std::uint64_t>& per_level() const noexcept { return per_level_; }
  const std::map<QueryKind, std::uint64_t>& by_kind() const noexcept { return by_kind_; }

  std::uint64_t jacobian_layer_evals() const;
  std::uint64_t layer_evals_of(QueryKind kind) const;

 private:
  std::uint64_t layer_evals_ = 0;
  std::uint64_t span_forwards_ = 0;
  std::map<int, std::uint64_t> per_level_;
  std::map<QueryKind, std::uint64_t> by_kind_;
};

}  // namespace hzo
