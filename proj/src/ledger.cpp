#include "hzo/ledger.h"

namespace hzo {

std::string to_string(QueryKind kind) {
  switch (kind) {
    case QueryKind::Jacobian: return "jacobian";
    case QueryKind::LeftForward: return "left_forward";
    case QueryKind::LocalStep: return "local_step";
    case QueryKind::Reference: return "reference";
    case QueryKind::Perturbation: return "perturbation";
    case QueryKind::Backward: return "backward";
    case QueryKind::Other: return "other";
  }
  return "other";
}

void QueryLedger::charge(QueryKind kind, std::uint64_t forwards, std::uint64_t depth, int level) {
  const std::uint64_t evals = forwards * depth;
  layer_evals_ += evals;
  span_forwards_ += forwards;
  if (kind == QueryKind::Jacobian) {
    per_level_[level] += evals;
  } else {
    by_kind_[kind] += evals;
  }
}

void QueryLedger::merge(const QueryLedger& other) {
  layer_evals_ += other.layer_evals_;
  span_forwards_ += other.span_forwards_;
  for (const auto& [level, n] : other.per_level_) per_level_[level] += n;
  for (const auto& [kind, n] : other.by_kind_) by_kind_[kind] += n;
}

std::uint64_t QueryLedger::jacobian_layer_evals() const {
  std::uint64_t total = 0;
  for (const auto& [level, n] : per_level_) total += n;
  return total;
}

std::uint64_t QueryLedger::layer_evals_of(QueryKind kind) const {
  if (kind == QueryKind::Jacobian) return jacobian_layer_evals();
  const auto it = by_kind_.find(kind);
  return it == by_kind_.end() ? 0 : it->second;
}

}  // namespace hzo
