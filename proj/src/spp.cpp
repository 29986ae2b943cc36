#include "hzo/spp.h"

#include <algorithm>

#include "hzo/errors.h"
#include "hzo/parallel.h"

namespace hzo {
namespace {

struct MapGeometry {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t height;
  std::size_t width;
};

MapGeometry geometry(const Network& net, const Span& span) {
  net.validate_span(span);
  if (!is_conv_span(net, span)) {
    throw InputError("span " + to_string(span) +
                     " contains a non-convolutional layer; spatial perturbation needs a conv-only span");
  }
  const auto& first = std::get<Conv2D>(net.layer(span.first));
  const auto& last = std::get<Conv2D>(net.layer(span.last));
  return {first.in_channels(), last.out_channels(), first.height, first.width};
}

void check_inputs(const Network& net, const Span& span, const Tensor& a_k, const TargetSignal& t_j,
                  double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (a_k.size() != net.width(span.first - 1)) {
    throw DimensionError("activation width " + std::to_string(a_k.size()) + " vs span input " +
                         std::to_string(net.width(span.first - 1)));
  }
  if (t_j.value.size() != net.width(span.last)) {
    throw DimensionError("target width " + std::to_string(t_j.value.size()) + " vs span output " +
                         std::to_string(net.width(span.last)));
  }
}

}  // namespace

std::size_t DisjointIndexSet::largest_group() const {
  std::size_t best = 0;
  for (const auto& g : groups) best = std::max(best, g.size());
  return best;
}

DisjointIndexSet build_disjoint_groups(std::size_t height, std::size_t width, std::size_t r) {
  if (height == 0 || width == 0 || r == 0) throw InputError("H, W and R must be positive");
  DisjointIndexSet set{height, width, r, {}};
  const std::size_t rows = std::min(r, height);
  const std::size_t cols = std::min(r, width);
  set.groups.reserve(rows * cols);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t q = 0; q < cols; ++q) {
      std::vector<std::pair<std::size_t, std::size_t>> group;
      for (std::size_t h = p; h < height; h += r) {
        for (std::size_t w = q; w < width; w += r) group.emplace_back(h, w);
      }
      set.groups.push_back(std::move(group));
    }
  }
  return set;
}

bool is_conv_span(const Network& net, const Span& span) {
  net.validate_span(span);
  for (std::size_t l = span.first; l <= span.last; ++l) {
    if (!std::holds_alternative<Conv2D>(net.layer(l))) return false;
  }
  return true;
}

std::size_t receptive_field(const Network& net, const Span& span) {
  if (!is_conv_span(net, span)) {
    throw InputError("receptive field is only defined for conv-only spans, got " + to_string(span));
  }
  std::size_t r = 1;
  for (std::size_t l = span.first; l <= span.last; ++l) {
    r += std::get<Conv2D>(net.layer(l)).kernel_size() - 1;
  }
  return r;
}

TargetSignal spp_estimate_jacobian_action(const Network& net, const Span& right,
                                          const Tensor& a_k, const TargetSignal& t_j,
                                          double epsilon, const DisjointIndexSet& groups,
                                          QueryLedger* ledger, unsigned threads,
                                          PrecisionPolicy policy, int level) {
  const MapGeometry g = geometry(net, right);
  check_inputs(net, right, a_k, t_j, epsilon);
  if (groups.height != g.height || groups.width != g.width) {
    throw DimensionError("index groups built for " + std::to_string(groups.height) + "x" +
                         std::to_string(groups.width) + " but feature map is " +
                         std::to_string(g.height) + "x" + std::to_string(g.width));
  }
  const auto radius = static_cast<std::ptrdiff_t>(receptive_field(net, right) / 2);
  const auto hh = static_cast<std::ptrdiff_t>(g.height);
  const auto ww = static_cast<std::ptrdiff_t>(g.width);
  const std::size_t plane = g.height * g.width;

  Tensor t_k(a_k.shape());
  const std::size_t tasks = groups.groups.size() * g.in_channels;
  parallel_for(tasks, threads, [&](std::size_t task) {
    const auto& group = groups.groups[task / g.in_channels];
    const std::size_t channel = task % g.in_channels;
    Tensor plus = a_k;
    Tensor minus = a_k;
    for (const auto& [h, w] : group) {
      const std::size_t idx = channel * plane + h * g.width + w;
      plus[idx] = policy.round(a_k[idx] + epsilon);
      minus[idx] = policy.round(a_k[idx] - epsilon);
    }
    const Tensor fp = forward(net, right, plus);
    const Tensor fm = forward(net, right, minus);
    for (const auto& [h, w] : group) {
      double acc = 0.0;
      const auto ph = static_cast<std::ptrdiff_t>(h);
      const auto pw = static_cast<std::ptrdiff_t>(w);
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        for (std::ptrdiff_t oy = std::max<std::ptrdiff_t>(0, ph - radius);
             oy <= std::min(hh - 1, ph + radius); ++oy) {
          for (std::ptrdiff_t ox = std::max<std::ptrdiff_t>(0, pw - radius);
               ox <= std::min(ww - 1, pw + radius); ++ox) {
            const std::size_t o = co * plane + static_cast<std::size_t>(oy * ww + ox);
            const double d = policy.round(policy.round(fp[o] - fm[o]) / (2.0 * epsilon));
            acc += d * t_j.value[o];
          }
        }
      }
      t_k[channel * plane + h * g.width + w] = policy.round(acc);
    }
  });
  if (ledger) ledger->charge(QueryKind::Jacobian, 2 * tasks, right.depth(), level);
  return {right.first - 1, std::move(t_k)};
}

TargetSignal sequential_jacobian_action(const Network& net, const Span& right, const Tensor& a_k,
                                        const TargetSignal& t_j, double epsilon,
                                        QueryLedger* ledger, unsigned threads,
                                        PrecisionPolicy policy, int level) {
  geometry(net, right);
  check_inputs(net, right, a_k, t_j, epsilon);
  Tensor t_k(a_k.shape());
  parallel_for(a_k.size(), threads, [&](std::size_t idx) {
    Tensor plus = a_k;
    Tensor minus = a_k;
    plus[idx] = policy.round(a_k[idx] + epsilon);
    minus[idx] = policy.round(a_k[idx] - epsilon);
    const Tensor fp = forward(net, right, plus);
    const Tensor fm = forward(net, right, minus);
    double acc = 0.0;
    for (std::size_t o = 0; o < fp.size(); ++o) {
      const double d = policy.round(policy.round(fp[o] - fm[o]) / (2.0 * epsilon));
      acc += d * t_j.value[o];
    }
    t_k[idx] = policy.round(acc);
  });
  if (ledger) ledger->charge(QueryKind::Jacobian, 2 * a_k.size(), right.depth(), level);
  return {right.first - 1, std::move(t_k)};
}

}  // namespace hzo
