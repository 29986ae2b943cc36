#include "hzo/analysis.h"

#include <algorithm>
#include <cmath>

#include "hzo/errors.h"
#include "hzo/oracle.h"
#include "hzo/rng.h"

namespace hzo {
namespace {

std::uint64_t recursive_count(std::span<const std::size_t> widths, std::size_t first,
                              std::size_t last) {
  if (first >= last) return 0;
  const std::size_t k = (first + last) / 2;
  return 2 * static_cast<std::uint64_t>(widths[k]) * (last - k) +
         recursive_count(widths, k + 1, last) + recursive_count(widths, first, k);
}

}  // namespace

Cosine cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine similarity of " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " entries");
  }
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < 1e-300 || nb < 1e-300) return {0.0, true};
  const double rho = dot(a, b) / (na * nb);
  return {std::clamp(rho, -1.0, 1.0), false};
}

Cosine cosine_similarity(const GradientBundle& g, const GradientBundle& h) {
  if (!g.same_structure(h)) throw DimensionError("cosine similarity of mismatched bundles");
  return cosine_similarity(g.flatten(), h.flatten());
}

double relative_error(const GradientBundle& estimate, const GradientBundle& reference) {
  if (!estimate.same_structure(reference)) throw DimensionError("mismatched bundles");
  const Tensor e = estimate.flatten();
  const Tensor r = reference.flatten();
  return norm2(sub(e, r)) / norm2(r);
}

GradCheckReport make_report(const GradientBundle& estimate, const GradientBundle& oracle,
                            RunEcho echo) {
  if (!estimate.same_structure(oracle)) throw DimensionError("mismatched bundles");
  GradCheckReport r;
  r.echo = std::move(echo);
  for (std::size_t l = 1; l <= oracle.layers.size(); ++l) {
    const Tensor el = estimate.flatten_layer(l);
    const Tensor ol = oracle.flatten_layer(l);
    r.layer_cosine.push_back(cosine_similarity(el, ol).value);
    r.layer_oracle_norm.push_back(norm2(ol));
    r.layer_error_norm.push_back(norm2(sub(el, ol)));
  }
  const Tensor e = estimate.flatten();
  const Tensor o = oracle.flatten();
  r.global_cosine = cosine_similarity(e, o).value;
  r.oracle_norm = norm2(o);
  r.estimate_norm = norm2(e);
  r.error_norm = norm2(sub(e, o));
  return r;
}

double error_envelope(double lip, double beta, double delta, std::size_t depth) {
  if (!(lip > 0.0)) throw InputError("Lipschitz constant must be positive");
  // Summing the geometric series directly is exact at lip = 1 and continuous around it.
  double sum = 0.0;
  double term = 1.0;
  for (std::size_t l = 0; l < depth; ++l) {
    sum += term;
    term *= lip;
  }
  return beta * delta * delta * sum;
}

double envelope_fit_residual(std::span<const double> depths, std::span<const double> errors,
                             double lip) {
  if (depths.size() != errors.size() || depths.size() < 2) {
    throw InputError("envelope fit needs matching depth/error lists of length >= 2");
  }
  std::vector<double> diff(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!(errors[i] > 0.0)) throw InputError("envelope fit needs positive errors");
    diff[i] = std::log(errors[i]) -
              std::log(error_envelope(lip, 1.0, 1.0, static_cast<std::size_t>(depths[i])));
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  return ss;
}

std::optional<double> curvature_bound(Activation act) {
  switch (act) {
    case Activation::Identity: return 0.0;
    case Activation::ReLU: return std::nullopt;
    case Activation::GELU:
    case Activation::Tanh: {
      // Dense scan of |act''|; both functions have their extremum well inside [-6, 6].
      double best = 0.0;
      for (int i = -600000; i <= 600000; ++i) {
        best = std::max(best, std::fabs(activate_second_derivative(act, i * 1e-5)));
      }
      return best;
    }
  }
  return std::nullopt;
}

double spectral_norm(const Tensor& matrix, std::size_t iterations, std::uint64_t seed) {
  if (matrix.rank() != 2) throw DimensionError("spectral norm needs a matrix");
  Rng rng(seed);
  Tensor v = gaussian({matrix.extent(1)}, 1.0, rng);
  double nv = norm2(v);
  if (nv == 0.0) return 0.0;
  v = scale(v, 1.0 / nv);
  for (std::size_t it = 0; it < iterations; ++it) {
    const Tensor w = matvec_transposed(matrix, matvec(matrix, v));
    const double nw = norm2(w);
    if (nw == 0.0) return 0.0;
    v = scale(w, 1.0 / nw);
  }
  return norm2(matvec(matrix, v));
}

LipschitzEstimate estimate_lipschitz(const Network& net, const Tensor& reference_input,
                                     std::size_t iterations, std::uint64_t seed) {
  LipschitzEstimate est;
  Tensor a = reference_input;
  for (const auto& layer : net.layers()) {
    const double s = spectral_norm(layer_jacobian(layer, a), iterations, seed);
    est.per_layer.push_back(s);
    est.network *= s;
    a = apply_layer(layer, a, {});
  }
  return est;
}

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) {
    throw InputError("log-log fit needs at least 3 (x, y) pairs");
  }
  const auto n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InputError("log-log fit needs positive values");
    sx += std::log(xs[i]);
    sy += std::log(ys[i]);
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InputError("log-log fit needs distinct x values");
  return sxy / sxx;
}

std::uint64_t predicted_queries(std::uint64_t width, std::uint64_t depth) {
  if (depth == 0) throw InputError("depth must be at least 1");
  std::vector<std::size_t> widths(depth + 1, width);
  return predicted_queries(widths);
}

std::uint64_t predicted_queries(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw InputError("need widths M_0..M_L with L >= 1");
  return recursive_count(widths, 1, widths.size() - 1);
}

}  // namespace hzo
