#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hzo/network.h"
#include "hzo/oracle.h"
#include "hzo/tensor.h"

namespace hzo {

struct Cosine {
  double value = 0.0;
  /// Either vector had norm below 1e-300; value is 0 in that case.
  bool zero_norm = false;
};

/// <a, b> / (|a| |b|) over the flattened entries.
Cosine cosine_similarity(const Tensor& a, const Tensor& b);
Cosine cosine_similarity(const GradientBundle& g, const GradientBundle& h);

/// |estimate - reference| / |reference| over all entries.
double relative_error(const GradientBundle& estimate, const GradientBundle& reference);

struct RunEcho {
  std::string engine;
  std::string arch;
  std::string activation;
  std::size_t depth = 0;
  std::size_t width = 0;
  double epsilon = 0.0;
  Precision precision = Precision::Double;
  std::uint64_t seed = 0;
};

/// Fidelity of an estimated gradient against the backprop oracle.
struct GradCheckReport {
  std::vector<double> layer_cosine;  // rho_l, layer 1..L; 0 for parameterless layers
  std::vector<double> layer_oracle_norm;
  std::vector<double> layer_error_norm;
  double global_cosine = 0.0;
  double oracle_norm = 0.0;
  double estimate_norm = 0.0;
  double error_norm = 0.0;
  RunEcho echo;
};

GradCheckReport make_report(const GradientBundle& estimate, const GradientBundle& oracle,
                            RunEcho echo);

/// beta * delta^2 * sum_{l<L} lip^l, i.e. beta delta^2 (lip^L - 1)/(lip - 1)
/// with its lip -> 1 limit beta delta^2 L. The multiplicative constant is
/// normalized to one.
double error_envelope(double lip, double beta, double delta, std::size_t depth);

/// Least-squares misfit of log(errors) against log(envelope(lip, L)) with a
/// free additive offset (a free multiplicative constant on the envelope).
double envelope_fit_residual(std::span<const double> depths, std::span<const double> errors,
                             double lip);

/// sup |act''| where finite; nullopt for ReLU, whose second derivative is singular.
std::optional<double> curvature_bound(Activation act);

/// Largest singular value by power iteration on M^T M from a seeded start.
double spectral_norm(const Tensor& matrix, std::size_t iterations = 200, std::uint64_t seed = 7);

struct LipschitzEstimate {
  std::vector<double> per_layer;
  /// Product of the per-layer values.
  double network = 1.0;
};

/// Spectral norm of each layer's exact Jacobian at the activations produced
/// by `reference_input`.
LipschitzEstimate estimate_lipschitz(const Network& net, const Tensor& reference_input,
                                     std::size_t iterations = 200, std::uint64_t seed = 7);

/// OLS slope of log(ys) against log(xs). Needs >= 3 points, all positive.
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

/// Jacobian layer evaluations of the full recursion over a depth-L stack of
/// width-M boundaries: sum over bisections of 2 * M * (right depth). Equals
/// M * L * log2(L) for power-of-two L.
std::uint64_t predicted_queries(std::uint64_t width, std::uint64_t depth);

/// Same count for arbitrary boundary widths M_0..M_L.
std::uint64_t predicted_queries(std::span<const std::size_t> widths);

}  // namespace hzo
