#include "hzo/oracle.h"

#include <algorithm>
#include <cmath>

#include "hzo/errors.h"

namespace hzo {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

struct DenseVjp {
  Tensor downstream;
  Tensor dw;
  Tensor db;
};

DenseVjp dense_vjp(const Dense& d, const Tensor& input, const Tensor& upstream) {
  const Tensor z = dense_preactivation(d, input, {});
  if (upstream.size() != z.size()) {
    throw DimensionError("dense vjp: upstream width " + std::to_string(upstream.size()) +
                         " vs output width " + std::to_string(z.size()));
  }
  Tensor delta(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    delta[i] = upstream[i] * activate_derivative(d.act, z[i]);
  }
  return {matvec_transposed(d.weight, delta), outer(delta, input), delta};
}

LayerVjp conv_vjp(const Conv2D& c, const Tensor& input, const Tensor& upstream) {
  const Tensor z = conv_preactivation(c, input, {});
  if (upstream.size() != z.size()) throw DimensionError("conv vjp: upstream width mismatch");
  const std::size_t cin = c.in_channels();
  const std::size_t cout = c.out_channels();
  const std::size_t k = c.kernel_size();
  const std::size_t h = c.height;
  const std::size_t w = c.width;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor delta(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    delta[i] = upstream[i] * activate_derivative(c.act, z[i]);
  }
  Tensor dk(c.kernel.shape());
  Tensor db(c.bias.shape());
  Tensor down(input.shape());
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double g = delta[(co * h + y) * w + x];
        db[co] += g;
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t in_idx =
                  (ci * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx);
              const std::size_t k_idx = ((co * cin + ci) * k + ky) * k + kx;
              dk[k_idx] += g * input[in_idx];
              down[in_idx] += g * c.kernel[k_idx];
            }
          }
        }
      }
    }
  }
  return {std::move(down), {std::move(dk), std::move(db)}};
}

}  // namespace

std::string to_string(LossKind loss) {
  return loss == LossKind::MSE ? "mse" : "ce";
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::MSE;
  if (name == "ce" || name == "cross-entropy" || name == "softmax-ce") {
    return LossKind::SoftmaxCrossEntropy;
  }
  throw InputError("unknown loss '" + name + "'");
}

GradientBundle GradientBundle::zeros_like(const Network& net) {
  GradientBundle g;
  g.layers.reserve(net.depth());
  for (const auto& layer : net.layers()) {
    std::vector<Tensor> grads;
    for (const Tensor* p : parameters(layer)) grads.emplace_back(p->shape());
    g.layers.push_back(std::move(grads));
  }
  return g;
}

Tensor GradientBundle::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto& layer : layers) {
    for (const auto& t : layer) flat.insert(flat.end(), t.values().begin(), t.values().end());
  }
  return Tensor::vector(std::move(flat));
}

Tensor GradientBundle::flatten_layer(std::size_t l) const {
  std::vector<double> flat;
  for (const auto& t : layer(l)) flat.insert(flat.end(), t.values().begin(), t.values().end());
  return Tensor::vector(std::move(flat));
}

std::size_t GradientBundle::size() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& t : layer) n += t.size();
  }
  return n;
}

bool GradientBundle::same_structure(const GradientBundle& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != other.layers[l].size()) return false;
    for (std::size_t t = 0; t < layers[l].size(); ++t) {
      if (!layers[l][t].same_shape(other.layers[l][t])) return false;
    }
  }
  return true;
}

void GradientBundle::add_scaled(const GradientBundle& other, double factor) {
  if (!same_structure(other)) throw DimensionError("gradient bundles differ in structure");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t t = 0; t < layers[l].size(); ++t) axpy(layers[l][t], factor, other.layers[l][t]);
  }
}

void GradientBundle::scale_by(double factor) {
  for (auto& layer : layers) {
    for (auto& t : layer) {
      for (double& v : t.values()) v *= factor;
    }
  }
}

double loss_value(const Tensor& output, const Label& label, LossKind loss) {
  if (loss == LossKind::MSE) {
    const auto* target = std::get_if<Tensor>(&label);
    if (!target) throw InputError("MSE loss needs a target vector");
    const Tensor diff = sub(output, *target);
    return 0.5 * dot(diff, diff);
  }
  const auto* cls = std::get_if<std::size_t>(&label);
  if (!cls) throw InputError("cross-entropy loss needs a class index");
  if (*cls >= output.size()) {
    throw InputError("class index " + std::to_string(*cls) + " out of range for " +
                     std::to_string(output.size()) + " outputs");
  }
  const double mx = *std::max_element(output.values().begin(), output.values().end());
  double sum = 0.0;
  for (double v : output.values()) sum += std::exp(v - mx);
  return mx + std::log(sum) - output[*cls];
}

Tensor loss_gradient(const Tensor& output, const Label& label, LossKind loss) {
  if (loss == LossKind::MSE) {
    const auto* target = std::get_if<Tensor>(&label);
    if (!target) throw InputError("MSE loss needs a target vector");
    return sub(output, *target);
  }
  const auto* cls = std::get_if<std::size_t>(&label);
  if (!cls) throw InputError("cross-entropy loss needs a class index");
  if (*cls >= output.size()) {
    throw InputError("class index " + std::to_string(*cls) + " out of range for " +
                     std::to_string(output.size()) + " outputs");
  }
  const double mx = *std::max_element(output.values().begin(), output.values().end());
  Tensor g(output.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    g[i] = std::exp(output[i] - mx);
    sum += g[i];
  }
  for (double& v : g.values()) v /= sum;
  g[*cls] -= 1.0;
  return g;
}

LossAndTarget loss_and_output_target(const Network& net, const Tensor& input, const Label& label,
                                     LossKind loss) {
  Tensor a = input;
  for (const auto& layer : net.layers()) a = apply_layer(layer, a, {});
  return {loss_value(a, label, loss), {net.depth(), loss_gradient(a, label, loss)}};
}

LayerVjp layer_vjp(const Layer& layer, const Tensor& input, const Tensor& upstream) {
  if (input.size() != input_width(layer)) {
    throw DimensionError("vjp: input width " + std::to_string(input.size()) + " vs layer width " +
                         std::to_string(input_width(layer)));
  }
  return std::visit(
      Overloaded{
          [&](const Dense& d) {
            auto r = dense_vjp(d, input, upstream);
            return LayerVjp{std::move(r.downstream), {std::move(r.dw), std::move(r.db)}};
          },
          [&](const Residual& res) {
            std::vector<Tensor> inputs{input};
            for (std::size_t i = 0; i + 1 < res.inner.size(); ++i) {
              const auto& d = res.inner[i];
              inputs.push_back(apply_activation(d.act, dense_preactivation(d, inputs.back(), {}), {}));
            }
            std::vector<Tensor> grads(2 * res.inner.size());
            Tensor g = upstream;
            for (std::size_t i = res.inner.size(); i-- > 0;) {
              auto r = dense_vjp(res.inner[i], inputs[i], g);
              grads[2 * i] = std::move(r.dw);
              grads[2 * i + 1] = std::move(r.db);
              g = std::move(r.downstream);
            }
            return LayerVjp{add(upstream, g), std::move(grads)};
          },
          [&](const Conv2D& c) { return conv_vjp(c, input, upstream); },
          [&](const Flatten& f) {
            if (upstream.size() != f.width) throw DimensionError("flatten vjp: width mismatch");
            return LayerVjp{Tensor::vector(upstream.data()), {}};
          },
      },
      layer);
}

Tensor layer_jacobian(const Layer& layer, const Tensor& input) {
  const std::size_t out = output_width(layer);
  const std::size_t in = input_width(layer);
  Tensor j({out, in});
  for (std::size_t r = 0; r < out; ++r) {
    const Tensor row = layer_vjp(layer, input, Tensor::basis(out, r)).downstream;
    for (std::size_t c = 0; c < in; ++c) j.at(r, c) = row[c];
  }
  return j;
}

BackpropResult backprop(const Network& net, const Tensor& input, const Label& label, LossKind loss,
                        QueryLedger* ledger) {
  if (input.size() != net.width(0)) {
    throw DimensionError("backprop: input width " + std::to_string(input.size()) + " vs " +
                         std::to_string(net.width(0)));
  }
  const std::size_t depth = net.depth();
  std::vector<Tensor> acts{input};
  acts.reserve(depth + 1);
  for (const auto& layer : net.layers()) acts.push_back(apply_layer(layer, acts.back(), {}));

  BackpropResult result;
  result.loss = loss_value(acts.back(), label, loss);
  result.gradients.layers.resize(depth);
  result.boundary_targets.resize(depth + 1);
  result.boundary_targets[depth] = loss_gradient(acts.back(), label, loss);
  for (std::size_t l = depth; l >= 1; --l) {
    auto vjp = layer_vjp(net.layer(l), acts[l - 1], result.boundary_targets[l]);
    result.boundary_targets[l - 1] = std::move(vjp.downstream);
    result.gradients.layer(l) = std::move(vjp.grads);
  }
  if (ledger) {
    ledger->charge(QueryKind::Reference, 1, depth);
    ledger->charge(QueryKind::Backward, 1, depth);
  }
  return result;
}

}  // namespace hzo
