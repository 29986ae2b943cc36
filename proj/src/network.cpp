#include "hzo/network.h"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "hzo/errors.h"

namespace hzo {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_dense(const Dense& d) {
  if (d.weight.rank() != 2 || d.bias.rank() != 1 || d.bias.size() != d.weight.extent(0)) {
    throw DimensionError("dense layer: weight " + shape_string(d.weight.shape()) + ", bias " +
                         shape_string(d.bias.shape()));
  }
}

void check_layer(const Layer& layer) {
  std::visit(Overloaded{
                 [](const Dense& d) { check_dense(d); },
                 [](const Residual& r) {
                   if (r.inner.empty()) throw DimensionError("residual block without inner layers");
                   std::size_t w = r.inner.front().weight.extent(1);
                   const std::size_t in = w;
                   for (const auto& d : r.inner) {
                     check_dense(d);
                     if (d.weight.extent(1) != w) {
                       throw DimensionError("residual inner widths do not chain");
                     }
                     w = d.weight.extent(0);
                   }
                   if (w != in) {
                     throw DimensionError("residual block maps width " + std::to_string(in) +
                                          " to " + std::to_string(w));
                   }
                 },
                 [](const Conv2D& c) {
                   if (c.kernel.rank() != 4 || c.kernel.extent(2) != c.kernel.extent(3) ||
                       c.kernel.extent(2) % 2 == 0 || c.bias.size() != c.kernel.extent(0) ||
                       c.height == 0 || c.width == 0) {
                     throw DimensionError("conv layer: kernel " + shape_string(c.kernel.shape()) +
                                          " must be [Cout x Cin x k x k] with odd k");
                   }
                 },
                 [](const Flatten&) {},
             },
             layer);
}

// Little-endian byte writer / reader for checkpoints.

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1, "u8");
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
    }
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_values(Writer& w, const Tensor& t) {
  for (double v : t.values()) w.f64(v);
}

Tensor read_values(Reader& r, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  r.need(t.size() * 8, "parameters");
  for (double& v : t.values()) v = r.f64();
  return t;
}

void write_dense(Writer& w, const Dense& d) {
  w.u8(static_cast<std::uint8_t>(LayerKind::Dense));
  w.u8(static_cast<std::uint8_t>(d.act));
  w.u32(2);
  w.u64(d.weight.extent(0));
  w.u64(d.weight.extent(1));
  write_values(w, d.weight);
  write_values(w, d.bias);
}

Activation read_activation(Reader& r) {
  const std::size_t at = r.offset();
  const std::uint8_t a = r.u8();
  if (a > static_cast<std::uint8_t>(Activation::Tanh)) {
    throw ParseError("unknown activation code " + std::to_string(a), at);
  }
  return static_cast<Activation>(a);
}

std::vector<std::size_t> read_extents(Reader& r, std::uint32_t expected_rank) {
  const std::size_t at = r.offset();
  const std::uint32_t rank = r.u32();
  if (rank != expected_rank) {
    throw ParseError("expected rank " + std::to_string(expected_rank) + ", found " +
                         std::to_string(rank),
                     at);
  }
  std::vector<std::size_t> extents(rank);
  for (auto& e : extents) {
    const std::size_t eat = r.offset();
    const std::uint64_t v = r.u64();
    if (v == 0 || v > (std::uint64_t{1} << 32)) throw ParseError("implausible extent", eat);
    e = static_cast<std::size_t>(v);
  }
  return extents;
}

Dense read_dense_body(Reader& r, Activation act) {
  const auto ext = read_extents(r, 2);
  Dense d;
  d.act = act;
  d.weight = read_values(r, {ext[0], ext[1]});
  d.bias = read_values(r, {ext[0]});
  return d;
}

Layer read_layer(Reader& r) {
  const std::size_t at = r.offset();
  const std::uint8_t kind = r.u8();
  const Activation act = read_activation(r);
  switch (static_cast<LayerKind>(kind)) {
    case LayerKind::Dense: return read_dense_body(r, act);
    case LayerKind::Residual: {
      const auto ext = read_extents(r, 1);
      Residual res;
      for (std::size_t i = 0; i < ext[0]; ++i) {
        const std::size_t inner_at = r.offset();
        const std::uint8_t inner_kind = r.u8();
        if (inner_kind != static_cast<std::uint8_t>(LayerKind::Dense)) {
          throw ParseError("residual blocks may only contain dense layers", inner_at);
        }
        const Activation inner_act = read_activation(r);
        res.inner.push_back(read_dense_body(r, inner_act));
      }
      return res;
    }
    case LayerKind::Conv2D: {
      const auto ext = read_extents(r, 6);
      Conv2D c;
      c.act = act;
      c.height = ext[4];
      c.width = ext[5];
      c.kernel = read_values(r, {ext[0], ext[1], ext[2], ext[3]});
      c.bias = read_values(r, {ext[0]});
      return c;
    }
    case LayerKind::Flatten: {
      const auto ext = read_extents(r, 1);
      return Flatten{ext[0]};
    }
  }
  throw ParseError("unknown layer kind " + std::to_string(kind), at);
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::GELU: return "gelu";
    case Activation::Tanh: return "tanh";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "gelu") return Activation::GELU;
  if (name == "tanh") return Activation::Tanh;
  throw InputError("unknown activation '" + name + "'");
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::GELU: return x * normal_cdf(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::GELU: return normal_cdf(x) + x * normal_pdf(x);
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

double activate_second_derivative(Activation act, double x) {
  switch (act) {
    case Activation::Identity:
    case Activation::ReLU: return 0.0;
    case Activation::GELU: return normal_pdf(x) * (2.0 - x * x);
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
  }
  return 0.0;
}

LayerKind kind_of(const Layer& layer) { return static_cast<LayerKind>(layer.index()); }

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Residual: return "residual";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

std::size_t input_width(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& d) { return d.weight.extent(1); },
                        [](const Residual& r) { return r.inner.front().weight.extent(1); },
                        [](const Conv2D& c) { return c.in_channels() * c.height * c.width; },
                        [](const Flatten& f) { return f.width; },
                    },
                    layer);
}

std::size_t output_width(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& d) { return d.weight.extent(0); },
                        [](const Residual& r) { return r.inner.front().weight.extent(1); },
                        [](const Conv2D& c) { return c.out_channels() * c.height * c.width; },
                        [](const Flatten& f) { return f.width; },
                    },
                    layer);
}

std::vector<Tensor*> parameters(Layer& layer) {
  std::vector<Tensor*> out;
  std::visit(Overloaded{
                 [&](Dense& d) { out = {&d.weight, &d.bias}; },
                 [&](Residual& r) {
                   for (auto& d : r.inner) {
                     out.push_back(&d.weight);
                     out.push_back(&d.bias);
                   }
                 },
                 [&](Conv2D& c) { out = {&c.kernel, &c.bias}; },
                 [](Flatten&) {},
             },
             layer);
  return out;
}

std::vector<const Tensor*> parameters(const Layer& layer) {
  auto mutable_params = parameters(const_cast<Layer&>(layer));
  return {mutable_params.begin(), mutable_params.end()};
}

Tensor dense_preactivation(const Dense& dense, const Tensor& x, PrecisionPolicy policy) {
  const std::size_t rows = dense.weight.extent(0);
  const std::size_t cols = dense.weight.extent(1);
  if (x.size() != cols) {
    throw DimensionError("dense layer expects width " + std::to_string(cols) + ", got " +
                         std::to_string(x.size()));
  }
  Tensor z({rows});
  const double* w = dense.weight.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = dense.bias[r];
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    z[r] = policy.round(acc);
  }
  return z;
}

Tensor conv_preactivation(const Conv2D& conv, const Tensor& x, PrecisionPolicy policy) {
  const std::size_t cin = conv.in_channels();
  const std::size_t cout = conv.out_channels();
  const std::size_t k = conv.kernel_size();
  const std::size_t h = conv.height;
  const std::size_t w = conv.width;
  if (x.size() != cin * h * w) {
    throw DimensionError("conv layer expects width " + std::to_string(cin * h * w) + ", got " +
                         std::to_string(x.size()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const auto ww = static_cast<std::ptrdiff_t>(w);
  Tensor z({cout * h * w});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
      for (std::ptrdiff_t xx = 0; xx < ww; ++xx) {
        double acc = conv.bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(ky) - pad;
            if (sy < 0 || sy >= hh) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sx = xx + static_cast<std::ptrdiff_t>(kx) - pad;
              if (sx < 0 || sx >= ww) continue;
              acc += conv.kernel[((co * cin + ci) * k + ky) * k + kx] *
                     x[(ci * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
          }
        }
        z[(co * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(xx)] =
            policy.round(acc);
      }
    }
  }
  return z;
}

Tensor apply_activation(Activation act, const Tensor& z, PrecisionPolicy policy) {
  if (act == Activation::Identity) return z;
  Tensor a(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = policy.round(activate(act, z[i]));
  return a;
}

Tensor apply_layer(const Layer& layer, const Tensor& x, PrecisionPolicy policy) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) {
            return apply_activation(d.act, dense_preactivation(d, x, policy), policy);
          },
          [&](const Residual& r) {
            Tensor h = x;
            for (const auto& d : r.inner) {
              h = apply_activation(d.act, dense_preactivation(d, h, policy), policy);
            }
            return add(x, h, policy);
          },
          [&](const Conv2D& c) {
            return apply_activation(c.act, conv_preactivation(c, x, policy), policy);
          },
          [&](const Flatten& f) {
            if (x.size() != f.width) {
              throw DimensionError("flatten expects width " + std::to_string(f.width) +
                                   ", got " + std::to_string(x.size()));
            }
            return Tensor::vector(x.data());
          },
      },
      layer);
}

std::string to_string(const Span& span) {
  return "(" + std::to_string(span.first) + "," + std::to_string(span.last) + ")";
}

Network::Network(std::vector<Layer> layers, PrecisionPolicy policy)
    : layers_(std::move(layers)), policy_(policy) {
  if (layers_.empty()) throw DimensionError("network needs at least one layer");
  widths_.reserve(layers_.size() + 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    check_layer(layers_[l]);
    const std::size_t in = input_width(layers_[l]);
    if (l == 0) {
      widths_.push_back(in);
    } else if (widths_.back() != in) {
      throw DimensionError("layer " + std::to_string(l + 1) + " expects width " +
                           std::to_string(in) + " but layer " + std::to_string(l) +
                           " produces " + std::to_string(widths_.back()));
    }
    widths_.push_back(output_width(layers_[l]));
  }
  set_policy(policy);
}

void Network::set_policy(PrecisionPolicy policy) {
  policy_ = policy;
  for (auto& layer : layers_) {
    for (Tensor* p : parameters(layer)) round_in_place(*p, policy);
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const Tensor* p : parameters(layer)) n += p->size();
  }
  return n;
}

void Network::validate_span(const Span& span) const {
  if (span.first < 1 || span.first > span.last || span.last > depth()) {
    throw DimensionError("span " + to_string(span) + " outside network of depth " +
                         std::to_string(depth()));
  }
}

Tensor forward(const Network& net, const Span& span, const Tensor& input, QueryLedger* ledger,
               QueryKind kind, int level) {
  net.validate_span(span);
  if (input.size() != net.width(span.first - 1)) {
    throw DimensionError("span " + to_string(span) + " expects input width " +
                         std::to_string(net.width(span.first - 1)) + ", got " +
                         std::to_string(input.size()));
  }
  Tensor a = input;
  for (std::size_t l = span.first; l <= span.last; ++l) a = apply_layer(net.layer(l), a, net.policy());
  if (ledger) ledger->charge(kind, 1, span.depth(), level);
  return a;
}

std::vector<Tensor> activations(const Network& net, const Tensor& input, QueryLedger* ledger,
                                QueryKind kind) {
  if (input.size() != net.width(0)) {
    throw DimensionError("network expects input width " + std::to_string(net.width(0)) +
                         ", got " + std::to_string(input.size()));
  }
  std::vector<Tensor> out;
  out.reserve(net.depth() + 1);
  out.push_back(input);
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    out.push_back(apply_layer(net.layer(l), out.back(), net.policy()));
  }
  if (ledger) ledger->charge(kind, 1, net.depth());
  return out;
}

std::vector<std::uint8_t> serialize(const Network& net) {
  Writer w;
  w.raw("HZO1", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.depth()));
  for (const auto& layer : net.layers()) {
    std::visit(Overloaded{
                   [&](const Dense& d) { write_dense(w, d); },
                   [&](const Residual& r) {
                     w.u8(static_cast<std::uint8_t>(LayerKind::Residual));
                     w.u8(static_cast<std::uint8_t>(Activation::Identity));
                     w.u32(1);
                     w.u64(r.inner.size());
                     for (const auto& d : r.inner) write_dense(w, d);
                   },
                   [&](const Conv2D& c) {
                     w.u8(static_cast<std::uint8_t>(LayerKind::Conv2D));
                     w.u8(static_cast<std::uint8_t>(c.act));
                     w.u32(6);
                     for (std::size_t e : c.kernel.shape()) w.u64(e);
                     w.u64(c.height);
                     w.u64(c.width);
                     write_values(w, c.kernel);
                     write_values(w, c.bias);
                   },
                   [&](const Flatten& f) {
                     w.u8(static_cast<std::uint8_t>(LayerKind::Flatten));
                     w.u8(static_cast<std::uint8_t>(Activation::Identity));
                     w.u32(1);
                     w.u64(f.width);
                   },
               },
               layer);
  }
  return w.take();
}

Network deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (bytes[0] != 'H' || bytes[1] != 'Z' || bytes[2] != 'O' || bytes[3] != '1') {
    throw ParseError("bad magic, expected \"HZO1\"", 0);
  }
  for (int i = 0; i < 4; ++i) r.u8();
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) +
                                      " (this build reads version " +
                                      std::to_string(kCheckpointVersion) + ")",
                                  version_at);
  }
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  if (count == 0) throw ParseError("checkpoint declares zero layers", count_at);
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) layers.push_back(read_layer(r));
  if (!r.done()) throw ParseError("trailing bytes after last layer", r.offset());
  try {
    return Network(std::move(layers));
  } catch (const DimensionError& e) {
    throw ParseError(std::string("inconsistent layer shapes: ") + e.what(), bytes.size());
  }
}

void save(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Network load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace hzo
