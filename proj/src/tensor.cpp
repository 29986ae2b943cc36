#include "hzo/tensor.h"

#include <atomic>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "hzo/errors.h"

namespace hzo {
namespace {

std::atomic<std::uint64_t> g_overflow_events{0};

constexpr double kHalfMax = 65504.0;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor zip(const Tensor& a, const Tensor& b, PrecisionPolicy policy, const char* op,
           const std::function<double(double, double)>& fn) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = policy.round(fn(a[i], b[i]));
  return out;
}

}  // namespace

std::string to_string(Precision p) {
  switch (p) {
    case Precision::Double: return "double";
    case Precision::Single: return "single";
    case Precision::HalfEmulated: return "half";
  }
  return "unknown";
}

Precision parse_precision(const std::string& name) {
  if (name == "double" || name == "float64" || name == "f64") return Precision::Double;
  if (name == "single" || name == "float32" || name == "f32") return Precision::Single;
  if (name == "half" || name == "float16" || name == "f16") return Precision::HalfEmulated;
  throw InputError("unknown precision '" + name + "'");
}

double round_to_half(double x) {
  if (std::isnan(x)) return x;
  const double ax = std::fabs(x);
  if (ax == 0.0) return x;
  if (std::isinf(ax)) {
    g_overflow_events.fetch_add(1, std::memory_order_relaxed);
    return std::copysign(kHalfMax, x);
  }
  int e = 0;
  std::frexp(ax, &e);
  // Binade exponent, clamped so that subnormals share the 2^-24 quantum.
  const int exponent = std::max(e - 1, -14);
  const double quantum = std::ldexp(1.0, exponent - 10);
  double r = std::nearbyint(ax / quantum) * quantum;
  if (r > kHalfMax) {
    g_overflow_events.fetch_add(1, std::memory_order_relaxed);
    r = kHalfMax;
  }
  return std::copysign(r, x);
}

double round_to_single(double x) {
  if (std::isnan(x)) return x;
  const float f = static_cast<float>(x);
  if (std::isinf(f)) {
    g_overflow_events.fetch_add(1, std::memory_order_relaxed);
    return std::copysign(static_cast<double>(FLT_MAX), x);
  }
  return static_cast<double>(f);
}

std::uint64_t overflow_events() { return g_overflow_events.load(std::memory_order_relaxed); }
void reset_overflow_events() { g_overflow_events.store(0, std::memory_order_relaxed); }

double PrecisionPolicy::round(double x) const {
  switch (mode) {
    case Precision::Double: return x;
    case Precision::Single: return round_to_single(x);
    case Precision::HalfEmulated: return round_to_half(x);
  }
  return x;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  data_.assign(n, 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::basis(std::size_t n, std::size_t index) {
  Tensor t({n});
  t[index] = 1.0;
  return t;
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.values().data(), b.values().data(),
                                       a.size() * sizeof(double)) == 0);
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor matvec(const Tensor& w, const Tensor& v, PrecisionPolicy policy) {
  if (w.rank() != 2 || v.rank() != 1 || w.extent(1) != v.size()) {
    throw DimensionError("matvec: " + shape_string(w.shape()) + " * " + shape_string(v.shape()));
  }
  const std::size_t rows = w.extent(0);
  const std::size_t cols = w.extent(1);
  Tensor y({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = w.values().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
    y[r] = policy.round(acc);
  }
  return y;
}

Tensor matvec_transposed(const Tensor& w, const Tensor& u, PrecisionPolicy policy) {
  if (w.rank() != 2 || u.rank() != 1 || w.extent(0) != u.size()) {
    throw DimensionError("matvec_transposed: " + shape_string(w.shape()) + "^T * " +
                         shape_string(u.shape()));
  }
  const std::size_t rows = w.extent(0);
  const std::size_t cols = w.extent(1);
  Tensor y({cols});
  for (std::size_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += w.at(r, c) * u[r];
    y[c] = policy.round(acc);
  }
  return y;
}

Tensor outer(const Tensor& u, const Tensor& v, PrecisionPolicy policy) {
  if (u.rank() != 1 || v.rank() != 1) {
    throw DimensionError("outer: expects vectors, got " + shape_string(u.shape()) + " and " +
                         shape_string(v.shape()));
  }
  Tensor out({u.size(), v.size()});
  for (std::size_t r = 0; r < u.size(); ++r) {
    for (std::size_t c = 0; c < v.size(); ++c) out.at(r, c) = policy.round(u[r] * v[c]);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, PrecisionPolicy policy) {
  return zip(a, b, policy, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b, PrecisionPolicy policy) {
  return zip(a, b, policy, "sub", [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b, PrecisionPolicy policy) {
  return zip(a, b, policy, "hadamard", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor, PrecisionPolicy policy) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = policy.round(a[i] * factor);
  return out;
}

void axpy(Tensor& a, double factor, const Tensor& b, PrecisionPolicy policy) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = policy.round(a[i] + factor * b[i]);
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

Tensor round_through(const Tensor& x, PrecisionPolicy policy) {
  Tensor out = x;
  round_in_place(out, policy);
  return out;
}

void round_in_place(Tensor& x, PrecisionPolicy policy) {
  if (policy.is_double()) return;
  for (double& v : x.values()) v = policy.round(v);
}

Tensor orthogonal_init(std::size_t rows, std::size_t cols, double scale_factor, Rng& rng) {
  const std::size_t n = std::max(rows, cols);
  const std::size_t k = std::min(rows, cols);
  // Columns of q (n x k), stored column-major for convenience.
  std::vector<std::vector<double>> q(k, std::vector<double>(n));
  for (auto& col : q) {
    for (double& v : col) v = rng.normal();
  }
  for (std::size_t j = 0; j < k; ++j) {
    // Two passes of modified Gram-Schmidt keep orthogonality at machine precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += q[p][i] * q[j][i];
        for (std::size_t i = 0; i < n; ++i) q[j][i] -= proj * q[p][i];
      }
    }
    double norm = 0.0;
    for (double v : q[j]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q[j]) v /= norm;
  }
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.at(r, c) = scale_factor * (rows <= cols ? q[r][c] : q[c][r]);
    }
  }
  return out;
}

Tensor fan_in_init(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  return gaussian({rows, cols}, gain / std::sqrt(static_cast<double>(cols)), rng);
}

Tensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  // "+ 0.0" maps a zero stddev to +0 rather than -0 for negative draws.
  for (double& v : t.values()) v = stddev * rng.normal() + 0.0;
  return t;
}

}  // namespace hzo
