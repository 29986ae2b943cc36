#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hzo/rng.h"

namespace hzo {

enum class Precision { Double, Single, HalfEmulated };

std::string to_string(Precision p);
Precision parse_precision(const std::string& name);

/// Storage format applied after every primitive operation.
///
/// Arithmetic always runs in 64-bit; Single and HalfEmulated round each
/// stored result to the nearest binary32 / binary16 value (ties to even,
/// subnormals kept). Out-of-range magnitudes saturate to the largest finite
/// value of the format and bump the process-wide overflow counter.
struct PrecisionPolicy {
  Precision mode = Precision::Double;

  double round(double x) const;
  bool is_double() const noexcept { return mode == Precision::Double; }

  friend bool operator==(const PrecisionPolicy&, const PrecisionPolicy&) = default;
};

/// Nearest binary16 value to x (ties to even), saturating at +-65504.
double round_to_half(double x);
/// Nearest binary32 value to x (ties to even), saturating at +-FLT_MAX.
double round_to_single(double x);

/// Number of saturating roundings since process start (or the last reset).
std::uint64_t overflow_events();
void reset_overflow_events();

/// Dense row-major tensor of 64-bit scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor identity(std::size_t n);
  static Tensor basis(std::size_t n, std::size_t index);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element (r, c) of a rank-2 tensor.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// True when shapes match and every element has the same bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b);

std::string shape_string(const std::vector<std::size_t>& shape);

// Primitive operations. Results are rounded per `policy`.

/// y = W v, accumulated in 64-bit and rounded once per output element.
Tensor matvec(const Tensor& w, const Tensor& v, PrecisionPolicy policy = {});
/// y = W^T u.
Tensor matvec_transposed(const Tensor& w, const Tensor& u, PrecisionPolicy policy = {});
/// u v^T.
Tensor outer(const Tensor& u, const Tensor& v, PrecisionPolicy policy = {});
Tensor add(const Tensor& a, const Tensor& b, PrecisionPolicy policy = {});
Tensor sub(const Tensor& a, const Tensor& b, PrecisionPolicy policy = {});
Tensor hadamard(const Tensor& a, const Tensor& b, PrecisionPolicy policy = {});
Tensor scale(const Tensor& a, double factor, PrecisionPolicy policy = {});
/// a += factor * b, in place.
void axpy(Tensor& a, double factor, const Tensor& b, PrecisionPolicy policy = {});

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);

Tensor round_through(const Tensor& x, PrecisionPolicy policy);
void round_in_place(Tensor& x, PrecisionPolicy policy);

/// scale * Q with orthonormal rows (rows <= cols) or orthonormal columns
/// (rows > cols). Q comes from Gram-Schmidt on a Gaussian matrix with the
/// usual sign correction, so it is Haar distributed.
Tensor orthogonal_init(std::size_t rows, std::size_t cols, double scale, Rng& rng);

/// Entries drawn from N(0, (gain^2) / cols).
Tensor fan_in_init(std::size_t rows, std::size_t cols, double gain, Rng& rng);

Tensor gaussian(std::vector<std::size_t> shape, double stddev, Rng& rng);

}  // namespace hzo
