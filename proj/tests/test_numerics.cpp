#include <gtest/gtest.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "hzo/errors.h"
#include "hzo/ledger.h"
#include "hzo/parallel.h"
#include "hzo/rng.h"
#include "hzo/tensor.h"

using namespace hzo;

namespace {

// Reference xoshiro256** / splitmix64, written out from the published algorithm.
struct RefXoshiro {
  std::uint64_t s[4];
  explicit RefXoshiro(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s) {
      std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
};

// Every finite binary16 value, decoded from its bit pattern, in ascending order.
const std::vector<double>& half_table() {
  static const std::vector<double> table = [] {
    std::vector<double> v;
    for (std::uint32_t bits = 0; bits < 0x10000; ++bits) {
      const std::uint32_t exp = (bits >> 10) & 0x1f;
      const std::uint32_t man = bits & 0x3ff;
      if (exp == 0x1f) continue;
      double mag = exp == 0 ? std::ldexp(static_cast<double>(man), -24)
                            : std::ldexp(1.0 + man / 1024.0, static_cast<int>(exp) - 15);
      v.push_back((bits & 0x8000) ? -mag : mag);
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }();
  return table;
}

bool even_mantissa(double h) {
  // Significand of h counted in units of its binade quantum.
  const double a = std::fabs(h);
  if (a == 0.0) return true;
  int e = 0;
  std::frexp(a, &e);
  const int q = std::max(e - 1, -14) - 10;
  return static_cast<std::uint64_t>(std::ldexp(a, -q)) % 2 == 0;
}

double brute_half(double x) {
  const auto& t = half_table();
  if (x >= 65520.0) return 65504.0;
  if (x <= -65520.0) return -65504.0;
  auto it = std::lower_bound(t.begin(), t.end(), x);
  if (it == t.end()) return t.back();
  if (*it == x || it == t.begin()) return *it;
  const double hi = *it;
  const double lo = *(it - 1);
  if (x - lo < hi - x) return lo;
  if (hi - x < x - lo) return hi;
  return even_mantissa(lo) ? lo : hi;
}

}  // namespace

TEST(Rng, MatchesReferenceXoshiroStream) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    Rng r(seed);
    RefXoshiro ref(seed);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(r.next_u64(), ref.next());
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, SplitIsIndependentOfParentPosition) {
  Rng a(5);
  const Rng before = a.split(3);
  a.next_u64();
  Rng after = a.split(3);
  Rng b = before;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.next_u64(), after.next_u64());
  Rng c = a.split(4);
  Rng d = a.split(3);
  EXPECT_NE(c.next_u64(), d.next_u64());
}

TEST(Half, KnownValues) {
  EXPECT_EQ(round_to_half(0.1), 0.0999755859375);
  EXPECT_EQ(round_to_half(1.0), 1.0);
  EXPECT_EQ(round_to_half(65504.0), 65504.0);
  EXPECT_EQ(round_to_half(std::ldexp(1.0, -24)), std::ldexp(1.0, -24));
  EXPECT_EQ(round_to_half(std::ldexp(1.0, -26)), 0.0);
  // 1 + 2^-11 is a tie between 1 and 1 + 2^-10: even mantissa wins.
  EXPECT_EQ(round_to_half(1.0 + std::ldexp(1.0, -11)), 1.0);
  EXPECT_EQ(round_to_half(1.0 + 3 * std::ldexp(1.0, -11)), 1.0 + std::ldexp(1.0, -9));
}

TEST(Half, OverflowSaturatesAndCounts) {
  reset_overflow_events();
  EXPECT_EQ(round_to_half(70000.0), 65504.0);
  EXPECT_EQ(round_to_half(-1e9), -65504.0);
  EXPECT_EQ(overflow_events(), 2u);
  EXPECT_EQ(round_to_half(65519.0), 65504.0);
  EXPECT_EQ(overflow_events(), 2u);
  reset_overflow_events();
}

TEST(Half, MatchesBruteForceTable) {
  Rng r(1234);
  for (int i = 0; i < 200000; ++i) {
    const double mag = std::ldexp(r.uniform(), static_cast<int>(r.below(44)) - 27);
    const double x = r.uniform() < 0.5 ? -mag : mag;
    ASSERT_EQ(round_to_half(x), brute_half(x)) << x;
  }
  // Exact midpoints between every pair of neighbours.
  const auto& t = half_table();
  for (std::size_t i = 0; i + 1 < t.size(); i += 7) {
    const double mid = 0.5 * (t[i] + t[i + 1]);
    ASSERT_EQ(round_to_half(mid), brute_half(mid)) << mid;
  }
  reset_overflow_events();
}

TEST(Single, MatchesHardwareConversion) {
  Rng r(99);
  for (int i = 0; i < 100000; ++i) {
    const double x = (r.uniform() - 0.5) * std::ldexp(1.0, static_cast<int>(r.below(120)) - 60);
    ASSERT_EQ(round_to_single(x), static_cast<double>(static_cast<float>(x)));
  }
  reset_overflow_events();
  EXPECT_EQ(round_to_single(1e300), static_cast<double>(FLT_MAX));
  EXPECT_EQ(overflow_events(), 1u);
  reset_overflow_events();
}

TEST(Precision, ParseAndPolicy) {
  EXPECT_EQ(parse_precision("f32"), Precision::Single);
  EXPECT_EQ(parse_precision("half"), Precision::HalfEmulated);
  EXPECT_THROW(parse_precision("bf16"), InputError);
  EXPECT_EQ(PrecisionPolicy{Precision::Double}.round(0.1), 0.1);
  EXPECT_EQ(PrecisionPolicy{Precision::HalfEmulated}.round(0.1), 0.0999755859375);
}

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::identity(3).at(1, 1), 1.0);
  EXPECT_EQ(Tensor::basis(4, 2)[2], 1.0);
}

TEST(Tensor, MatvecAgainstScalarLoops) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(seed);
    const std::size_t rows = 1 + r.below(9);
    const std::size_t cols = 1 + r.below(9);
    const Tensor w = gaussian({rows, cols}, 1.0, r);
    const Tensor v = gaussian({cols}, 1.0, r);
    const Tensor u = gaussian({rows}, 1.0, r);
    const Tensor y = matvec(w, v);
    const Tensor z = matvec_transposed(w, u);
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += w.data()[i * cols + j] * v.data()[j];
      ASSERT_NEAR(y[i], acc, 1e-12);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += w.data()[i * cols + j] * u.data()[i];
      ASSERT_NEAR(z[j], acc, 1e-12);
    }
    const Tensor o = outer(u, v);
    ASSERT_EQ(o.at(rows - 1, cols - 1), u[rows - 1] * v[cols - 1]);
  }
}

TEST(Tensor, ShapeMismatchThrows) {
  const Tensor w({3, 4});
  EXPECT_THROW(matvec(w, Tensor({3})), DimensionError);
  EXPECT_THROW(add(Tensor({2}), Tensor({3})), DimensionError);
}

TEST(Tensor, RoundingAppliedPerOperation) {
  const PrecisionPolicy half{Precision::HalfEmulated};
  const Tensor a = Tensor::vector({0.1, 0.2});
  const Tensor s = add(a, a, half);
  EXPECT_EQ(s[0], round_to_half(0.2));
  Tensor b = Tensor::vector({1.0});
  axpy(b, 1e-4, Tensor::vector({1.0}), half);
  EXPECT_EQ(b[0], 1.0);  // below half the binary16 quantum at 1
}

TEST(Tensor, OrthogonalInitRows) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const Tensor q = orthogonal_init(6, 10, 1.0, r);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < 10; ++k) d += q.at(i, k) * q.at(j, k);
        ASSERT_NEAR(d, i == j ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(Tensor, OrthogonalInitColumnsAndScale) {
  Rng r(3);
  const double c = 1.3;
  const Tensor q = orthogonal_init(9, 4, c, r);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 9; ++k) d += q.at(k, i) * q.at(k, j);
      ASSERT_NEAR(d, i == j ? c * c : 0.0, 1e-12);
    }
  }
}

TEST(Tensor, FanInVariance) {
  Rng r(8);
  const Tensor w = fan_in_init(200, 50, 2.0, r);
  double s2 = 0.0;
  for (double v : w.values()) s2 += v * v;
  EXPECT_NEAR(s2 / w.size(), 4.0 / 50.0, 0.004);
}

TEST(Parallel, EveryIndexOnceAndDeterministic) {
  for (unsigned threads : {1u, 2u, 3u, 8u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += static_cast<int>(i); });
    for (std::size_t i = 0; i < hits.size(); ++i) ASSERT_EQ(hits[i], static_cast<int>(i));
  }
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(16, 4,
                            [](std::size_t i) {
                              if (i == 9) throw NumericalError("boom");
                            }),
               NumericalError);
}

TEST(Ledger, ChargesAndInvariant) {
  QueryLedger l;
  l.charge(QueryKind::Jacobian, 4, 3, 0);
  l.charge(QueryKind::Jacobian, 2, 1, 1);
  l.charge(QueryKind::LeftForward, 1, 5);
  l.charge(QueryKind::LocalStep, 1, 1);
  EXPECT_EQ(l.layer_evals(), 12u + 2u + 5u + 1u);
  EXPECT_EQ(l.span_forwards(), 8u);
  EXPECT_EQ(l.jacobian_layer_evals(), 14u);
  EXPECT_EQ(l.per_level().at(0), 12u);
  EXPECT_EQ(l.per_level().at(1), 2u);
  EXPECT_EQ(l.layer_evals_of(QueryKind::LeftForward), 5u);
  std::uint64_t sum = l.jacobian_layer_evals();
  for (const auto& [k, n] : l.by_kind()) sum += n;
  EXPECT_EQ(sum, l.layer_evals());

  QueryLedger m;
  m.charge(QueryKind::Jacobian, 1, 1, 1);
  l.merge(m);
  EXPECT_EQ(l.per_level().at(1), 3u);
  EXPECT_EQ(l.layer_evals(), 21u);
}
