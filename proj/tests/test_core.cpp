#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dg/error.hpp"
#include "dg/random.hpp"
#include "dg/rng.hpp"
#include "dg/tensor.hpp"

using namespace dg;

namespace {

// Independent oracle: mass of Beta(a,b) below t by Simpson quadrature on
// the substitution x = u^(1/a), which removes the endpoint singularity.
double beta_mass_below_oracle(double t, double a, double b) {
  const int n = 200000;
  const long double upper = std::pow(static_cast<long double>(t), static_cast<long double>(a));
  const auto f = [&](long double u) {
    return std::pow(1.0L - std::pow(u, 1.0L / static_cast<long double>(a)),
                    static_cast<long double>(b) - 1.0L);
  };
  const long double h = upper / n;
  long double s = f(1e-30L) + f(upper);
  for (int i = 1; i < n; ++i) s += f(h * i) * ((i & 1) ? 4.0L : 2.0L);
  const long double integral = s * h / 3.0L / static_cast<long double>(a);
  const long double log_beta = std::lgamma(static_cast<long double>(a)) +
                               std::lgamma(static_cast<long double>(b)) -
                               std::lgamma(static_cast<long double>(a + b));
  return static_cast<double>(integral / std::exp(log_beta));
}

}  // namespace

TEST_CASE("tensor shape/data invariants") {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>{1, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}) + Tensor({3}), ShapeError);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK(!t.all_finite());
}

TEST_CASE("elementwise add/mul commute exactly and associate within 1 ulp") {
  Rng rng(11);
  const std::size_t n = 1u << 20;
  Tensor a({n}), b({n}), c({n});
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = 2.0 * rng.next_unit() - 1.0;
    b[i] = 2.0 * rng.next_unit() - 1.0;
    c[i] = 2.0 * rng.next_unit() - 1.0;
  }
  const Tensor ab = a + b, ba = b + a;
  const Tensor am = a * b, bm = b * a;
  for (std::size_t i = 0; i < n; i += 997) {
    CHECK(ab[i] == ba[i]);  // IEEE addition commutes
    CHECK(am[i] == bm[i]);
  }
  const Tensor left = (a + b) + c, right = a + (b + c);
  for (std::size_t i = 0; i < n; i += 997) {
    const double ulp = std::abs(left[i]) * 3e-16 + 1e-300;
    CHECK(std::abs(left[i] - right[i]) <= ulp);
  }
}

TEST_CASE("rng streams are reproducible and splittable") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(7);
  Rng c0 = parent.split(0), c1 = parent.split(1);
  CHECK(c0.next_u64() != c1.next_u64());
  // split is a function of the seed, not of consumption
  parent.next_u64();
  Rng c0_again = parent.split(0);
  Rng fresh = Rng(7).split(0);
  CHECK(c0_again.next_u64() == fresh.next_u64());
}

TEST_CASE("sample_beta(1,1) is uniform: mean 0.5 +- 0.01") {
  Rng rng(1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_beta(rng, 1.0, 1.0);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    sum += v;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("sample_beta(0.1,0.1): mean and tail mass match the quadrature oracle") {
  // Oracle value, frozen: P(X<0.1) + P(X>0.9) = 0.81277 for Beta(0.1,0.1).
  const double frozen_tails = 0.8128;
  const double oracle = 2.0 * beta_mass_below_oracle(0.1, 0.1, 0.1);
  CHECK(std::abs(oracle - frozen_tails) < 1e-3);  // oracle agrees with its frozen value

  Rng rng(2);
  const int n = 100000;
  double sum = 0.0;
  int tails = 0;
  for (int i = 0; i < n; ++i) {
    const double v = sample_beta(rng, 0.1, 0.1);
    sum += v;
    if (v < 0.1 || v > 0.9) ++tails;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
  CHECK(std::abs(static_cast<double>(tails) / n - frozen_tails) < 0.012);
}

TEST_CASE("sample_beta(2,2): sample variance matches ab/((a+b)^2(a+b+1))") {
  const double expected = (2.0 * 2.0) / ((4.0 * 4.0) * 5.0);  // 0.05, evaluated independently
  Rng rng(3);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = sample_beta(rng, 2.0, 2.0);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(var - expected) < 0.005);
}

TEST_CASE("sample_beta rejects non-positive shapes") {
  Rng rng(4);
  CHECK_THROWS_AS(sample_beta(rng, 0.0, 1.0), ParamError);
  CHECK_THROWS_AS(sample_beta(rng, 1.0, -2.0), ParamError);
}

TEST_CASE("sample_gaussian: degenerate sigma, moments, determinism") {
  Rng rng(5);
  for (double v : sample_gaussian(rng, 0.0, 100)) CHECK(v == 0.0);

  Rng rng2(6);
  const std::size_t n = 100000;
  const std::vector<double> draws = sample_gaussian(rng2, 1.0, n);
  double sum = 0.0, sumsq = 0.0;
  for (double v : draws) {
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sumsq / static_cast<double>(n) - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sd - 1.0) < 0.02);

  Rng r1(77), r2(77);
  const std::vector<double> v1 = sample_gaussian(r1, 2.5, 257);
  const std::vector<double> v2 = sample_gaussian(r2, 2.5, 257);
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);

  Rng r3(8);
  CHECK_THROWS_AS(sample_gaussian(r3, -1.0, 3), ParamError);
}

TEST_CASE("sample_below is in range and rejects n=0") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) CHECK(sample_below(rng, 7) < 7);
  CHECK_THROWS_AS(sample_below(rng, 0), ParamError);
}
