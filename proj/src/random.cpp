#include "dg/random.hpp"

#include <bit>
#include <cmath>

#include "dg/error.hpp"

namespace dg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double standard_normal(Rng& rng) {
  // Box-Muller, one value per call; 1 - u keeps the log argument in (0, 1].
  double u1 = 1.0 - rng.next_unit();
  double u2 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Marsaglia-Tsang squeeze method, shape >= 1.
double standard_gamma_ge1(Rng& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_unit();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Boost transform handles shape < 1: Gamma(a) = Gamma(a+1) * U^(1/a).
double standard_gamma(Rng& rng, double shape) {
  if (shape >= 1.0) return standard_gamma_ge1(rng, shape);
  const double g = standard_gamma_ge1(rng, shape + 1.0);
  const double u = 1.0 - rng.next_unit();  // (0, 1]
  return g * std::pow(u, 1.0 / shape);
}

}  // namespace

double sample_beta(Rng& rng, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ParamError("sample_beta: shape parameters must be positive");
  double ga, gb;
  do {
    ga = standard_gamma(rng, a);
    gb = standard_gamma(rng, b);
  } while (ga + gb == 0.0);
  return ga / (ga + gb);
}

double sample_gaussian(Rng& rng, double sigma) {
  if (sigma < 0.0) throw ParamError("sample_gaussian: sigma must be nonnegative");
  return sigma * standard_normal(rng);
}

std::vector<double> sample_gaussian(Rng& rng, double sigma, std::size_t n) {
  if (sigma < 0.0) throw ParamError("sample_gaussian: sigma must be nonnegative");
  std::vector<double> out(n);
  for (double& v : out) v = sigma * standard_normal(rng);
  return out;
}

std::size_t sample_below(Rng& rng, std::size_t n) {
  if (n == 0) throw ParamError("sample_below: n must be positive");
  const std::uint64_t mask = std::bit_ceil(static_cast<std::uint64_t>(n)) - 1;
  for (;;) {
    const std::uint64_t v = rng.next_u64() & mask;
    if (v < n) return static_cast<std::size_t>(v);
  }
}

}  // namespace dg
