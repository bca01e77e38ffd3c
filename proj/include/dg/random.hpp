#pragma once

#include <cstddef>
#include <vector>

#include "dg/rng.hpp"

namespace dg {

/// One draw from Beta(a, b); result lies in [0, 1].
/// Throws ParamError unless a > 0 and b > 0.
double sample_beta(Rng& rng, double a, double b);

/// One draw from N(0, sigma^2). Consumes exactly two raw values.
/// Throws ParamError if sigma < 0.
double sample_gaussian(Rng& rng, double sigma);

/// n independent draws from N(0, sigma^2).
std::vector<double> sample_gaussian(Rng& rng, double sigma, std::size_t n);

/// Uniform integer in [0, n). Throws ParamError if n == 0.
std::size_t sample_below(Rng& rng, std::size_t n);

}  // namespace dg
