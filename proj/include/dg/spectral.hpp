#pragma once

#include <optional>

#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

/// Per-channel amplitude and phase planes of a C x H x W sample.
///
/// Planes are stored centered: the zero-frequency bin sits at
/// (floor(H/2), floor(W/2)). `from_real` records that the spectrum came
/// from a real-valued signal, which entitles ifft2 to check that the
/// imaginary residue of the inverse transform is negligible.
struct Spectrum {
  Tensor amplitude;  // C x H x W, nonnegative
  Tensor phase;      // C x H x W, in (-pi, pi]
  bool from_real = true;

  std::size_t channels() const { return amplitude.dim(0); }
  std::size_t height() const { return amplitude.dim(1); }
  std::size_t width() const { return amplitude.dim(2); }
};

struct MaskParams {
  double alpha = 0.0;  // in [0, 1]
  std::size_t height = 0;
  std::size_t width = 0;
};

struct MixParams {
  double lambda = 0.0;  // in [0, 1]
  double alpha = 0.0;   // in [0, 1]
};

/// Beta shapes for drawing (alpha, lambda); a fixed override pins either
/// value for diagnostics and ablations.
struct AugmentConfig {
  double alpha_beta_a = 1.0;
  double alpha_beta_b = 1.0;
  double lambda_beta_a = 0.1;
  double lambda_beta_b = 0.1;
  std::optional<double> alpha_fixed;
  std::optional<double> lambda_fixed;
};

/// Per-channel 2D DFT of a real C x H x W tensor, split into centered
/// amplitude and phase planes.
Spectrum fft2(const Tensor& x);

/// Inverse transform back to a real C x H x W tensor. For a spectrum with
/// from_real set, throws NumericError if the imaginary residue exceeds
/// 1e-6; otherwise the imaginary part is discarded (real projection).
Tensor ifft2(const Spectrum& s);

/// Centered binary mask: ones on the block
/// rows [cH - floor(alpha*H), cH + ceil(alpha*H)) x
/// cols [cW - floor(alpha*W), cW + ceil(alpha*W)), clipped to bounds,
/// with cH = floor(H/2), cW = floor(W/2). alpha = 0 gives all zeros.
Tensor make_mask(const MaskParams& p);

/// ((1-lambda)*a_c + lambda*a_s) * m + a_c * (1-m), with the H x W mask
/// broadcast over channels.
Tensor mix_amplitude(const Tensor& a_c, const Tensor& a_s, const Tensor& m, double lambda);

/// Full contrastive-sample pipeline: transform both inputs, interpolate
/// amplitudes inside the mask, recombine with the phase of x_c, invert.
/// The output keeps x_c's class label; the caller carries that fact.
Tensor generate_contrastive(const Tensor& x_c, const Tensor& x_s, const MixParams& params);

/// Draw (alpha, lambda) from their configured Beta distributions
/// (alpha first), honoring fixed overrides.
MixParams sample_mix_params(Rng& rng, const AugmentConfig& cfg);

}  // namespace dg
