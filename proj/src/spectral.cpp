#include "dg/spectral.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <vector>

#include "dg/error.hpp"
#include "dg/random.hpp"

namespace dg {

namespace {

using cd = std::complex<double>;

constexpr double kPi = 3.141592653589793238462643383279;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, unscaled. Twiddles are computed per
// index from std::polar rather than by repeated multiplication.
void fft_pow2(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cd w = std::polar(1.0, sign * 2.0 * kPi * static_cast<double>(k) /
                                         static_cast<double>(len));
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

// Direct O(n^2) transform for sizes that are not powers of two.
void dft_direct(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> out(n, cd(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      out[k] += a[t] * std::polar(1.0, ang);
    }
  }
  a = std::move(out);
}

void fft_1d(std::vector<cd>& a, bool inverse) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    dft_direct(a, inverse);
}

// Unscaled 2D transform of one H x W plane, in place.
void fft_2d(std::vector<cd>& plane, std::size_t h, std::size_t w, bool inverse) {
  std::vector<cd> row(w), col(h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) row[c] = plane[r * w + c];
    fft_1d(row, inverse);
    for (std::size_t c = 0; c < w; ++c) plane[r * w + c] = row[c];
  }
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = plane[r * w + c];
    fft_1d(col, inverse);
    for (std::size_t r = 0; r < h; ++r) plane[r * w + c] = col[r];
  }
}

// Move the zero-frequency bin to (floor(H/2), floor(W/2)) or back.
std::vector<cd> shift_plane(const std::vector<cd>& plane, std::size_t h, std::size_t w,
                            bool to_centered) {
  const std::size_t sh = h / 2, sw = w / 2;
  std::vector<cd> out(plane.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t rc = (r + sh) % h;
      const std::size_t cc = (c + sw) % w;
      if (to_centered)
        out[rc * w + cc] = plane[r * w + c];
      else
        out[r * w + c] = plane[rc * w + cc];
    }
  }
  return out;
}

void require_chw(const Tensor& x, const char* who) {
  if (x.rank() != 3) throw ShapeError(std::string(who) + ": expected a C x H x W tensor");
}

}  // namespace

Spectrum fft2(const Tensor& x) {
  require_chw(x, "fft2");
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  Spectrum s;
  s.amplitude = Tensor({ch, h, w});
  s.phase = Tensor({ch, h, w});
  s.from_real = true;
  std::vector<cd> plane(h * w);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* src = x.data() + c * h * w;
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = cd(src[i], 0.0);
    fft_2d(plane, h, w, /*inverse=*/false);
    const std::vector<cd> centered = shift_plane(plane, h, w, /*to_centered=*/true);
    double* amp = s.amplitude.data() + c * h * w;
    double* pha = s.phase.data() + c * h * w;
    for (std::size_t i = 0; i < h * w; ++i) {
      amp[i] = std::abs(centered[i]);
      double p = std::atan2(centered[i].imag(), centered[i].real());
      if (p <= -kPi) p = kPi;  // keep phase in (-pi, pi]
      pha[i] = p;
    }
  }
  return s;
}

Tensor ifft2(const Spectrum& s) {
  if (!s.amplitude.same_shape(s.phase) || s.amplitude.rank() != 3)
    throw ShapeError("ifft2: amplitude/phase must be matching C x H x W tensors");
  const std::size_t ch = s.channels(), h = s.height(), w = s.width();
  Tensor out({ch, h, w});
  std::vector<cd> centered(h * w);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* amp = s.amplitude.data() + c * h * w;
    const double* pha = s.phase.data() + c * h * w;
    for (std::size_t i = 0; i < h * w; ++i) centered[i] = std::polar(amp[i], pha[i]);
    std::vector<cd> plane = shift_plane(centered, h, w, /*to_centered=*/false);
    fft_2d(plane, h, w, /*inverse=*/true);
    const double scale = 1.0 / (static_cast<double>(h) * static_cast<double>(w));
    double* dst = out.data() + c * h * w;
    double residue = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) {
      dst[i] = plane[i].real() * scale;
      residue = std::max(residue, std::abs(plane[i].imag() * scale));
    }
    if (s.from_real && residue > 1e-6)
      throw NumericError("ifft2: imaginary residue " + std::to_string(residue) +
                         " exceeds 1e-6 on a spectrum claimed to come from a real signal");
  }
  return out;
}

Tensor make_mask(const MaskParams& p) {
  if (p.alpha < 0.0 || p.alpha > 1.0) throw ParamError("make_mask: alpha must be in [0, 1]");
  if (p.height == 0 || p.width == 0) throw ParamError("make_mask: empty extent");
  const auto block = [](double alpha, std::size_t n, std::size_t& lo, std::size_t& hi) {
    const double half = alpha * static_cast<double>(n);
    const std::size_t c = n / 2;
    const auto f = static_cast<std::size_t>(std::floor(half));
    const auto g = static_cast<std::size_t>(std::ceil(half));
    lo = f > c ? 0 : c - f;
    hi = std::min(n, c + g);
  };
  std::size_t r0, r1, c0, c1;
  block(p.alpha, p.height, r0, r1);
  block(p.alpha, p.width, c0, c1);
  Tensor m({p.height, p.width});
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) m(r, c) = 1.0;
  return m;
}

Tensor mix_amplitude(const Tensor& a_c, const Tensor& a_s, const Tensor& m, double lambda) {
  require_chw(a_c, "mix_amplitude");
  if (!a_c.same_shape(a_s)) throw ShapeError("mix_amplitude: amplitude shape mismatch");
  if (m.rank() != 2 || m.dim(0) != a_c.dim(1) || m.dim(1) != a_c.dim(2))
    throw ShapeError("mix_amplitude: mask must be H x W matching the amplitudes");
  const std::size_t ch = a_c.dim(0), hw = a_c.dim(1) * a_c.dim(2);
  Tensor out({a_c.dim(0), a_c.dim(1), a_c.dim(2)});
  for (std::size_t c = 0; c < ch; ++c) {
    const double* pc = a_c.data() + c * hw;
    const double* ps = a_s.data() + c * hw;
    const double* pm = m.data();
    double* po = out.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i)
      po[i] = ((1.0 - lambda) * pc[i] + lambda * ps[i]) * pm[i] + pc[i] * (1.0 - pm[i]);
  }
  return out;
}

Tensor generate_contrastive(const Tensor& x_c, const Tensor& x_s, const MixParams& params) {
  require_chw(x_c, "generate_contrastive");
  if (!x_c.same_shape(x_s)) throw ShapeError("generate_contrastive: input shape mismatch");
  if (params.lambda < 0.0 || params.lambda > 1.0 || params.alpha < 0.0 || params.alpha > 1.0)
    throw ParamError("generate_contrastive: lambda and alpha must be in [0, 1]");
  const Spectrum sc = fft2(x_c);
  const Spectrum ss = fft2(x_s);
  const Tensor mask = make_mask({params.alpha, x_c.dim(1), x_c.dim(2)});
  Spectrum mixed;
  mixed.amplitude = mix_amplitude(sc.amplitude, ss.amplitude, mask, params.lambda);
  mixed.phase = sc.phase;
  // The mixed spectrum is not conjugate-symmetric in general (the centered
  // block need not pair every bin with its mirror), so the inverse is taken
  // as a real projection. That projection symmetrizes the amplitude but
  // leaves the phase planes untouched.
  mixed.from_real = false;
  return ifft2(mixed);
}

MixParams sample_mix_params(Rng& rng, const AugmentConfig& cfg) {
  const auto checked = [](double v, const char* name) {
    if (v < 0.0 || v > 1.0)
      throw ParamError(std::string("sample_mix_params: fixed ") + name + " must be in [0, 1]");
    return v;
  };
  MixParams p;
  p.alpha = cfg.alpha_fixed ? checked(*cfg.alpha_fixed, "alpha")
                            : sample_beta(rng, cfg.alpha_beta_a, cfg.alpha_beta_b);
  p.lambda = cfg.lambda_fixed ? checked(*cfg.lambda_fixed, "lambda")
                              : sample_beta(rng, cfg.lambda_beta_a, cfg.lambda_beta_b);
  return p;
}

}  // namespace dg
