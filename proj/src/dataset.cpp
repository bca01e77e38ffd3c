#include "dg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "dg/container.hpp"
#include "dg/error.hpp"
#include "dg/random.hpp"
#include "dg/spectral.hpp"

namespace dg {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void validate_config(const GeneratorConfig& cfg) {
  if (cfg.domains < 2) throw ParamError("generator: need at least 2 domains");
  if (cfg.classes < 2) throw ParamError("generator: need at least 2 classes");
  if (cfg.per_domain == 0) throw ParamError("generator: per-domain count must be positive");
  const auto [c, h, w] = cfg.shape;
  if (c == 0 || h == 0 || w == 0) throw ParamError("generator: shape must be positive");
  if (h != w || !is_pow2(h)) throw ParamError("generator: H and W must be equal powers of two");
  if (cfg.tilt.size() < cfg.domains)
    throw ParamError("generator: tilt must list one exponent per domain");
  if (cfg.channel_gains.size() < cfg.domains)
    throw ParamError("generator: channel_gains must list one triple per domain");
  if (cfg.noise_sigma < 0.0 || cfg.tilt_jitter < 0.0 || cfg.gain_jitter < 0.0)
    throw ParamError("generator: jitter and noise must be nonnegative");
}

// Binary glyph raster for one class; class evidence lives in position and
// orientation so it survives amplitude removal.
Tensor draw_glyph(int label, std::size_t classes, std::size_t h, std::size_t w, Rng& rng,
                  std::size_t max_jitter) {
  Tensor g({h, w});
  const long jspan = 2 * static_cast<long>(max_jitter) + 1;
  const long jy = static_cast<long>(sample_below(rng, static_cast<std::size_t>(jspan))) -
                  static_cast<long>(max_jitter);
  const long jx = static_cast<long>(sample_below(rng, static_cast<std::size_t>(jspan))) -
                  static_cast<long>(max_jitter);
  const long hh = static_cast<long>(h), ww = static_cast<long>(w);
  const long t = std::max<long>(2, hh / 8);
  const int variant = (label - 1) % 7;
  const long shift = ((label - 1) / 7) * (hh / 8);  // extra offset for classes beyond 7
  (void)classes;

  const auto set = [&](long y, long x) {
    y += jy + shift;
    x += jx;
    if (y >= 0 && y < hh && x >= 0 && x < ww) g(static_cast<std::size_t>(y),
                                                static_cast<std::size_t>(x)) = 1.0;
  };
  switch (variant) {
    case 0:  // horizontal bar, upper third
      for (long y = hh / 4; y < hh / 4 + t; ++y)
        for (long x = ww / 8; x < ww - ww / 8; ++x) set(y, x);
      break;
    case 1:  // vertical bar, left third
      for (long x = ww / 4; x < ww / 4 + t; ++x)
        for (long y = hh / 8; y < hh - hh / 8; ++y) set(y, x);
      break;
    case 2:  // main diagonal band
      for (long y = hh / 8; y < hh - hh / 8; ++y)
        for (long k = 0; k < t; ++k) set(y, y + k);
      break;
    case 3:  // anti-diagonal band
      for (long y = hh / 8; y < hh - hh / 8; ++y)
        for (long k = 0; k < t; ++k) set(y, ww - 1 - y - k);
      break;
    case 4:  // centered square outline
      for (long y = hh / 4; y < 3 * hh / 4; ++y)
        for (long x = ww / 4; x < 3 * ww / 4; ++x)
          if (y < hh / 4 + t || y >= 3 * hh / 4 - t || x < ww / 4 + t || x >= 3 * ww / 4 - t)
            set(y, x);
      break;
    case 5:  // centered cross
      for (long y = hh / 2 - t / 2; y < hh / 2 - t / 2 + t; ++y)
        for (long x = ww / 8; x < ww - ww / 8; ++x) set(y, x);
      for (long x = ww / 2 - t / 2; x < ww / 2 - t / 2 + t; ++x)
        for (long y = hh / 8; y < hh - hh / 8; ++y) set(y, x);
      break;
    default: {  // two filled discs on the diagonal
      const long r = std::max<long>(2, hh / 8);
      const long centers[2][2] = {{hh / 4, ww / 4}, {3 * hh / 4, 3 * ww / 4}};
      for (const auto& c : centers)
        for (long y = c[0] - r; y <= c[0] + r; ++y)
          for (long x = c[1] - r; x <= c[1] + r; ++x)
            if ((y - c[0]) * (y - c[0]) + (x - c[1]) * (x - c[1]) <= r * r) set(y, x);
      break;
    }
  }
  return g;
}

// Scales the centered amplitude plane by max(f, 1)^(-gamma), f in integer
// frequency units. The DC gain is 1, so the image mean is preserved.
Tensor apply_spectral_tilt(const Tensor& plane_hw, double gamma) {
  const std::size_t h = plane_hw.dim(0), w = plane_hw.dim(1);
  Spectrum s = fft2(plane_hw.reshaped({1, h, w}));
  const long ch = static_cast<long>(h / 2), cw = static_cast<long>(w / 2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double fu = static_cast<double>(static_cast<long>(r) - ch);
      const double fv = static_cast<double>(static_cast<long>(c) - cw);
      const double f = std::sqrt(fu * fu + fv * fv);
      s.amplitude(std::size_t{0}, r, c) *= std::pow(std::max(f, 1.0), -gamma);
    }
  }
  return ifft2(s).reshaped({h, w});
}

Tensor synthesize_sample(const GeneratorConfig& cfg, int label, int domain, Rng& rng) {
  const auto [channels, h, w] = cfg.shape;
  const Tensor glyph = draw_glyph(label, cfg.classes, h, w, rng, cfg.glyph_jitter);
  Tensor base({h, w});
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = 0.1 + 0.8 * glyph[i];

  const double gamma =
      cfg.tilt[domain - 1] + (2.0 * rng.next_unit() - 1.0) * cfg.tilt_jitter;
  const Tensor styled = apply_spectral_tilt(base, gamma);

  Tensor x({channels, h, w});
  for (std::size_t c = 0; c < channels; ++c) {
    const double gain = cfg.channel_gains[domain - 1][c % 3] *
                        (1.0 + (2.0 * rng.next_unit() - 1.0) * cfg.gain_jitter);
    double* dst = x.data() + c * h * w;
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = styled[i] * gain + sample_gaussian(rng, cfg.noise_sigma);
      dst[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return x;
}

ordered_json manifest_to_json(const DatasetManifest& m) {
  ordered_json j;
  j["version"] = m.version;
  j["K"] = m.domains;
  j["C_cls"] = m.classes;
  j["shape"] = m.shape;
  j["seed"] = m.seed;
  j["counts"] = m.counts;
  ordered_json files = ordered_json::array();
  for (const SampleRef& f : m.files) {
    ordered_json e;
    e["path"] = f.path;
    e["y"] = f.label;
    e["domain"] = f.domain;
    if (f.provenance) {
      e["source"] = f.provenance->source;
      e["donor"] = f.provenance->donor;
      e["alpha"] = f.provenance->alpha;
      e["lambda"] = f.provenance->lambda;
    }
    files.push_back(std::move(e));
  }
  j["files"] = std::move(files);
  return j;
}

void validate_manifest(const DatasetManifest& m, const std::string& where) {
  if (m.version != 1)
    throw FormatError(where + ": unsupported manifest version " + std::to_string(m.version));
  if (m.domains < 1 || m.classes < 1) throw FormatError(where + ": bad K / C_cls");
  if (m.counts.size() != m.domains)
    throw FormatError(where + ": counts must list one entry per domain");
  std::size_t total = 0;
  for (std::size_t c : m.counts) total += c;
  if (total != m.files.size())
    throw FormatError(where + ": counts sum to " + std::to_string(total) + " but " +
                      std::to_string(m.files.size()) + " files are listed");
  std::vector<std::size_t> seen(m.domains, 0);
  for (const SampleRef& f : m.files) {
    if (f.label < 1 || static_cast<std::size_t>(f.label) > m.classes)
      throw FormatError(where + ": label out of range in entry '" + f.path + "'");
    if (f.domain < 1 || static_cast<std::size_t>(f.domain) > m.domains)
      throw FormatError(where + ": domain out of range in entry '" + f.path + "'");
    ++seen[static_cast<std::size_t>(f.domain) - 1];
  }
  for (std::size_t d = 0; d < m.domains; ++d)
    if (seen[d] != m.counts[d])
      throw FormatError(where + ": per-domain file count disagrees with counts[" +
                        std::to_string(d) + "]");
}

}  // namespace

GeneratorConfig generator_config_from_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("generator config: ") + e.what());
  }
  GeneratorConfig cfg;
  if (j.contains("K")) cfg.domains = j["K"].get<std::size_t>();
  if (j.contains("C_cls")) cfg.classes = j["C_cls"].get<std::size_t>();
  if (j.contains("N_i")) cfg.per_domain = j["N_i"].get<std::size_t>();
  if (j.contains("shape")) {
    const auto v = j["shape"].get<std::vector<std::size_t>>();
    if (v.size() != 3) throw ParamError("generator config: shape must be [C, H, W]");
    cfg.shape = {v[0], v[1], v[2]};
  }
  if (j.contains("tilt")) cfg.tilt = j["tilt"].get<std::vector<double>>();
  if (j.contains("channel_gains"))
    cfg.channel_gains = j["channel_gains"].get<std::vector<std::array<double, 3>>>();
  if (j.contains("noise_sigma")) cfg.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("tilt_jitter")) cfg.tilt_jitter = j["tilt_jitter"].get<double>();
  if (j.contains("gain_jitter")) cfg.gain_jitter = j["gain_jitter"].get<double>();
  if (j.contains("glyph_jitter")) cfg.glyph_jitter = j["glyph_jitter"].get<std::size_t>();
  return cfg;
}

DatasetManifest generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  validate_config(cfg);
  std::filesystem::create_directories(out_dir);

  DatasetManifest m;
  m.domains = cfg.domains;
  m.classes = cfg.classes;
  m.shape = cfg.shape;
  m.seed = seed;
  m.counts.assign(cfg.domains, cfg.per_domain);

  const Rng master(seed);
  for (std::size_t d = 1; d <= cfg.domains; ++d) {
    for (std::size_t i = 0; i < cfg.per_domain; ++i) {
      const int label = 1 + static_cast<int>(i % cfg.classes);
      // Per-sample child stream keyed by (domain, index): content does not
      // depend on generation order.
      Rng rng = master.split((static_cast<std::uint64_t>(d) << 32) | i);
      const Tensor x = synthesize_sample(cfg, label, static_cast<int>(d), rng);
      char name[64];
      std::snprintf(name, sizeof(name), "d%zu_c%d_%04zu.dgt", d, label, i);
      save_tensor(out_dir / name, x);
      m.files.push_back({name, label, static_cast<int>(d), std::nullopt});
    }
  }
  save_manifest(m, out_dir);
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.domains = j.at("K").get<std::size_t>();
    m.classes = j.at("C_cls").get<std::size_t>();
    const auto v = j.at("shape").get<std::vector<std::size_t>>();
    if (v.size() != 3) throw FormatError(path.string() + ": shape must be [C, H, W]");
    m.shape = {v[0], v[1], v[2]};
    m.seed = j.at("seed").get<std::uint64_t>();
    m.counts = j.at("counts").get<std::vector<std::size_t>>();
    for (const auto& e : j.at("files")) {
      SampleRef ref;
      ref.path = e.at("path").get<std::string>();
      ref.label = e.at("y").get<int>();
      ref.domain = e.at("domain").get<int>();
      if (e.contains("source")) {
        Provenance p;
        p.source = e.at("source").get<std::size_t>();
        p.donor = e.at("donor").get<std::size_t>();
        p.alpha = e.at("alpha").get<double>();
        p.lambda = e.at("lambda").get<double>();
        ref.provenance = p;
      }
      m.files.push_back(std::move(ref));
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  validate_manifest(m, path.string());
  return m;
}

Tensor load_sample_tensor(const std::filesystem::path& dir, const SampleRef& ref) {
  Tensor t = load_tensor(dir / ref.path);
  return t;
}

std::vector<DomainSample> load_samples(const std::filesystem::path& dir,
                                       const DatasetManifest& m,
                                       const std::vector<std::size_t>& indices) {
  std::vector<DomainSample> out;
  out.reserve(indices.size());
  for (std::size_t ix : indices) {
    if (ix >= m.files.size()) throw ParamError("load_samples: index out of range");
    const SampleRef& ref = m.files[ix];
    Tensor t = load_sample_tensor(dir, ref);
    if (t.rank() != 3 || t.dim(0) != m.shape[0] || t.dim(1) != m.shape[1] ||
        t.dim(2) != m.shape[2])
      throw FormatError(ref.path + ": tensor shape disagrees with the manifest");
    out.push_back({std::move(t), ref.label, ref.domain});
  }
  return out;
}

LeaveOneOutSplit leave_one_out_split(const DatasetManifest& m, int target_domain) {
  if (target_domain < 1 || static_cast<std::size_t>(target_domain) > m.domains)
    throw ParamError("leave_one_out_split: unknown domain id " + std::to_string(target_domain));
  LeaveOneOutSplit split;
  for (std::size_t i = 0; i < m.files.size(); ++i) {
    if (m.files[i].domain == target_domain)
      split.target.push_back(i);
    else
      split.source.push_back(i);
  }
  return split;
}

}  // namespace dg
