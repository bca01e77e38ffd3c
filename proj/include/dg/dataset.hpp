#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

/// Synthetic multi-domain generator settings. Domains are amplitude-coded
/// (per-domain radial spectral tilt plus channel gains) and classes are
/// phase-coded (glyph position/orientation patterns), so amplitude swaps
/// genuinely move samples across domain styles while class evidence stays
/// in the phase.
/// Defaults give the benchmark its intended geometry: the three source
/// styles sit at distinct (tilt, gain) corners while the held-out fourth
/// style lies near the span of their amplitude mixtures, so amplitude
/// interpolation across sources genuinely rehearses the target style.
struct GeneratorConfig {
  std::size_t domains = 4;       // K
  std::size_t classes = 7;       // C_cls
  std::size_t per_domain = 128;  // N_i
  std::array<std::size_t, 3> shape = {3, 16, 16};  // C x H x W, H = W power of two
  std::vector<double> tilt = {0.6, 1.6, 1.0, 1.3};  // per-domain spectral exponent
  std::vector<std::array<double, 3>> channel_gains = {
      {1.00, 0.50, 0.50}, {0.50, 1.00, 0.50}, {0.50, 0.50, 1.00}, {0.85, 0.42, 0.73}};
  double noise_sigma = 0.012;
  double tilt_jitter = 0.1;
  double gain_jitter = 0.08;
  std::size_t glyph_jitter = 1;  // max |position offset| in pixels
};

struct Provenance {
  std::size_t source = 0;  // index into the source dataset's file list
  std::size_t donor = 0;
  double alpha = 0.0;
  double lambda = 0.0;
};

struct SampleRef {
  std::string path;  // relative to the dataset directory
  int label = 0;     // y in [1..C_cls]
  int domain = 0;    // in [1..K]
  std::optional<Provenance> provenance;
};

struct DatasetManifest {
  int version = 1;
  std::size_t domains = 0;
  std::size_t classes = 0;
  std::array<std::size_t, 3> shape = {0, 0, 0};
  std::uint64_t seed = 0;
  std::vector<std::size_t> counts;  // per domain
  std::vector<SampleRef> files;
};

struct DomainSample {
  Tensor x;
  int label = 0;
  int domain = 0;
};

struct LeaveOneOutSplit {
  std::vector<std::size_t> source;  // indices into manifest.files
  std::vector<std::size_t> target;
};

GeneratorConfig generator_config_from_json(const std::string& json_text);

/// Writes one .dgt file per sample plus manifest.json, then returns the
/// manifest. Identical config and seed reproduce every byte.
DatasetManifest generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir);

/// Loads and validates manifest.json from a dataset directory.
DatasetManifest load_manifest(const std::filesystem::path& dir);

Tensor load_sample_tensor(const std::filesystem::path& dir, const SampleRef& ref);

std::vector<DomainSample> load_samples(const std::filesystem::path& dir,
                                       const DatasetManifest& m,
                                       const std::vector<std::size_t>& indices);

/// Sources = every domain except the target; the target list is untouched
/// by training. Throws ParamError on an unknown domain id.
LeaveOneOutSplit leave_one_out_split(const DatasetManifest& m, int target_domain);

}  // namespace dg
