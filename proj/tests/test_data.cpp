#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "dg/container.hpp"
#include "dg/dataset.hpp"
#include "dg/error.hpp"
#include "dg/rng.hpp"
#include "dg/spectral.hpp"

using namespace dg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dgkit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.per_domain = 28;
  cfg.shape = {3, 16, 16};
  return cfg;
}

// Nearest-centroid classifier on arbitrary feature vectors; 50/50
// train/test split by alternating indices.
double centroid_accuracy(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int groups) {
  const std::size_t dim = features[0].size();
  std::vector<std::vector<double>> centroid(groups, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < features.size(); i += 2) {
    const int gi = labels[i] - 1;
    for (std::size_t d = 0; d < dim; ++d) centroid[gi][d] += features[i][d];
    ++count[gi];
  }
  for (int gi = 0; gi < groups; ++gi) {
    REQUIRE(count[gi] > 0);
    for (std::size_t d = 0; d < dim; ++d) centroid[gi][d] /= static_cast<double>(count[gi]);
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < features.size(); i += 2) {
    double best = 1e300;
    int arg = 0;
    for (int gi = 0; gi < groups; ++gi) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = features[i][d] - centroid[gi][d];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        arg = gi + 1;
      }
    }
    correct += arg == labels[i] ? 1 : 0;
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("tensor container round trip is bit-exact") {
  const fs::path dir = temp_dir("container");
  Rng rng(41);
  Tensor t({2, 5, 3});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(static_cast<float>(rng.next_unit() * 10.0 - 5.0));
  save_tensor(dir / "t.dgt", t);
  const Tensor back = load_tensor(dir / "t.dgt");
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  // byte-level: saving the loaded tensor reproduces the file exactly
  save_tensor(dir / "t2.dgt", back);
  CHECK(file_bytes(dir / "t.dgt") == file_bytes(dir / "t2.dgt"));
}

TEST_CASE("container rejects malformed files with diagnostics") {
  const fs::path dir = temp_dir("container_bad");
  Tensor t({2, 2}, std::vector<double>{1, 2, 3, 4});
  save_tensor(dir / "ok.dgt", t);

  // truncation: drop the last 5 bytes
  {
    const std::vector<char> bytes = file_bytes(dir / "ok.dgt");
    std::ofstream out(dir / "trunc.dgt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  try {
    load_tensor(dir / "trunc.dgt");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected") != std::string::npos);  // names expected vs actual length
  }

  // bad magic
  {
    std::vector<char> bytes = file_bytes(dir / "ok.dgt");
    bytes[0] = 'X';
    std::ofstream out(dir / "magic.dgt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_tensor(dir / "magic.dgt"), FormatError);

  // bad version
  {
    std::vector<char> bytes = file_bytes(dir / "ok.dgt");
    bytes[4] = 9;
    std::ofstream out(dir / "version.dgt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_tensor(dir / "version.dgt"), FormatError);

  CHECK_THROWS_AS(load_tensor(dir / "missing.dgt"), FormatError);
}

TEST_CASE("generate_dataset: counts, balance, pixel range, manifest") {
  const fs::path dir = temp_dir("gen");
  GeneratorConfig cfg = small_config();
  const DatasetManifest m = generate_dataset(cfg, 1234, dir);

  CHECK(m.files.size() == cfg.domains * cfg.per_domain);
  CHECK(m.counts.size() == cfg.domains);
  for (std::size_t c : m.counts) CHECK(c == cfg.per_domain);

  // balanced classes within each domain (counts differ by at most 1),
  // and every label appears in every domain (shared label space)
  for (std::size_t d = 1; d <= cfg.domains; ++d) {
    std::vector<int> per_class(cfg.classes, 0);
    for (const SampleRef& f : m.files)
      if (f.domain == static_cast<int>(d)) ++per_class[f.label - 1];
    const int lo = *std::min_element(per_class.begin(), per_class.end());
    const int hi = *std::max_element(per_class.begin(), per_class.end());
    CHECK(lo >= 1);
    CHECK(hi - lo <= 1);
  }

  std::vector<std::size_t> all(m.files.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (const DomainSample& s : load_samples(dir, m, all)) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      CHECK(s.x[i] >= 0.0);
      CHECK(s.x[i] <= 1.0);
    }
  }

  const DatasetManifest loaded = load_manifest(dir);
  CHECK(loaded.files.size() == m.files.size());
  CHECK(loaded.seed == 1234);
}

TEST_CASE("generate_dataset is byte-deterministic in the seed") {
  const fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2"), d3 = temp_dir("det3");
  GeneratorConfig cfg = small_config();
  cfg.per_domain = 14;
  generate_dataset(cfg, 99, d1);
  generate_dataset(cfg, 99, d2);
  generate_dataset(cfg, 100, d3);

  bool any_differs = false;
  for (const auto& entry : fs::directory_iterator(d1)) {
    const fs::path rel = entry.path().filename();
    CHECK(file_bytes(d1 / rel) == file_bytes(d2 / rel));
    if (fs::exists(d3 / rel) && file_bytes(d1 / rel) != file_bytes(d3 / rel)) any_differs = true;
  }
  CHECK(any_differs);  // a different seed actually changes the data
}

TEST_CASE("generator validates its config") {
  const fs::path dir = temp_dir("genbad");
  GeneratorConfig cfg = small_config();
  cfg.domains = 1;
  CHECK_THROWS_AS(generate_dataset(cfg, 1, dir), ParamError);
  cfg = small_config();
  cfg.shape = {3, 16, 12};
  CHECK_THROWS_AS(generate_dataset(cfg, 1, dir), ParamError);
  cfg = small_config();
  cfg.shape = {3, 12, 12};  // not a power of two
  CHECK_THROWS_AS(generate_dataset(cfg, 1, dir), ParamError);
  cfg = small_config();
  cfg.classes = 1;
  CHECK_THROWS_AS(generate_dataset(cfg, 1, dir), ParamError);
}

TEST_CASE("manifest validation catches tampered counts") {
  const fs::path dir = temp_dir("tamper");
  GeneratorConfig cfg = small_config();
  cfg.per_domain = 7;
  DatasetManifest m = generate_dataset(cfg, 5, dir);
  m.counts[0] += 1;
  save_manifest(m, dir);
  CHECK_THROWS_AS(load_manifest(dir), FormatError);
}

TEST_CASE("leave_one_out_split partitions the dataset") {
  const fs::path dir = temp_dir("split");
  GeneratorConfig cfg = small_config();
  cfg.per_domain = 7;
  const DatasetManifest m = generate_dataset(cfg, 6, dir);

  const LeaveOneOutSplit s = leave_one_out_split(m, 2);
  std::set<int> source_domains;
  for (std::size_t ix : s.source) source_domains.insert(m.files[ix].domain);
  CHECK(source_domains == std::set<int>{1, 3, 4});
  for (std::size_t ix : s.target) CHECK(m.files[ix].domain == 2);

  // union covers every sample exactly once
  std::set<std::size_t> all;
  for (std::size_t ix : s.source) all.insert(ix);
  for (std::size_t ix : s.target) all.insert(ix);
  CHECK(all.size() == m.files.size());
  CHECK(s.source.size() + s.target.size() == m.files.size());

  // every target label appears among the sources
  std::set<int> source_labels, target_labels;
  for (std::size_t ix : s.source) source_labels.insert(m.files[ix].label);
  for (std::size_t ix : s.target) target_labels.insert(m.files[ix].label);
  for (int y : target_labels) CHECK(source_labels.count(y) == 1);

  CHECK_THROWS_AS(leave_one_out_split(m, 0), ParamError);
  CHECK_THROWS_AS(leave_one_out_split(m, 5), ParamError);
}

TEST_CASE("domains are amplitude-separable; classes survive amplitude removal") {
  // Runs the two nearest-centroid oracles on three seeds of the default
  // generator style (scaled down in sample count for test runtime).
  for (std::uint64_t seed : {std::uint64_t{11}, std::uint64_t{22}, std::uint64_t{33}}) {
    const fs::path dir = temp_dir("oracle_" + std::to_string(seed));
    GeneratorConfig cfg;
    cfg.per_domain = 28;
    cfg.shape = {3, 16, 16};
    cfg.glyph_jitter = 1;  // jitter scales with the halved resolution
    const DatasetManifest m = generate_dataset(cfg, seed, dir);
    std::vector<std::size_t> all(m.files.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const std::vector<DomainSample> samples = load_samples(dir, m, all);

    std::vector<std::vector<double>> amp_features, phase_features;
    std::vector<int> domain_labels, class_labels;
    for (const DomainSample& s : samples) {
      const Spectrum sp = fft2(s.x);
      amp_features.push_back(sp.amplitude.values());
      // phase-only reconstruction: unit amplitude, original phase
      Spectrum unit = sp;
      for (auto& v : unit.amplitude.values()) v = 1.0;
      unit.from_real = false;
      phase_features.push_back(ifft2(unit).values());
      domain_labels.push_back(s.domain);
      class_labels.push_back(s.label);
    }
    const double domain_acc =
        centroid_accuracy(amp_features, domain_labels, static_cast<int>(m.domains));
    const double class_acc =
        centroid_accuracy(phase_features, class_labels, static_cast<int>(m.classes));
    CHECK(domain_acc > 0.8);
    CHECK(class_acc > 0.6);
  }
}
