#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dg/dataset.hpp"
#include "dg/digb.hpp"
#include "dg/network.hpp"
#include "dg/rng.hpp"
#include "dg/spectral.hpp"

namespace dg {

enum class Mode { baseline, ddc, ddc_digb };

Mode mode_from_string(const std::string& s);
const char* mode_name(Mode m);

/// How the contrastive branch is produced: the spectral pipeline, or an
/// exact copy of the original batch (diagnostic switch).
enum class AugmentKind { ddc, identity };

struct ExperimentConfig {
  std::filesystem::path dataset;
  std::filesystem::path out_dir;
  int target_domain = 0;
  std::uint64_t seed = 0;
  Mode mode = Mode::ddc_digb;
  std::size_t epochs = 104;
  std::size_t batch_size = 16;
  double learning_rate = 0.15;  // eta_0; the siamese modes see 2x through g + g'
  double ema_beta = 0.9;
  AugmentConfig augment;        // Beta shapes for (alpha, lambda)
  AugmentKind augment_kind = AugmentKind::ddc;
  std::string arch = Network::kDefaultArch;
  bool similarity_excludes_bias = false;
  std::size_t eval_batch = 64;
};

/// Parses the train config JSON; unknown fields are rejected.
ExperimentConfig experiment_config_from_json(const std::string& json_text);

/// Paper-scale hyper-parameters (batch 64, lr 0.002, 50 epochs, beta 0.999).
void apply_paper_scale(ExperimentConfig& cfg);

struct ExperimentResult {
  double source_accuracy = 0.0;  // evaluated from the saved checkpoint
  double target_accuracy = 0.0;
  std::size_t steps = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path enhancement_csv;
};

/// Trains per the configured mode, writes metrics.jsonl / checkpoint.json /
/// enhancement.csv / summary.json under out_dir and returns the final
/// accuracies (computed from the persisted checkpoint, so `eval` agrees
/// with the summary byte for byte).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Initial parameters for a config: a function of seed and architecture
/// only, so ablation modes start from identical networks.
Network build_initial_network(const ExperimentConfig& cfg, const DatasetManifest& manifest);

/// Fraction of argmax-correct predictions. Ties resolve to the lowest
/// class index; the result does not depend on the evaluation batch size.
double evaluate(const Network& net, const std::vector<DomainSample>& samples,
                std::size_t batch = 64);

double accuracy_from_logits(const Tensor& logits, const std::vector<int>& labels);

struct FlatnessReport {
  double mean_gap = 0.0;   // mean over draws of loss(theta) - loss(theta + eps)
  double std_error = 0.0;
  double sigma = 0.0;
  std::size_t draws = 0;
};

/// Loss-gap probe under Gaussian parameter noise. The gap is typically
/// negative near a minimum (perturbation raises the loss); the sign is
/// reported, not asserted.
FlatnessReport flatness_probe(const Network& net, const std::vector<DomainSample>& samples,
                              double sigma, std::size_t draws, Rng& rng);

/// Offline DDC pass over a dataset: one contrastive sample per input with
/// a donor drawn from another domain (when one exists), labels copied,
/// provenance recorded in the output manifest.
DatasetManifest augment_corpus(const std::filesystem::path& dataset_dir,
                               const std::filesystem::path& out_dir, const AugmentConfig& aug,
                               std::uint64_t seed);

/// `layer_index,weight` rows, layer indices 1-based.
void write_enhancement_csv(const std::vector<double>& w, const std::filesystem::path& path);

}  // namespace dg
