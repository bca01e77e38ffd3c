#pragma once

#include <cstddef>
#include <vector>

#include "dg/network.hpp"

namespace dg {

/// EMA-maintained per-layer enhancement vector w in [0,1]^L.
struct EnhancementState {
  std::vector<double> w;
  double beta = 0.999;
  bool initialized = false;

  EnhancementState() = default;
  EnhancementState(std::size_t layers, double beta_);
};

struct OptimizerConfig {
  double base_lr = 0.01;       // eta_0
  std::size_t total_steps = 0; // T
  std::size_t step = 0;        // t
  bool digb_enabled = true;
  bool similarity_excludes_bias = false;  // drop bias entries from Eq.-style similarity
};

struct SimilarityResult {
  std::vector<double> s;          // cosine similarity per layer, in [-1, 1]
  std::vector<char> degenerate;   // layer had a (near-)zero gradient norm
};

/// Per-layer cosine similarity of the two branches' gradient vectors.
/// A layer whose norm falls below 1e-12 contributes s = 0 and is flagged.
SimilarityResult layer_similarity(const LayerGradients& g, const LayerGradients& g_prime,
                                  bool exclude_bias = false);

struct NormalizeResult {
  std::vector<double> w_hat;
  bool degenerate = false;  // constant input; w_hat forced to all-ones
};

/// Min-max normalization across layers: (s - min) / (max - min).
/// A constant vector (range below 1e-12) maps to all-ones.
NormalizeResult min_max_normalize(const std::vector<double>& s);

/// w <- beta * w + (1 - beta) * w_hat; the first ever update copies w_hat.
void ema_update(EnhancementState& state, const std::vector<double>& w_hat);

/// g_hat_l = (g_l + g'_l) * w_l, elementwise per layer.
LayerGradients reweight(const LayerGradients& g, const LayerGradients& g_prime,
                        const std::vector<double>& w);

/// eta_t = eta_0 * (1 + cos(pi * t / T)) / 2.
double cosine_lr(const OptimizerConfig& cfg);

/// theta_l -= eta_t * g_hat_l for every layer, then advances t.
/// Throws ScheduleError once t == T.
void sgd_step(Network& net, const LayerGradients& g_hat, OptimizerConfig& cfg);

struct StepResult {
  double loss = 0.0;
  double loss_prime = 0.0;
  std::vector<double> similarity;  // empty when DIGB is disabled
  std::vector<double> w_hat;       // per-step normalized similarities
  std::vector<double> w;           // enhancement vector used for this update
  bool w_degenerate = false;       // the all-ones rule fired this step
};

/// One siamese training step on the contrastive pair (x, x_prime) under a
/// shared label vector: forward/backward both branches through the shared
/// parameters, update the enhancement vector from this step's raw
/// gradients, re-weight with the post-update w, and apply SGD. With
/// digb_enabled false the similarity machinery is skipped and w = 1.
StepResult digb_step(Network& net, const Tensor& x, const Tensor& x_prime,
                     const std::vector<int>& labels, EnhancementState& state,
                     OptimizerConfig& cfg);

}  // namespace dg
