#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

enum class LayerKind { Conv3x3, Relu, GlobalAvgPool, Flatten, Dense };

const char* layer_kind_name(LayerKind k);

struct Layer {
  LayerKind kind;
  Tensor weight;  // conv: {out, in, 3, 3}; dense: {out, in}; empty otherwise
  Tensor bias;    // {out} for parameter-bearing kinds

  bool has_params() const { return kind == LayerKind::Conv3x3 || kind == LayerKind::Dense; }
};

/// Flat per-layer gradient vectors from one backward pass, ordered by
/// parameter-bearing layer (weights first, then bias, row-major).
struct LayerGrad {
  std::vector<double> values;
  std::size_t weight_count = 0;  // leading entries that belong to weights
};

struct LayerGradients {
  std::vector<LayerGrad> layers;
  std::size_t size() const { return layers.size(); }
};

class Network;

/// Activations recorded by forward() for exactly one backward() call.
struct ForwardCache {
  const Network* owner = nullptr;
  bool valid = false;
  std::vector<Tensor> inputs;  // input tensor of each layer, forward order
  Tensor logits;
};

/// Small layered classifier with explicit per-layer forward/backward.
///
/// Architecture strings are comma-separated layer tokens:
///   conv3x3:<out_channels> | relu | gap | flatten | dense:<out> | dense:*
/// where dense:* resolves to the class count. Example (the default):
///   conv3x3:16,relu,conv3x3:16,relu,conv3x3:32,relu,gap,dense:*
class Network {
 public:
  static constexpr const char* kDefaultArch =
      "conv3x3:16,relu,conv3x3:16,relu,conv3x3:32,relu,gap,dense:*";

  Network() = default;

  /// Builds and He-uniform-initializes a network. Weights are drawn from
  /// rng in layer order, then biases are zeroed.
  static Network make(const std::string& arch, std::array<std::size_t, 3> input_shape,
                      std::size_t classes, Rng& rng);

  const std::string& arch() const { return arch_; }
  std::array<std::size_t, 3> input_shape() const { return input_shape_; }
  std::size_t classes() const { return classes_; }

  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return layers_[i]; }

  /// Number of parameter-bearing layers (the L that DIGB indexes).
  std::size_t param_layer_count() const { return param_layer_ix_.size(); }
  /// The pl-th parameter-bearing layer, 0-based in forward order.
  const Layer& param_layer_at(std::size_t pl) const { return layers_[param_layer_ix_[pl]]; }
  std::size_t param_count(std::size_t pl) const;
  std::size_t weight_count(std::size_t pl) const;
  LayerKind param_layer_kind(std::size_t pl) const;

  std::vector<double> flat_params(std::size_t pl) const;
  void set_flat_params(std::size_t pl, std::span<const double> v);
  /// theta_pl += coeff * v over the flattened (weights, bias) vector.
  void axpy_params(std::size_t pl, double coeff, std::span<const double> v);

  /// Batch forward pass; x is {B, C, H, W}. Fills the cache for backward.
  Tensor forward(const Tensor& x, ForwardCache& cache) const;
  /// Forward without recording (evaluation).
  Tensor forward(const Tensor& x) const;

  /// Exact analytic gradients of the mean cross-entropy over the batch.
  /// The cache must come from a forward() on this network and is consumed.
  LayerGradients backward(ForwardCache& cache, const std::vector<int>& labels) const;

 private:
  Layer& param_layer(std::size_t pl);
  const Layer& param_layer(std::size_t pl) const;

  std::string arch_;
  std::array<std::size_t, 3> input_shape_{};
  std::size_t classes_ = 0;
  std::vector<Layer> layers_;
  std::vector<std::size_t> param_layer_ix_;
};

/// Mean over the batch of -log softmax(logits)[label]; labels are 1-based.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Copy of the network with theta' = theta + eps, eps ~ N(0, sigma^2)
/// i.i.d. per parameter. The original is untouched.
Network perturb_parameters(const Network& net, double sigma, Rng& rng);

}  // namespace dg
