#include "dg/digb.hpp"

#include <algorithm>
#include <cmath>

#include "dg/error.hpp"

namespace dg {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kNormFloor = 1e-12;
constexpr double kRangeFloor = 1e-12;

void require_matching(const LayerGradients& a, const LayerGradients& b, const char* who) {
  if (a.size() != b.size()) throw ShapeError(std::string(who) + ": layer count mismatch");
  for (std::size_t l = 0; l < a.size(); ++l)
    if (a.layers[l].values.size() != b.layers[l].values.size())
      throw ShapeError(std::string(who) + ": gradient length mismatch at layer " +
                       std::to_string(l + 1));
}

}  // namespace

EnhancementState::EnhancementState(std::size_t layers, double beta_)
    : w(layers, 1.0), beta(beta_), initialized(false) {
  if (beta < 0.0 || beta > 1.0) throw ParamError("EnhancementState: beta must be in [0, 1]");
}

SimilarityResult layer_similarity(const LayerGradients& g, const LayerGradients& g_prime,
                                  bool exclude_bias) {
  require_matching(g, g_prime, "layer_similarity");
  SimilarityResult out;
  out.s.resize(g.size());
  out.degenerate.assign(g.size(), 0);
  for (std::size_t l = 0; l < g.size(); ++l) {
    const std::vector<double>& a = g.layers[l].values;
    const std::vector<double>& b = g_prime.layers[l].values;
    const std::size_t n = exclude_bias ? g.layers[l].weight_count : a.size();
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kNormFloor || nb < kNormFloor) {
      out.s[l] = 0.0;  // no directional evidence
      out.degenerate[l] = 1;
    } else {
      out.s[l] = std::clamp(dot / (na * nb), -1.0, 1.0);
    }
  }
  return out;
}

NormalizeResult min_max_normalize(const std::vector<double>& s) {
  if (s.empty()) throw ParamError("min_max_normalize: empty input");
  NormalizeResult out;
  double lo = s[0], hi = s[0];
  for (double v : s) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < kRangeFloor) {
    // Indistinguishable layers: no re-weighting rather than a full stop.
    out.w_hat.assign(s.size(), 1.0);
    out.degenerate = true;
    return out;
  }
  out.w_hat.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.w_hat[i] = (s[i] - lo) / (hi - lo);
  return out;
}

void ema_update(EnhancementState& state, const std::vector<double>& w_hat) {
  if (state.w.size() != w_hat.size()) throw ShapeError("ema_update: length mismatch");
  if (!state.initialized) {
    state.w = w_hat;
    state.initialized = true;
    return;
  }
  for (std::size_t i = 0; i < state.w.size(); ++i)
    state.w[i] = state.beta * state.w[i] + (1.0 - state.beta) * w_hat[i];
}

LayerGradients reweight(const LayerGradients& g, const LayerGradients& g_prime,
                        const std::vector<double>& w) {
  require_matching(g, g_prime, "reweight");
  if (w.size() != g.size()) throw ShapeError("reweight: weight vector length mismatch");
  LayerGradients out;
  out.layers.resize(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    const std::vector<double>& a = g.layers[l].values;
    const std::vector<double>& b = g_prime.layers[l].values;
    LayerGrad& dst = out.layers[l];
    dst.weight_count = g.layers[l].weight_count;
    dst.values.resize(a.size());
    const double wl = w[l];
    for (std::size_t i = 0; i < a.size(); ++i) dst.values[i] = (a[i] + b[i]) * wl;
  }
  return out;
}

double cosine_lr(const OptimizerConfig& cfg) {
  if (cfg.total_steps == 0) return cfg.base_lr;
  const double frac = static_cast<double>(cfg.step) / static_cast<double>(cfg.total_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(kPi * frac));
}

void sgd_step(Network& net, const LayerGradients& g_hat, OptimizerConfig& cfg) {
  if (cfg.step >= cfg.total_steps)
    throw ScheduleError("sgd_step: schedule exhausted (t == T)");
  if (g_hat.size() != net.param_layer_count())
    throw ShapeError("sgd_step: gradient layer count mismatch");
  const double eta = cosine_lr(cfg);
  for (std::size_t l = 0; l < g_hat.size(); ++l)
    net.axpy_params(l, -eta, g_hat.layers[l].values);
  ++cfg.step;
}

StepResult digb_step(Network& net, const Tensor& x, const Tensor& x_prime,
                     const std::vector<int>& labels, EnhancementState& state,
                     OptimizerConfig& cfg) {
  if (!x.same_shape(x_prime)) throw ShapeError("digb_step: contrastive pair shape mismatch");
  StepResult res;

  ForwardCache cache, cache_prime;
  const Tensor logits = net.forward(x, cache);
  res.loss = cross_entropy(logits, labels);
  const Tensor logits_prime = net.forward(x_prime, cache_prime);
  res.loss_prime = cross_entropy(logits_prime, labels);

  const LayerGradients g = net.backward(cache, labels);
  const LayerGradients g_prime = net.backward(cache_prime, labels);

  if (cfg.digb_enabled) {
    const SimilarityResult sim = layer_similarity(g, g_prime, cfg.similarity_excludes_bias);
    const NormalizeResult norm = min_max_normalize(sim.s);
    ema_update(state, norm.w_hat);
    res.similarity = sim.s;
    res.w_hat = norm.w_hat;
    res.w_degenerate = norm.degenerate;
    res.w = state.w;
  } else {
    res.w.assign(net.param_layer_count(), 1.0);
    res.w_hat = res.w;
  }

  const LayerGradients g_hat = reweight(g, g_prime, res.w);
  sgd_step(net, g_hat, cfg);
  return res;
}

}  // namespace dg
