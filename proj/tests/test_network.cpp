#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dg/error.hpp"
#include "dg/network.hpp"
#include "dg/random.hpp"
#include "dg/rng.hpp"

using namespace dg;

namespace {

Tensor random_batch(std::size_t b, std::array<std::size_t, 3> shape, Rng& rng) {
  Tensor x({b, shape[0], shape[1], shape[2]});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_unit();
  return x;
}

std::vector<int> random_labels(std::size_t b, std::size_t classes, Rng& rng) {
  std::vector<int> y(b);
  for (std::size_t i = 0; i < b; ++i) y[i] = 1 + static_cast<int>(sample_below(rng, classes));
  return y;
}

// ---------------------------------------------------------------------
// Independent reference: a plain-loop long-double forward pass that reads
// layer kinds/shapes from the network but parameter VALUES from `params`
// (flat per parameter layer, weights then bias). Used as the oracle for
// central finite differences.
// ---------------------------------------------------------------------
using ld = long double;

ld oracle_mean_loss(const Network& net, const std::vector<std::vector<double>>& params,
                    const Tensor& x, const std::vector<int>& labels) {
  const std::size_t batch = x.dim(0);
  std::vector<ld> cur(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cur[i] = x[i];
  std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  bool flat = false;
  std::size_t pl = 0;

  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const Layer& l = net.layer(li);
    switch (l.kind) {
      case LayerKind::Conv3x3: {
        const std::size_t co = l.weight.dim(0), ci = l.weight.dim(1);
        const std::vector<double>& p = params[pl++];
        const std::size_t bias_off = co * ci * 9;
        std::vector<ld> out(batch * co * h * w);
        for (std::size_t bi = 0; bi < batch; ++bi)
          for (std::size_t oc = 0; oc < co; ++oc)
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t xx = 0; xx < w; ++xx) {
                ld acc = p[bias_off + oc];
                for (std::size_t ic = 0; ic < ci; ++ic)
                  for (int kh = 0; kh < 3; ++kh)
                    for (int kw = 0; kw < 3; ++kw) {
                      const long sy = static_cast<long>(y) + kh - 1;
                      const long sx = static_cast<long>(xx) + kw - 1;
                      if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) ||
                          sx >= static_cast<long>(w))
                        continue;
                      acc += static_cast<ld>(p[((oc * ci + ic) * 3 + kh) * 3 + kw]) *
                             cur[((bi * c + ic) * h + sy) * w + sx];
                    }
                out[((bi * co + oc) * h + y) * w + xx] = acc;
              }
        cur = std::move(out);
        c = co;
        break;
      }
      case LayerKind::Relu:
        for (ld& v : cur) v = v > 0.0L ? v : 0.0L;
        break;
      case LayerKind::GlobalAvgPool: {
        std::vector<ld> out(batch * c);
        for (std::size_t bi = 0; bi < batch; ++bi)
          for (std::size_t ci = 0; ci < c; ++ci) {
            ld s = 0.0L;
            for (std::size_t i = 0; i < h * w; ++i) s += cur[(bi * c + ci) * h * w + i];
            out[bi * c + ci] = s / static_cast<ld>(h * w);
          }
        cur = std::move(out);
        flat = true;
        break;
      }
      case LayerKind::Flatten:
        c = c * h * w;
        flat = true;
        break;
      case LayerKind::Dense: {
        const std::size_t out_n = l.weight.dim(0), in_n = l.weight.dim(1);
        const std::vector<double>& p = params[pl++];
        const std::size_t bias_off = out_n * in_n;
        std::vector<ld> out(batch * out_n);
        for (std::size_t bi = 0; bi < batch; ++bi)
          for (std::size_t o = 0; o < out_n; ++o) {
            ld s = p[bias_off + o];
            for (std::size_t i = 0; i < in_n; ++i)
              s += static_cast<ld>(p[o * in_n + i]) * cur[bi * in_n + i];
            out[bi * out_n + o] = s;
          }
        cur = std::move(out);
        c = out_n;
        break;
      }
    }
  }
  (void)flat;
  ld total = 0.0L;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const ld* row = cur.data() + bi * c;
    ld m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    ld s = 0.0L;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    total += m + std::log(s) - row[labels[bi] - 1];
  }
  return total / static_cast<ld>(batch);
}

// Central finite differences against the long-double oracle; returns the
// worst relative error over every parameter of every layer.
double worst_gradcheck_error(const Network& net, const Tensor& x,
                             const std::vector<int>& labels, double eps) {
  ForwardCache cache;
  Network mutable_net = net;
  mutable_net.forward(x, cache);
  LayerGradients g;
  {
    ForwardCache c2;
    mutable_net.forward(x, c2);
    g = mutable_net.backward(c2, labels);
  }
  std::vector<std::vector<double>> params;
  for (std::size_t pl = 0; pl < net.param_layer_count(); ++pl)
    params.push_back(net.flat_params(pl));

  double worst = 0.0;
  for (std::size_t pl = 0; pl < params.size(); ++pl) {
    for (std::size_t k = 0; k < params[pl].size(); ++k) {
      const double orig = params[pl][k];
      params[pl][k] = orig + eps;
      const ld lp = oracle_mean_loss(net, params, x, labels);
      params[pl][k] = orig - eps;
      const ld lm = oracle_mean_loss(net, params, x, labels);
      params[pl][k] = orig;
      const double numeric = static_cast<double>((lp - lm) / (2.0L * static_cast<ld>(eps)));
      const double analytic = g.layers[pl].values[k];
      const double denom = std::max(std::abs(analytic), std::abs(numeric));
      const double rel = denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("zero-parameter network maps everything to zero logits") {
  Rng rng(1);
  Network net = Network::make("conv3x3:4,relu,gap,dense:*", {3, 8, 8}, 5, rng);
  for (std::size_t pl = 0; pl < net.param_layer_count(); ++pl)
    net.set_flat_params(pl, std::vector<double>(net.param_count(pl), 0.0));
  const Tensor logits = net.forward(random_batch(3, {3, 8, 8}, rng));
  for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("identity dense layer reproduces its input") {
  Rng rng(2);
  Network net = Network::make("flatten,dense:*", {3, 1, 1}, 3, rng);
  std::vector<double> id(3 * 3 + 3, 0.0);
  id[0] = id[4] = id[8] = 1.0;
  net.set_flat_params(0, id);
  Tensor x({2, 3, 1, 1}, std::vector<double>{0.3, -1.7, 2.5, 0.0, 4.0, -0.25});
  const Tensor logits = net.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(logits[i] == x[i]);
}

TEST_CASE("forward is deterministic for a fixed seed") {
  Rng a(33), b(33);
  const Network na = Network::make(Network::kDefaultArch, {3, 8, 8}, 7, a);
  const Network nb = Network::make(Network::kDefaultArch, {3, 8, 8}, 7, b);
  Rng rx(34);
  const Tensor x = random_batch(4, {3, 8, 8}, rx);
  const Tensor la = na.forward(x), lb = nb.forward(x), la2 = na.forward(x);
  for (std::size_t i = 0; i < la.size(); ++i) {
    CHECK(la[i] == lb[i]);
    CHECK(la[i] == la2[i]);
  }
}

TEST_CASE("forward rejects mismatched input shapes") {
  Rng rng(3);
  const Network net = Network::make("conv3x3:4,relu,gap,dense:*", {3, 8, 8}, 4, rng);
  CHECK_THROWS_AS(net.forward(Tensor({2, 3, 4, 4})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor({3, 8, 8})), ShapeError);
}

TEST_CASE("architecture parser rejects malformed strings") {
  Rng rng(4);
  CHECK_THROWS_AS(Network::make("conv3x3:0,gap,dense:*", {3, 8, 8}, 4, rng), ParamError);
  CHECK_THROWS_AS(Network::make("dense:*", {3, 8, 8}, 4, rng), ParamError);
  CHECK_THROWS_AS(Network::make("conv3x3:4,gap,dense:3", {3, 8, 8}, 4, rng), ParamError);
  CHECK_THROWS_AS(Network::make("pool5", {3, 8, 8}, 4, rng), ParamError);
}

TEST_CASE("cross_entropy: uniform logits, saturated margin, reference value") {
  const Tensor uniform({2, 7}, 0.0);
  CHECK(cross_entropy(uniform, {3, 5}) == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  Tensor margin({1, 4}, 0.0);
  margin(0, 2) = 30.0;
  CHECK(cross_entropy(margin, {3}) < 1e-12);

  // independent evaluation of -log(e^3 / (e^1 + e^2 + e^3))
  const long double expected =
      std::log(std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L)) - 3.0L;
  const Tensor t({1, 3}, std::vector<double>{1.0, 2.0, 3.0});
  CHECK(std::abs(cross_entropy(t, {3}) - static_cast<double>(expected)) < 1e-12);
  CHECK(cross_entropy(t, {3}) == doctest::Approx(0.40761).epsilon(1e-4));

  CHECK_THROWS_AS(cross_entropy(t, {4}), LabelError);
  CHECK_THROWS_AS(cross_entropy(t, {0}), LabelError);
}

TEST_CASE("analytic gradients match the finite-difference oracle on a 2-layer net") {
  Rng rng(6);
  const Network net = Network::make("conv3x3:5,relu,gap,dense:*", {3, 6, 6}, 4, rng);
  Rng rdata(7);
  const Tensor x = random_batch(8, {3, 6, 6}, rdata);
  const std::vector<int> labels = random_labels(8, 4, rdata);
  CHECK(worst_gradcheck_error(net, x, labels, 1e-5) < 1e-6);
}

TEST_CASE("dense-only gradients match the oracle (flatten path)") {
  Rng rng(8);
  const Network net = Network::make("flatten,dense:6,relu,dense:*", {2, 3, 3}, 3, rng);
  Rng rdata(9);
  const Tensor x = random_batch(5, {2, 3, 3}, rdata);
  const std::vector<int> labels = random_labels(5, 3, rdata);
  CHECK(worst_gradcheck_error(net, x, labels, 1e-5) < 1e-6);
}

TEST_CASE("duplicating every sample leaves the mean gradients unchanged") {
  Rng rng(10);
  const Network net = Network::make("conv3x3:4,relu,gap,dense:*", {2, 6, 6}, 3, rng);
  Rng rdata(11);
  const Tensor x = random_batch(4, {2, 6, 6}, rdata);
  const std::vector<int> labels = random_labels(4, 3, rdata);

  Tensor dup({8, 2, 6, 6});
  std::vector<int> dup_labels(8);
  const std::size_t chw = 2 * 6 * 6;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t twin = 0; twin < 2; ++twin) {
      std::copy(x.data() + i * chw, x.data() + (i + 1) * chw,
                dup.data() + (2 * i + twin) * chw);
      dup_labels[2 * i + twin] = labels[i];
    }
  }

  ForwardCache c1, c2;
  Network n1 = net, n2 = net;
  n1.forward(x, c1);
  n2.forward(dup, c2);
  const LayerGradients g1 = n1.backward(c1, labels);
  const LayerGradients g2 = n2.backward(c2, dup_labels);
  for (std::size_t pl = 0; pl < g1.size(); ++pl)
    for (std::size_t k = 0; k < g1.layers[pl].values.size(); ++k) {
      const double a = g1.layers[pl].values[k], b = g2.layers[pl].values[k];
      CHECK(std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)));
    }
}

TEST_CASE("softmax-CE gradient sums to zero per sample") {
  Rng rng(12);
  Network net = Network::make("flatten,dense:*", {5, 1, 1}, 5, rng);
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor x = random_batch(1, {5, 1, 1}, rng);
    ForwardCache cache;
    net.forward(x, cache);
    const std::vector<int> labels = {1 + static_cast<int>(sample_below(rng, 5))};
    const LayerGradients g = net.backward(cache, labels);
    // bias gradient of the single dense layer is exactly dL/dlogits
    const LayerGrad& gl = g.layers[0];
    double sum = 0.0;
    for (std::size_t i = gl.weight_count; i < gl.values.size(); ++i) sum += gl.values[i];
    CHECK(std::abs(sum) < 1e-12);
  }
}

TEST_CASE("permuting the batch moves mean loss and gradients by at most 1e-12") {
  Rng rng(13);
  const Network net = Network::make("conv3x3:4,relu,gap,dense:*", {2, 6, 6}, 3, rng);
  Rng rdata(14);
  const Tensor x = random_batch(6, {2, 6, 6}, rdata);
  const std::vector<int> labels = random_labels(6, 3, rdata);

  const std::vector<std::size_t> perm = {4, 0, 5, 2, 1, 3};
  Tensor px({6, 2, 6, 6});
  std::vector<int> plabels(6);
  const std::size_t chw = 2 * 6 * 6;
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy(x.data() + perm[i] * chw, x.data() + (perm[i] + 1) * chw, px.data() + i * chw);
    plabels[i] = labels[perm[i]];
  }

  ForwardCache c1, c2;
  Network n1 = net, n2 = net;
  const double l1 = cross_entropy(n1.forward(x, c1), labels);
  const double l2 = cross_entropy(n2.forward(px, c2), plabels);
  CHECK(std::abs(l1 - l2) < 1e-12);
  const LayerGradients g1 = n1.backward(c1, labels);
  const LayerGradients g2 = n2.backward(c2, plabels);
  for (std::size_t pl = 0; pl < g1.size(); ++pl)
    for (std::size_t k = 0; k < g1.layers[pl].values.size(); ++k)
      CHECK(std::abs(g1.layers[pl].values[k] - g2.layers[pl].values[k]) <
            1e-12 * (1.0 + std::abs(g1.layers[pl].values[k])));
}

TEST_CASE("backward rejects stale or foreign caches") {
  Rng rng(15);
  Network net = Network::make("flatten,dense:*", {2, 1, 1}, 2, rng);
  Network other = Network::make("flatten,dense:*", {2, 1, 1}, 2, rng);
  const Tensor x = random_batch(2, {2, 1, 1}, rng);
  ForwardCache cache;
  net.forward(x, cache);
  CHECK_THROWS_AS(other.backward(cache, {1, 2}), StateError);
  CHECK_NOTHROW(net.backward(cache, {1, 2}));
  CHECK_THROWS_AS(net.backward(cache, {1, 2}), StateError);  // consumed
}

TEST_CASE("perturb_parameters: sigma=0 copy, displacement norm, loss gap") {
  Rng rng(16);
  const Network net = Network::make(Network::kDefaultArch, {3, 8, 8}, 7, rng);

  Rng r0(17);
  const Network same = perturb_parameters(net, 0.0, r0);
  std::size_t total_params = 0;
  for (std::size_t pl = 0; pl < net.param_layer_count(); ++pl) {
    const auto a = net.flat_params(pl), b = same.flat_params(pl);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    total_params += a.size();
  }

  Rng rx(18);
  const Tensor x = random_batch(4, {3, 8, 8}, rx);
  const std::vector<int> labels = random_labels(4, 7, rx);
  CHECK(cross_entropy(net.forward(x), labels) ==
        cross_entropy(same.forward(x), labels));  // gap exactly 0 at sigma=0

  // chi-distribution check: E||eps|| ~ sigma * sqrt(P) within 5%
  const double sigma = 0.03;
  Rng rp(19);
  double mean_norm = 0.0;
  const int draws = 100;
  for (int k = 0; k < draws; ++k) {
    const Network pert = perturb_parameters(net, sigma, rp);
    double ss = 0.0;
    for (std::size_t pl = 0; pl < net.param_layer_count(); ++pl) {
      const auto a = net.flat_params(pl), b = pert.flat_params(pl);
      for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
    }
    mean_norm += std::sqrt(ss);
  }
  mean_norm /= draws;
  const double expected = sigma * std::sqrt(static_cast<double>(total_params));
  CHECK(std::abs(mean_norm - expected) / expected < 0.05);

  Rng rn(20);
  CHECK_THROWS_AS(perturb_parameters(net, -0.1, rn), ParamError);
}
