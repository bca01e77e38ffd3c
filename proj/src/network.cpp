#include "dg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dg/error.hpp"
#include "dg/random.hpp"

namespace dg {

namespace {

struct Dims {
  std::size_t c = 0, h = 0, w = 0;  // h = w = 0 once flattened to {B, c}
  bool flat = false;
};

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_width(const std::string& token, const std::string& spec, std::size_t classes) {
  if (spec == "*") return classes;
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(spec, &pos);
  } catch (const std::exception&) {
    throw ParamError("bad layer width in token '" + token + "'");
  }
  if (pos != spec.size() || v == 0) throw ParamError("bad layer width in token '" + token + "'");
  return v;
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Relu: return "relu";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

Network Network::make(const std::string& arch, std::array<std::size_t, 3> input_shape,
                      std::size_t classes, Rng& rng) {
  if (classes < 2) throw ParamError("network needs at least 2 classes");
  if (input_shape[0] == 0 || input_shape[1] == 0 || input_shape[2] == 0)
    throw ParamError("network input shape must be positive");
  Network net;
  net.arch_ = arch;
  net.input_shape_ = input_shape;
  net.classes_ = classes;

  Dims d{input_shape[0], input_shape[1], input_shape[2], false};
  for (const std::string& token : split_tokens(arch)) {
    if (token.empty()) throw ParamError("empty layer token in architecture string");
    Layer layer;
    if (token.rfind("conv3x3:", 0) == 0) {
      if (d.flat) throw ParamError("conv3x3 after the features were flattened");
      const std::size_t out_ch = parse_width(token, token.substr(8), classes);
      layer.kind = LayerKind::Conv3x3;
      layer.weight = Tensor({out_ch, d.c, 3, 3});
      layer.bias = Tensor({out_ch});
      const double limit = std::sqrt(6.0 / static_cast<double>(d.c * 9));
      for (double& v : layer.weight.values()) v = (2.0 * rng.next_unit() - 1.0) * limit;
      d.c = out_ch;
    } else if (token == "relu") {
      layer.kind = LayerKind::Relu;
    } else if (token == "gap") {
      if (d.flat) throw ParamError("gap after the features were flattened");
      layer.kind = LayerKind::GlobalAvgPool;
      d = {d.c, 0, 0, true};
    } else if (token == "flatten") {
      if (d.flat) throw ParamError("flatten applied twice");
      layer.kind = LayerKind::Flatten;
      d = {d.c * d.h * d.w, 0, 0, true};
    } else if (token.rfind("dense:", 0) == 0) {
      if (!d.flat) throw ParamError("dense needs flattened features (use gap or flatten)");
      const std::size_t out = parse_width(token, token.substr(6), classes);
      layer.kind = LayerKind::Dense;
      layer.weight = Tensor({out, d.c});
      layer.bias = Tensor({out});
      const double limit = std::sqrt(6.0 / static_cast<double>(d.c));
      for (double& v : layer.weight.values()) v = (2.0 * rng.next_unit() - 1.0) * limit;
      d.c = out;
    } else {
      throw ParamError("unknown layer token '" + token + "'");
    }
    net.layers_.push_back(std::move(layer));
  }
  if (!d.flat || d.c != classes)
    throw ParamError("architecture must end in a flat feature vector of width = class count");
  for (std::size_t i = 0; i < net.layers_.size(); ++i)
    if (net.layers_[i].has_params()) net.param_layer_ix_.push_back(i);
  if (net.param_layer_ix_.empty()) throw ParamError("architecture has no parameter-bearing layer");
  return net;
}

Layer& Network::param_layer(std::size_t pl) { return layers_.at(param_layer_ix_.at(pl)); }
const Layer& Network::param_layer(std::size_t pl) const {
  return layers_.at(param_layer_ix_.at(pl));
}

std::size_t Network::param_count(std::size_t pl) const {
  const Layer& l = param_layer(pl);
  return l.weight.size() + l.bias.size();
}

std::size_t Network::weight_count(std::size_t pl) const { return param_layer(pl).weight.size(); }

LayerKind Network::param_layer_kind(std::size_t pl) const { return param_layer(pl).kind; }

std::vector<double> Network::flat_params(std::size_t pl) const {
  const Layer& l = param_layer(pl);
  std::vector<double> out;
  out.reserve(param_count(pl));
  out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
  out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
  return out;
}

void Network::set_flat_params(std::size_t pl, std::span<const double> v) {
  Layer& l = param_layer(pl);
  if (v.size() != param_count(pl)) throw ShapeError("set_flat_params: length mismatch");
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(l.weight.size()),
            l.weight.values().begin());
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(l.weight.size()), v.end(),
            l.bias.values().begin());
}

void Network::axpy_params(std::size_t pl, double coeff, std::span<const double> v) {
  Layer& l = param_layer(pl);
  if (v.size() != param_count(pl)) throw ShapeError("axpy_params: length mismatch");
  double* w = l.weight.data();
  const std::size_t nw = l.weight.size();
  for (std::size_t i = 0; i < nw; ++i) w[i] += coeff * v[i];
  double* b = l.bias.data();
  for (std::size_t i = 0; i < l.bias.size(); ++i) b[i] += coeff * v[nw + i];
}

namespace {

Tensor conv3x3_forward(const Tensor& in, const Tensor& weight, const Tensor& bias) {
  const std::size_t b = in.dim(0), ci = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t co = weight.dim(0);
  Tensor out({b, co, h, w});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      double* op = out.data() + ((bi * co + oc) * h) * w;
      const double bv = bias[oc];
      for (std::size_t i = 0; i < h * w; ++i) op[i] = bv;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* ip = in.data() + ((bi * ci + ic) * h) * w;
        const double* wp = weight.data() + ((oc * ci + ic) * 3) * 3;
        for (int kh = 0; kh < 3; ++kh) {
          const int dy = kh - 1;
          for (int kw = 0; kw < 3; ++kw) {
            const int dx = kw - 1;
            const double wv = wp[kh * 3 + kw];
            const std::size_t h0 = dy < 0 ? 1 : 0;
            const std::size_t h1 = dy > 0 ? h - 1 : h;
            const std::size_t w0 = dx < 0 ? 1 : 0;
            const std::size_t w1 = dx > 0 ? w - 1 : w;
            for (std::size_t y = h0; y < h1; ++y) {
              const std::size_t sy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy);
              const double* irow = ip + sy * w + (dx < 0 ? 0 : static_cast<std::size_t>(dx));
              double* orow = op + y * w + (dx < 0 ? 1 : 0);
              const std::size_t span = w1 - w0;
              for (std::size_t x = 0; x < span; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates dW/dB for one layer and returns dIn. Iterates the batch in
// ascending order so per-entry accumulation order is reproducible.
Tensor conv3x3_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out,
                        Tensor& d_weight, Tensor& d_bias) {
  const std::size_t b = in.dim(0), ci = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t co = weight.dim(0);
  Tensor d_in({b, ci, h, w});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      const double* gp = d_out.data() + ((bi * co + oc) * h) * w;
      double sum = 0.0;
      for (std::size_t i = 0; i < h * w; ++i) sum += gp[i];
      d_bias[oc] += sum;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* ip = in.data() + ((bi * ci + ic) * h) * w;
        double* dip = d_in.data() + ((bi * ci + ic) * h) * w;
        double* dwp = d_weight.data() + ((oc * ci + ic) * 3) * 3;
        const double* wp = weight.data() + ((oc * ci + ic) * 3) * 3;
        for (int kh = 0; kh < 3; ++kh) {
          const int dy = kh - 1;
          for (int kw = 0; kw < 3; ++kw) {
            const int dx = kw - 1;
            const std::size_t h0 = dy < 0 ? 1 : 0;
            const std::size_t h1 = dy > 0 ? h - 1 : h;
            const std::size_t w0 = dx < 0 ? 1 : 0;
            const std::size_t w1 = dx > 0 ? w - 1 : w;
            double acc = 0.0;
            const double wv = wp[kh * 3 + kw];
            for (std::size_t y = h0; y < h1; ++y) {
              const std::size_t sy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy);
              const std::size_t in_skip = dx < 0 ? 0 : static_cast<std::size_t>(dx);
              const double* irow = ip + sy * w + in_skip;
              double* drow = dip + sy * w + in_skip;
              const double* grow = gp + y * w + (dx < 0 ? 1 : 0);
              const std::size_t span = w1 - w0;
              for (std::size_t x = 0; x < span; ++x) {
                acc += grow[x] * irow[x];
                drow[x] += wv * grow[x];
              }
            }
            dwp[kh * 3 + kw] += acc;
          }
        }
      }
    }
  }
  return d_in;
}

}  // namespace

Tensor Network::forward(const Tensor& x, ForwardCache& cache) const {
  if (layers_.empty()) throw StateError("forward on an empty network");
  if (x.rank() != 4 || x.dim(1) != input_shape_[0] || x.dim(2) != input_shape_[1] ||
      x.dim(3) != input_shape_[2])
    throw ShapeError("forward: input must be {B, C, H, W} matching the network input shape");
  cache.owner = this;
  cache.valid = false;
  cache.inputs.clear();
  cache.inputs.reserve(layers_.size());
  Tensor cur = x;
  for (const Layer& l : layers_) {
    cache.inputs.push_back(cur);
    switch (l.kind) {
      case LayerKind::Conv3x3:
        cur = conv3x3_forward(cur, l.weight, l.bias);
        break;
      case LayerKind::Relu: {
        Tensor out = cur;
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        cur = std::move(out);
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const std::size_t b = cur.dim(0), c = cur.dim(1), hw = cur.dim(2) * cur.dim(3);
        Tensor out({b, c});
        for (std::size_t bi = 0; bi < b; ++bi)
          for (std::size_t ci = 0; ci < c; ++ci) {
            const double* p = cur.data() + (bi * c + ci) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += p[i];
            out(bi, ci) = s / static_cast<double>(hw);
          }
        cur = std::move(out);
        break;
      }
      case LayerKind::Flatten: {
        const std::size_t b = cur.dim(0);
        cur = cur.reshaped({b, cur.size() / b});
        break;
      }
      case LayerKind::Dense: {
        const std::size_t b = cur.dim(0), in_n = cur.dim(1), out_n = l.weight.dim(0);
        Tensor out({b, out_n});
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* ip = cur.data() + bi * in_n;
          for (std::size_t o = 0; o < out_n; ++o) {
            const double* wp = l.weight.data() + o * in_n;
            double s = l.bias[o];
            for (std::size_t i = 0; i < in_n; ++i) s += wp[i] * ip[i];
            out(bi, o) = s;
          }
        }
        cur = std::move(out);
        break;
      }
    }
  }
  cache.logits = cur;
  cache.valid = true;
  return cur;
}

Tensor Network::forward(const Tensor& x) const {
  ForwardCache scratch;
  return forward(x, scratch);
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be {B, C}");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) throw ShapeError("cross_entropy: one label per row required");
  double total = 0.0;
  for (std::size_t bi = 0; bi < b; ++bi) {
    const int y = labels[bi];
    if (y < 1 || static_cast<std::size_t>(y) > c)
      throw LabelError("cross_entropy: label " + std::to_string(y) + " outside [1, " +
                       std::to_string(c) + "]");
    const double* row = logits.data() + bi * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - m);
    total += (m + std::log(sum)) - row[y - 1];
  }
  return total / static_cast<double>(b);
}

LayerGradients Network::backward(ForwardCache& cache, const std::vector<int>& labels) const {
  if (cache.owner != this || !cache.valid)
    throw StateError("backward: cache is missing, stale, or from another network");
  const std::size_t b = cache.logits.dim(0), c = cache.logits.dim(1);
  if (labels.size() != b) throw ShapeError("backward: one label per sample required");

  // d(mean CE)/d(logits) = (softmax - onehot) / B
  Tensor grad({b, c});
  for (std::size_t bi = 0; bi < b; ++bi) {
    const int y = labels[bi];
    if (y < 1 || static_cast<std::size_t>(y) > c)
      throw LabelError("backward: label " + std::to_string(y) + " outside [1, " +
                       std::to_string(c) + "]");
    const double* row = cache.logits.data() + bi * c;
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - m);
    for (std::size_t j = 0; j < c; ++j)
      grad(bi, j) = (std::exp(row[j] - m) / sum - (static_cast<std::size_t>(y - 1) == j ? 1.0 : 0.0)) /
                    static_cast<double>(b);
  }

  LayerGradients grads;
  grads.layers.resize(param_layer_ix_.size());
  std::size_t pl = param_layer_ix_.size();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const Tensor& in = cache.inputs[li];
    switch (l.kind) {
      case LayerKind::Conv3x3: {
        Tensor dw(l.weight.shape());
        Tensor db(l.bias.shape());
        grad = conv3x3_backward(in, l.weight, grad, dw, db);
        LayerGrad& g = grads.layers[--pl];
        g.weight_count = dw.size();
        g.values.reserve(dw.size() + db.size());
        g.values.insert(g.values.end(), dw.values().begin(), dw.values().end());
        g.values.insert(g.values.end(), db.values().begin(), db.values().end());
        break;
      }
      case LayerKind::Relu: {
        Tensor next(in.shape());
        for (std::size_t i = 0; i < in.size(); ++i) next[i] = in[i] > 0.0 ? grad[i] : 0.0;
        grad = std::move(next);
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const std::size_t bb = in.dim(0), cc = in.dim(1), hw = in.dim(2) * in.dim(3);
        Tensor next(in.shape());
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t bi = 0; bi < bb; ++bi)
          for (std::size_t ci = 0; ci < cc; ++ci) {
            const double g = grad(bi, ci) * inv;
            double* p = next.data() + (bi * cc + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) p[i] = g;
          }
        grad = std::move(next);
        break;
      }
      case LayerKind::Flatten:
        grad = grad.reshaped(in.shape());
        break;
      case LayerKind::Dense: {
        const std::size_t bb = in.dim(0), in_n = in.dim(1), out_n = l.weight.dim(0);
        Tensor dw(l.weight.shape());
        Tensor db(l.bias.shape());
        Tensor next({bb, in_n});
        for (std::size_t bi = 0; bi < bb; ++bi) {
          const double* ip = in.data() + bi * in_n;
          const double* gp = grad.data() + bi * out_n;
          double* np = next.data() + bi * in_n;
          for (std::size_t o = 0; o < out_n; ++o) {
            const double g = gp[o];
            db[o] += g;
            double* dwp = dw.data() + o * in_n;
            const double* wp = l.weight.data() + o * in_n;
            for (std::size_t i = 0; i < in_n; ++i) {
              dwp[i] += g * ip[i];
              np[i] += wp[i] * g;
            }
          }
        }
        grad = std::move(next);
        LayerGrad& g = grads.layers[--pl];
        g.weight_count = dw.size();
        g.values.reserve(dw.size() + db.size());
        g.values.insert(g.values.end(), dw.values().begin(), dw.values().end());
        g.values.insert(g.values.end(), db.values().begin(), db.values().end());
        break;
      }
    }
  }
  cache.valid = false;  // one backward per forward
  return grads;
}

Network perturb_parameters(const Network& net, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ParamError("perturb_parameters: sigma must be nonnegative");
  Network out = net;
  for (std::size_t pl = 0; pl < out.param_layer_count(); ++pl) {
    std::vector<double> eps = sample_gaussian(rng, sigma, out.param_count(pl));
    out.axpy_params(pl, 1.0, eps);
  }
  return out;
}

}  // namespace dg
