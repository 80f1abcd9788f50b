#include "moescore/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moescore/errors.hpp"
#include "moescore/kernels.hpp"

namespace moescore {

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  return std::any_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->requires_grad(); });
}

std::size_t last_axis(const Tensor& t) { return t.shape().back(); }

}  // namespace

Linear::Linear(std::size_t d_in, std::size_t d_out, bool requires_grad)
    : weight({d_in, d_out}, requires_grad), bias({d_out}, requires_grad) {}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("affine: weight " + shape_to_string(weight.shape()) +
                         " and bias " + shape_to_string(bias.shape()) + " do not match");
  }
  if ((x.rank() != 1 && x.rank() != 2) || last_axis(x) != weight.dim(0)) {
    throw DimensionError("affine: input " + shape_to_string(x.shape()) +
                         " does not match weight " + shape_to_string(weight.shape()));
  }
  const std::size_t n = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t d_in = weight.dim(0);
  const std::size_t d_out = weight.dim(1);
  Shape out_shape = x.rank() == 1 ? Shape{d_out} : Shape{n, d_out};
  Tensor y(out_shape, any_requires_grad({&x, &weight, &bias}));
  auto out = y.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * d_out);
  }
  kernels::matmul(x.data(), weight.data(), out, n, d_in, d_out);
  return y;
}

void affine_backward(const Tensor& y, Tensor& x, Tensor& weight, Tensor& bias) {
  const std::size_t d_in = weight.dim(0);
  const std::size_t d_out = weight.dim(1);
  const std::size_t n = x.size() / d_in;
  const auto dy = y.grad();
  if (weight.requires_grad()) kernels::matmul_tn(x.data(), dy, weight.grad(), n, d_in, d_out);
  if (bias.requires_grad()) {
    auto db = bias.grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d_out; ++j) db[j] += dy[i * d_out + j];
    }
  }
  if (x.requires_grad()) kernels::matmul_nt(dy, weight.data(), x.grad(), n, d_out, d_in);
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw DimensionError("softmax: empty last axis");
  const std::size_t k = last_axis(v);
  Tensor y(v.shape(), v.requires_grad());
  const auto in = v.data();
  auto out = y.data();
  for (std::size_t base = 0; base < in.size(); base += k) {
    const double mx = *std::max_element(in.begin() + base, in.begin() + base + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[base + j] = std::exp(in[base + j] - mx);
      total += out[base + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[base + j] /= total;
  }
  return y;
}

void softmax_backward(const Tensor& y, Tensor& v) {
  if (!v.requires_grad()) return;
  const std::size_t k = last_axis(y);
  const auto w = y.data();
  const auto dy = y.grad();
  auto dv = v.grad();
  for (std::size_t base = 0; base < w.size(); base += k) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += dy[base + j] * w[base + j];
    for (std::size_t j = 0; j < k; ++j) dv[base + j] += w[base + j] * (dy[base + j] - dot);
  }
}

Tensor tanh(const Tensor& x) {
  Tensor y(x.shape(), x.requires_grad());
  std::transform(x.data().begin(), x.data().end(), y.data().begin(),
                 [](double v) { return std::tanh(v); });
  return y;
}

void tanh_backward(const Tensor& y, Tensor& x) {
  if (!x.requires_grad()) return;
  const auto out = y.data();
  const auto dy = y.grad();
  auto dx = x.grad();
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (1.0 - out[i] * out[i]);
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng, DropoutMask* mask) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  Tensor y = x;
  y.zero_grad();
  if (mask) mask->multiplier.clear();
  if (mode == Mode::kEval || p == 0.0) return y;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> multiplier(x.size());
  for (auto& m : multiplier) m = rng.uniform() < p ? 0.0 : keep_scale;
  auto out = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= multiplier[i];
  if (mask) mask->multiplier = std::move(multiplier);
  return y;
}

void dropout_backward(const Tensor& y, const DropoutMask& mask, Tensor& x) {
  if (!x.requires_grad()) return;
  const auto dy = y.grad();
  auto dx = x.grad();
  if (mask.multiplier.empty()) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * mask.multiplier[i];
  }
}

Tensor max_pool_time(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("max_pool_time expects [T x d], got " + shape_to_string(x.shape()));
  const std::size_t t_len = x.dim(0);
  const std::size_t d = x.dim(1);
  Tensor y({d}, x.requires_grad());
  for (std::size_t j = 0; j < d; ++j) {
    double best = x.at(0, j);
    for (std::size_t i = 1; i < t_len; ++i) best = std::max(best, x.at(i, j));
    y[j] = best;
  }
  return y;
}

void max_pool_time_backward(const Tensor& y, Tensor& x) {
  if (!x.requires_grad()) return;
  const std::size_t t_len = x.dim(0);
  const std::size_t d = x.dim(1);
  const auto dy = y.grad();
  auto dx = x.grad();
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < t_len; ++i) {
      if (x.at(i, j) > x.at(arg, j)) arg = i;
    }
    dx[arg * d + j] += dy[j];
  }
}

AttentionParams::AttentionParams(std::size_t model_dim, std::size_t heads_)
    : heads(heads_),
      query(model_dim, model_dim),
      key(model_dim, model_dim),
      value(model_dim, model_dim),
      output(model_dim, model_dim) {
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("model width " + std::to_string(model_dim) +
                      " is not divisible by head count " + std::to_string(heads));
  }
}

void AttentionParams::init(Rng& rng) {
  for (Linear* l : {&query, &key, &value, &output}) {
    init_uniform_fan_in(l->weight, l->in_features(), rng);
    l->bias.fill(0.0);
  }
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const AttentionParams& params, AttentionCache* cache) {
  const std::size_t d = params.model_dim();
  if (params.heads == 0 || d % params.heads != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by head count " +
                      std::to_string(params.heads));
  }
  if (queries.rank() != 2 || keys_values.rank() != 2 || queries.dim(1) != d ||
      keys_values.dim(1) != d) {
    throw DimensionError("attention inputs " + shape_to_string(queries.shape()) + " and " +
                         shape_to_string(keys_values.shape()) + " must both be [T x " +
                         std::to_string(d) + "]");
  }
  const std::size_t tq = queries.dim(0);
  const std::size_t tk = keys_values.dim(0);
  const std::size_t heads = params.heads;
  const std::size_t dh = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.q = affine(queries, params.query);
  c.k = affine(keys_values, params.key);
  c.v = affine(keys_values, params.value);
  c.weights = Tensor({heads, tq, tk});
  c.context = Tensor({tq, d});
  for (Tensor* t : {&c.q, &c.k, &c.v, &c.weights, &c.context}) t->set_requires_grad(true);

  std::vector<double> scores(tk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += c.q.at(i, off + e) * c.k.at(j, off + e);
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        total += scores[j];
      }
      for (std::size_t j = 0; j < tk; ++j) {
        const double w = scores[j] / total;
        c.weights.at(h, i, j) = w;
        for (std::size_t e = 0; e < dh; ++e) c.context.at(i, off + e) += w * c.v.at(j, off + e);
      }
    }
  }
  return affine(c.context, params.output);
}

void multi_head_attention_backward(const Tensor& y, AttentionCache& c, Tensor& queries,
                                   Tensor& keys_values, AttentionParams& params) {
  affine_backward(y, c.context, params.output);
  const std::size_t tq = c.q.dim(0);
  const std::size_t tk = c.k.dim(0);
  const std::size_t heads = params.heads;
  const std::size_t dh = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dw(tk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      const auto dctx = c.context.grad().subspan(i * c.context.dim(1) + off, dh);
      double dot = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        double g = 0.0;
        for (std::size_t e = 0; e < dh; ++e) g += dctx[e] * c.v.at(j, off + e);
        dw[j] = g;
        dot += g * c.weights.at(h, i, j);
      }
      for (std::size_t j = 0; j < tk; ++j) {
        const double w = c.weights.at(h, i, j);
        auto dv = c.v.grad().subspan(j * c.v.dim(1) + off, dh);
        for (std::size_t e = 0; e < dh; ++e) dv[e] += w * dctx[e];
        const double ds = w * (dw[j] - dot) * scale;
        auto dq = c.q.grad().subspan(i * c.q.dim(1) + off, dh);
        auto dk = c.k.grad().subspan(j * c.k.dim(1) + off, dh);
        for (std::size_t e = 0; e < dh; ++e) {
          dq[e] += ds * c.k.at(j, off + e);
          dk[e] += ds * c.q.at(i, off + e);
        }
      }
    }
  }
  affine_backward(c.q, queries, params.query);
  affine_backward(c.k, keys_values, params.key);
  affine_backward(c.v, keys_values, params.value);
}

}  // namespace moescore
