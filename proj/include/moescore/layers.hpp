#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "moescore/tensor.hpp"

// Differentiable building blocks. Every op is a forward function plus a
// matching *_backward that reads the upstream gradient from the output
// tensor's grad buffer and accumulates into the grad buffers of those inputs
// that have requires_grad set. Callers keep whatever the forward produced and
// replay the backward calls in reverse order.
namespace moescore {

// Weight [d_in x d_out] and bias [d_out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t d_in, std::size_t d_out, bool requires_grad = true);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

// y[n x d_out] = x[n x d_in] W + b. A rank-1 x is treated as a single row and
// yields a rank-1 y.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
void affine_backward(const Tensor& y, Tensor& x, Tensor& weight, Tensor& bias);

inline Tensor affine(const Tensor& x, const Linear& layer) {
  return affine(x, layer.weight, layer.bias);
}
inline void affine_backward(const Tensor& y, Tensor& x, Linear& layer) {
  affine_backward(y, x, layer.weight, layer.bias);
}

// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& v);
void softmax_backward(const Tensor& y, Tensor& v);

Tensor tanh(const Tensor& x);
void tanh_backward(const Tensor& y, Tensor& x);

// Per-element multipliers drawn by a train-mode dropout call.
struct DropoutMask {
  std::vector<double> multiplier;  // empty means identity
};

// Inverted dropout. Eval mode (or p == 0) returns x unchanged.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng, DropoutMask* mask = nullptr);
void dropout_backward(const Tensor& y, const DropoutMask& mask, Tensor& x);

// Columnwise max over the time axis: [T x d] -> [d].
Tensor max_pool_time(const Tensor& x);
// Routes each column's gradient to its first maximal row.
void max_pool_time_backward(const Tensor& y, Tensor& x);

struct AttentionParams {
  std::size_t heads = 1;
  Linear query;
  Linear key;
  Linear value;
  Linear output;

  AttentionParams() = default;
  AttentionParams(std::size_t model_dim, std::size_t heads);

  std::size_t model_dim() const { return query.in_features(); }
  std::size_t head_dim() const { return model_dim() / heads; }
  void init(Rng& rng);
};

// Intermediates kept by multi_head_attention for its backward pass.
struct AttentionCache {
  Tensor q;        // [Tq x d]
  Tensor k;        // [Tk x d]
  Tensor v;        // [Tk x d]
  Tensor weights;  // [heads x Tq x Tk]
  Tensor context;  // [Tq x d], heads concatenated
};

// Scaled dot-product attention with per-head query/key/value maps and an
// output projection. No positional encoding, residual, or normalization.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                            const AttentionParams& params, AttentionCache* cache = nullptr);
void multi_head_attention_backward(const Tensor& y, AttentionCache& cache, Tensor& queries,
                                   Tensor& keys_values, AttentionParams& params);

}  // namespace moescore
