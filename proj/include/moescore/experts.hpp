#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moescore/features.hpp"
#include "moescore/tensor.hpp"

namespace moescore {

struct ScoreRange {
  double min = 1.0;
  double max = 10.0;

  void validate() const;
  double midpoint() const { return 0.5 * (min + max); }
};

// u.v / (|u| |v|), clamped to [-1, 1]. Throws DegenerateVectorError on a
// zero-norm input and DimensionError on a length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

// min + (max - min) * (tanh(z) + 1) / 2
double squash_to_range(double z, const ScoreRange& range);
// d squash / dz
double squash_slope(double z, const ScoreRange& range);

struct ExpertOutput {
  double score = 0.0;
  Tensor confidence_features;  // evidence handed to the gate
};

// A named trainable tensor owned by a model component.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

// Per-call intermediates for a backward pass.
struct ForwardState {
  virtual ~ForwardState() = default;
};

class Expert {
 public:
  virtual ~Expert() = default;

  virtual std::string kind() const = 0;

  // When `state` is non-null the expert stores what backward() needs there.
  // Eval mode never touches `rng`.
  virtual ExpertOutput forward(const FeatureRecord& record, Mode mode, Rng& rng,
                               std::unique_ptr<ForwardState>* state = nullptr) const = 0;

  // Accumulates d(loss)/d(params) given d(loss)/d(score).
  virtual void backward(ForwardState& state, double dscore) = 0;

  virtual std::vector<ParamRef> parameters() = 0;

  ExpertOutput predict(const FeatureRecord& record) const;

  void set_frozen(bool frozen);
  bool frozen();
  void zero_grad();
};

// Affine calibration head a * cos + b on top of frozen pooled embeddings.
struct SimilarityHead {
  Tensor a{{1}, {1.0}, true};
  Tensor b{{1}, {0.0}, true};
};

class SimilarityExpert final : public Expert {
 public:
  // `slot` indexes FeatureRecord::pooled.
  SimilarityExpert(std::size_t slot, ScoreRange range);

  std::string kind() const override { return "similarity"; }
  ExpertOutput forward(const FeatureRecord& record, Mode mode, Rng& rng,
                       std::unique_ptr<ForwardState>* state = nullptr) const override;
  void backward(ForwardState& state, double dscore) override;
  std::vector<ParamRef> parameters() override;

  SimilarityHead& head() { return head_; }
  const SimilarityHead& head() const { return head_; }
  std::size_t slot() const { return slot_; }

 private:
  std::size_t slot_;
  ScoreRange range_;
  SimilarityHead head_;
};

// softmax(alpha)-weighted sum over the layer axis: [L x T x d] -> [T x d].
// `weights`, when given, receives softmax(alpha) for the backward pass.
Tensor aggregate_layers(const Tensor& layers, const Tensor& alpha, Tensor* weights = nullptr);
void aggregate_layers_backward(const Tensor& out, const Tensor& weights, Tensor& layers, Tensor& alpha);

}  // namespace moescore
