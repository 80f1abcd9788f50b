#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "moescore/experts.hpp"
#include "moescore/layers.hpp"

namespace moescore {

struct Expert4Config {
  std::size_t model_dim = 512;
  std::size_t heads = 8;
  std::size_t hidden_dim = 256;
  double dropout = 0.1;

  void validate() const;
};

// Input widths, taken from the feature files.
struct Expert4Dims {
  std::size_t layers = 0;
  std::size_t audio_dim = 0;
  std::size_t text_dim = 0;

  static Expert4Dims of(const FeatureRecord& record);
};

struct Expert4Params {
  Tensor alpha;                   // [L] layer logits
  Linear audio_proj;              // d_a -> d
  Linear text_proj;               // d_t -> d
  AttentionParams audio_to_text;  // audio queries, text keys/values
  AttentionParams text_to_audio;  // text queries, audio keys/values
  Linear hidden;                  // 2d -> d_h
  Linear out;                     // d_h -> 1
  double dropout = 0.0;

  Expert4Params() = default;
  Expert4Params(const Expert4Config& config, const Expert4Dims& dims);

  // Uniform 1/sqrt(fan_in) weights, zero biases, zero layer logits and a
  // zero output layer so a fresh expert predicts the range midpoint.
  void init(Rng& rng);

  std::vector<ParamRef> parameters();
};

struct FuseCache {
  AttentionCache audio_cache;
  AttentionCache text_cache;
  Tensor audio_attended;  // [T_a x d]
  Tensor text_attended;   // [T_t x d]
  Tensor audio_pooled;    // [d]
  Tensor text_pooled;     // [d]
};

// Bidirectional cross-attention, max-pool over time on both sides, concat.
// audio [T_a x d], text [T_t x d] -> [2d].
Tensor seqcoattn_fuse(const Tensor& audio, const Tensor& text, const AttentionParams& audio_to_text,
                      const AttentionParams& text_to_audio, FuseCache* cache = nullptr);
void seqcoattn_fuse_backward(const Tensor& fused, FuseCache& cache, Tensor& audio, Tensor& text,
                             AttentionParams& audio_to_text, AttentionParams& text_to_audio);

// Everything one Expert-4 forward produces, kept for backward.
struct Expert4Trace final : ForwardState {
  Tensor layers;
  Tensor text_in;
  Tensor layer_weights;
  Tensor aggregated;
  Tensor audio;
  Tensor text;
  FuseCache fuse;
  Tensor fused;
  Tensor hidden;
  Tensor activated;
  DropoutMask mask;
  Tensor dropped;
  Tensor logit;
};

class SeqCoAttnExpert final : public Expert {
 public:
  SeqCoAttnExpert(const Expert4Config& config, const Expert4Dims& dims, ScoreRange range);

  std::string kind() const override { return "seqcoattn"; }
  ExpertOutput forward(const FeatureRecord& record, Mode mode, Rng& rng,
                       std::unique_ptr<ForwardState>* state = nullptr) const override;
  void backward(ForwardState& state, double dscore) override;
  std::vector<ParamRef> parameters() override { return params_.parameters(); }

  Expert4Params& params() { return params_; }
  const Expert4Params& params() const { return params_; }
  const Expert4Dims& dims() const { return dims_; }

 private:
  Expert4Dims dims_;
  ScoreRange range_;
  Expert4Params params_;
};

}  // namespace moescore
