#include "moescore/seqcoattn.hpp"

#include "moescore/errors.hpp"

namespace moescore {

void Expert4Config::validate() const {
  if (model_dim == 0 || hidden_dim == 0) throw ConfigError("widths must be positive", "expert4");
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                          std::to_string(heads),
                      "expert4.heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("must lie in [0, 1)", "expert4.dropout");
}

Expert4Dims Expert4Dims::of(const FeatureRecord& record) {
  if (!record.audio_layers || !record.text_seq) {
    throw DimensionError("pair '" + record.pair_id + "' has no sequence features");
  }
  return {record.audio_layers->dim(0), record.audio_layers->dim(2), record.text_seq->dim(1)};
}

Expert4Params::Expert4Params(const Expert4Config& config, const Expert4Dims& dims)
    : alpha({dims.layers}, true),
      audio_proj(dims.audio_dim, config.model_dim),
      text_proj(dims.text_dim, config.model_dim),
      audio_to_text(config.model_dim, config.heads),
      text_to_audio(config.model_dim, config.heads),
      hidden(2 * config.model_dim, config.hidden_dim),
      out(config.hidden_dim, 1),
      dropout(config.dropout) {
  config.validate();
}

void Expert4Params::init(Rng& rng) {
  alpha.fill(0.0);
  for (Linear* l : {&audio_proj, &text_proj, &hidden}) {
    init_uniform_fan_in(l->weight, l->in_features(), rng);
    l->bias.fill(0.0);
  }
  audio_to_text.init(rng);
  text_to_audio.init(rng);
  out.weight.fill(0.0);
  out.bias.fill(0.0);
}

std::vector<ParamRef> Expert4Params::parameters() {
  std::vector<ParamRef> ps = {{"alpha", &alpha},
                              {"audio_proj.weight", &audio_proj.weight},
                              {"audio_proj.bias", &audio_proj.bias},
                              {"text_proj.weight", &text_proj.weight},
                              {"text_proj.bias", &text_proj.bias}};
  for (auto [prefix, attn] : {std::pair{"attn_audio_text", &audio_to_text},
                              std::pair{"attn_text_audio", &text_to_audio}}) {
    for (auto [name, lin] : {std::pair{"query", &attn->query}, std::pair{"key", &attn->key},
                             std::pair{"value", &attn->value}, std::pair{"output", &attn->output}}) {
      const std::string base = std::string(prefix) + "." + name;
      ps.push_back({base + ".weight", &lin->weight});
      ps.push_back({base + ".bias", &lin->bias});
    }
  }
  ps.push_back({"mlp_hidden.weight", &hidden.weight});
  ps.push_back({"mlp_hidden.bias", &hidden.bias});
  ps.push_back({"mlp_out.weight", &out.weight});
  ps.push_back({"mlp_out.bias", &out.bias});
  return ps;
}

Tensor seqcoattn_fuse(const Tensor& audio, const Tensor& text, const AttentionParams& audio_to_text,
                      const AttentionParams& text_to_audio, FuseCache* cache) {
  if (audio.rank() != 2 || text.rank() != 2) {
    throw DimensionError("seqcoattn_fuse expects [T x d] inputs, got " + shape_to_string(audio.shape()) +
                         " and " + shape_to_string(text.shape()));
  }
  FuseCache local;
  FuseCache& c = cache ? *cache : local;
  c.audio_attended = multi_head_attention(audio, text, audio_to_text, &c.audio_cache);
  c.text_attended = multi_head_attention(text, audio, text_to_audio, &c.text_cache);
  c.audio_pooled = max_pool_time(c.audio_attended);
  c.text_pooled = max_pool_time(c.text_attended);

  const std::size_t d = c.audio_pooled.size();
  Tensor fused({2 * d}, true);
  std::copy(c.audio_pooled.data().begin(), c.audio_pooled.data().end(), fused.data().begin());
  std::copy(c.text_pooled.data().begin(), c.text_pooled.data().end(), fused.data().begin() + d);
  return fused;
}

void seqcoattn_fuse_backward(const Tensor& fused, FuseCache& c, Tensor& audio, Tensor& text,
                             AttentionParams& audio_to_text, AttentionParams& text_to_audio) {
  const std::size_t d = c.audio_pooled.size();
  const auto g = fused.grad();
  for (std::size_t j = 0; j < d; ++j) {
    c.audio_pooled.grad()[j] += g[j];
    c.text_pooled.grad()[j] += g[d + j];
  }
  max_pool_time_backward(c.audio_pooled, c.audio_attended);
  max_pool_time_backward(c.text_pooled, c.text_attended);
  multi_head_attention_backward(c.audio_attended, c.audio_cache, audio, text, audio_to_text);
  multi_head_attention_backward(c.text_attended, c.text_cache, text, audio, text_to_audio);
}

SeqCoAttnExpert::SeqCoAttnExpert(const Expert4Config& config, const Expert4Dims& dims, ScoreRange range)
    : dims_(dims), range_(range), params_(config, dims) {
  range_.validate();
}

ExpertOutput SeqCoAttnExpert::forward(const FeatureRecord& record, Mode mode, Rng& rng,
                                      std::unique_ptr<ForwardState>* state) const {
  const Expert4Dims got = Expert4Dims::of(record);
  if (got.layers != dims_.layers || got.audio_dim != dims_.audio_dim || got.text_dim != dims_.text_dim) {
    throw DimensionError("pair '" + record.pair_id + "': sequence features " +
                         shape_to_string(record.audio_layers->shape()) + "/" +
                         shape_to_string(record.text_seq->shape()) + " do not match the expert's " +
                         std::to_string(dims_.layers) + " layers, widths " +
                         std::to_string(dims_.audio_dim) + "/" + std::to_string(dims_.text_dim));
  }
  auto trace = std::make_unique<Expert4Trace>();
  Expert4Trace& t = *trace;
  const Expert4Params& p = params_;
  t.layers = *record.audio_layers;
  t.text_in = *record.text_seq;
  t.aggregated = aggregate_layers(t.layers, p.alpha, &t.layer_weights);
  t.audio = affine(t.aggregated, p.audio_proj);
  t.text = affine(t.text_in, p.text_proj);
  t.fused = seqcoattn_fuse(t.audio, t.text, p.audio_to_text, p.text_to_audio, &t.fuse);
  t.hidden = affine(t.fused, p.hidden);
  t.activated = tanh(t.hidden);
  t.dropped = dropout(t.activated, p.dropout, mode, rng, &t.mask);
  t.logit = affine(t.dropped, p.out);

  ExpertOutput out;
  out.score = squash_to_range(t.logit[0], range_);
  out.confidence_features = Tensor(t.fused.shape(),
                                   std::vector<double>(t.fused.data().begin(), t.fused.data().end()));
  if (state) *state = std::move(trace);
  return out;
}

void SeqCoAttnExpert::backward(ForwardState& state, double dscore) {
  auto& t = dynamic_cast<Expert4Trace&>(state);
  Expert4Params& p = params_;
  t.logit.grad()[0] += dscore * squash_slope(t.logit[0], range_);
  affine_backward(t.logit, t.dropped, p.out);
  dropout_backward(t.dropped, t.mask, t.activated);
  tanh_backward(t.activated, t.hidden);
  affine_backward(t.hidden, t.fused, p.hidden);
  seqcoattn_fuse_backward(t.fused, t.fuse, t.audio, t.text, p.audio_to_text, p.text_to_audio);
  affine_backward(t.text, t.text_in, p.text_proj);
  affine_backward(t.audio, t.aggregated, p.audio_proj);
  aggregate_layers_backward(t.aggregated, t.layer_weights, t.layers, p.alpha);
}

}  // namespace moescore
