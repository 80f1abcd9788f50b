#include "moescore/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "moescore/errors.hpp"
#include "moescore/features.hpp"
#include "moescore/manifest.hpp"

namespace moescore {

using nlohmann::json;

void SynthOptions::validate() const {
  if (n < 4) throw ConfigError("need at least 4 pairs", "n");
  if (noise.size() != similarity_experts.size() + 1) {
    throw ConfigError("need one noise level per expert (" + std::to_string(similarity_experts.size() + 1) + ")",
                      "noise");
  }
  for (double v : noise) {
    if (!(std::isfinite(v) && v >= 0.0)) throw ConfigError("noise levels must be finite and >= 0", "noise");
  }
  if (!(dev_fraction > 0.0 && test_fraction >= 0.0 && dev_fraction + test_fraction < 1.0)) {
    throw ConfigError("fractions must leave room for train and dev", "dev_fraction");
  }
  range.validate();
  if (pooled_dim < 2 || layers == 0 || audio_frames == 0 || text_tokens == 0 || audio_dim == 0 || text_dim == 0) {
    throw ConfigError("feature sizes must be positive (pooled_dim >= 2)", "dims");
  }
}

double planted_label(double latent, const SynthOptions& options) {
  return squash_to_range(options.label_gain * std::tanh(latent), options.range);
}

namespace {

std::vector<double> gaussian(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
}

// Audio/text vectors with cosine exactly `c` (before float32 rounding) and
// arbitrary positive norms.
PooledEmbedding pooled_pair(double c, std::size_t d, Rng& rng) {
  auto t = gaussian(d, rng);
  normalize(t);
  auto o = gaussian(d, rng);
  double proj = 0.0;
  for (std::size_t i = 0; i < d; ++i) proj += o[i] * t[i];
  for (std::size_t i = 0; i < d; ++i) o[i] -= proj * t[i];
  normalize(o);
  const double text_norm = rng.uniform(0.5, 2.0);
  const double audio_norm = rng.uniform(0.5, 2.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  std::vector<double> audio(d), text(d);
  for (std::size_t i = 0; i < d; ++i) {
    text[i] = text_norm * t[i];
    audio[i] = audio_norm * (c * t[i] + s * o[i]);
  }
  return {Tensor({d}, std::move(audio)), Tensor({d}, std::move(text))};
}

}  // namespace

void synthesize(const SynthOptions& opt) {
  opt.validate();
  namespace fs = std::filesystem;
  const fs::path features = opt.out / "features";
  fs::create_directories(features);

  const auto n_dev = static_cast<std::size_t>(std::llround(opt.dev_fraction * static_cast<double>(opt.n)));
  const auto n_test = static_cast<std::size_t>(std::llround(opt.test_fraction * static_cast<double>(opt.n)));
  if (n_dev < 2 || n_dev + n_test + 2 > opt.n) throw ConfigError("split sizes leave fewer than 2 pairs", "dev_fraction");
  const std::size_t n_train = opt.n - n_dev - n_test;

  FeatureLayout layout{opt.similarity_experts, true};
  const std::size_t n_sim = opt.similarity_experts.size();
  Rng rng(opt.seed);
  std::vector<ManifestEntry> manifest;
  json pairs = json::array();

  for (std::size_t i = 0; i < opt.n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "pair%06zu", i);
    const double latent = opt.latent_scale * rng.normal();
    const double alignment = std::tanh(latent);
    const double label = planted_label(latent, opt);

    std::vector<double> expert_alignment(n_sim + 1);
    for (std::size_t e = 0; e <= n_sim; ++e) {
      expert_alignment[e] = std::tanh(latent + opt.noise[e] * rng.normal());
    }

    FeatureRecord rec;
    rec.pair_id = id;
    for (std::size_t e = 0; e < n_sim; ++e) rec.pooled.push_back(pooled_pair(expert_alignment[e], opt.pooled_dim, rng));

    Tensor frames({opt.audio_frames, opt.audio_dim});
    for (std::size_t t = 0; t < opt.audio_frames; ++t) {
      frames.at(t, 0) = expert_alignment[n_sim] + opt.frame_jitter * rng.normal();
      for (std::size_t j = 1; j < opt.audio_dim; ++j) frames.at(t, j) = 0.5 * rng.normal();
    }
    Tensor layers({opt.layers, opt.audio_frames, opt.audio_dim});
    for (std::size_t l = 0; l < opt.layers; ++l) {
      for (std::size_t t = 0; t < opt.audio_frames; ++t) {
        for (std::size_t j = 0; j < opt.audio_dim; ++j) {
          layers.at(l, t, j) = frames.at(t, j) + 0.1 * rng.normal();
        }
      }
    }
    rec.audio_layers = std::move(layers);
    rec.text_seq = Tensor({opt.text_tokens, opt.text_dim}, gaussian(opt.text_tokens * opt.text_dim, rng));
    write_features(features, rec, layout);

    ManifestEntry entry;
    entry.pair_id = id;
    entry.split = i < n_train ? Split::kTrain : (i < n_train + n_dev ? Split::kDev : Split::kTest);
    if (entry.split != Split::kTest) entry.label = label;
    manifest.push_back(entry);
    pairs.push_back({{"pair_id", id},
                     {"split", to_string(entry.split)},
                     {"latent", latent},
                     {"alignment", alignment},
                     {"label", label},
                     {"expert_alignment", expert_alignment}});
  }
  write_manifest(opt.out / kSynthManifest, manifest);

  json sidecar = {
      {"seed", opt.seed},
      {"n", opt.n},
      {"n_train", n_train},
      {"n_dev", n_dev},
      {"n_test", n_test},
      {"noise", opt.noise},
      {"similarity_experts", opt.similarity_experts},
      {"score_range", {{"min", opt.range.min}, {"max", opt.range.max}}},
      {"label_gain", opt.label_gain},
      {"latent_scale", opt.latent_scale},
      {"label_function", "min + (max - min) * (tanh(label_gain * tanh(latent)) + 1) / 2"},
      {"dims",
       {{"pooled_dim", opt.pooled_dim},
        {"layers", opt.layers},
        {"audio_frames", opt.audio_frames},
        {"text_tokens", opt.text_tokens},
        {"audio_dim", opt.audio_dim},
        {"text_dim", opt.text_dim}}},
      {"frame_jitter", opt.frame_jitter},
      {"pairs", pairs},
  };
  std::ofstream out(opt.out / kSynthSidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (opt.out / kSynthSidecar).string());
  out << sidecar.dump(1) << '\n';
}

}  // namespace moescore
