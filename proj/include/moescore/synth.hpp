#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moescore/experts.hpp"

namespace moescore {

// Planted-truth dataset generator.
//
// Each pair draws a latent u ~ N(0, latent_scale^2). Its true alignment is
// c = tanh(u) and its label is squash_to_range(label_gain * c). Expert e sees
// its own alignment c_e = tanh(u + noise[e] * xi_e), xi_e ~ N(0, 1):
//   - similarity experts get pooled audio/text vectors whose cosine is c_e;
//   - the sequence expert gets audio frames whose channel 0 carries c_e
//     (plus small frame jitter) over otherwise random features.
// With noise[0] == 0 the first expert's cosine reproduces the label exactly
// through a * cos + b with a = label_gain, b = 0.
struct SynthOptions {
  std::filesystem::path out;
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::vector<double> noise = {0.5, 0.5, 0.5, 0.5};  // one per expert, sequence expert last
  double dev_fraction = 0.2;
  double test_fraction = 0.0;
  std::vector<std::string> similarity_experts = {"laion_clap", "mga_clap", "m2d_clap"};
  ScoreRange range;
  double label_gain = 2.0;
  double latent_scale = 0.8;
  std::size_t pooled_dim = 16;
  std::size_t layers = 2;
  std::size_t audio_frames = 6;
  std::size_t text_tokens = 4;
  std::size_t audio_dim = 8;
  std::size_t text_dim = 8;
  double frame_jitter = 0.05;

  void validate() const;
};

inline constexpr const char* kSynthManifest = "manifest.jsonl";
inline constexpr const char* kSynthSidecar = "synth_params.json";

// Writes <out>/manifest.jsonl, <out>/features/..., <out>/synth_params.json.
void synthesize(const SynthOptions& options);

// The label the generator assigns to latent u.
double planted_label(double latent, const SynthOptions& options);

}  // namespace moescore
