#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moescore/experts.hpp"
#include "moescore/losses.hpp"
#include "moescore/seqcoattn.hpp"

namespace moescore {

enum class PairStrategy { kAllInBatch, kRandomK };

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  PairStrategy pair_strategy = PairStrategy::kAllInBatch;
  std::size_t k_pairs = 0;  // used by random_k
  std::size_t patience = 10;
  LossConfig loss;

  void validate(const std::string& prefix) const;
};

struct GateConfig {
  std::size_t hidden_dim = 64;
};

// One run's full configuration. Every field has a default; a JSON document
// only needs the fields it changes. Unknown keys are rejected.
struct Config {
  std::uint64_t seed = 1234;
  ScoreRange range;
  std::vector<std::string> similarity_experts = {"laion_clap", "mga_clap", "m2d_clap"};
  Expert4Config expert4;
  GateConfig gate;
  TrainConfig train;       // Phase A: expert fine-tuning
  TrainConfig gate_train;  // Phase B: gate only

  void validate() const;

  // Throws ConfigError carrying the dotted field path.
  static Config from_json(const nlohmann::json& doc);
  static Config load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // The architecture-defining subset: range, expert names, expert4, gate.
  nlohmann::json model_json() const;
};

// Applies "a.b.c=value" to a config document; value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace moescore
