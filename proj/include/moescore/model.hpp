#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moescore/config.hpp"
#include "moescore/experts.hpp"
#include "moescore/gating.hpp"
#include "moescore/seqcoattn.hpp"

namespace moescore {

// Expert ids are 1-based: 1..S are the similarity experts in config order,
// S + 1 is the sequence expert.
class Model {
 public:
  explicit Model(Config config);

  const Config& config() const { return config_; }
  int similarity_count() const { return static_cast<int>(config_.similarity_experts.size()); }
  int sequence_id() const { return similarity_count() + 1; }
  int max_expert_id() const { return sequence_id(); }
  void check_expert_id(int id) const;

  bool has_expert(int id) const;
  Expert& expert(int id);
  const Expert& expert(int id) const;
  std::vector<int> expert_ids() const;

  // Fresh, seeded expert. The sequence expert needs input dims.
  Expert& create_expert(int id, const std::optional<Expert4Dims>& dims = std::nullopt);

  // Gate over `ids`. A single id needs no gate and gets weight 1.
  void create_gate(std::vector<int> ids, std::size_t evidence_dim);
  void set_gate_experts(std::vector<int> ids);
  const std::vector<int>& gate_experts() const { return gate_experts_; }
  GateParams* gate() { return gate_ ? &*gate_ : nullptr; }
  const GateParams* gate() const { return gate_ ? &*gate_ : nullptr; }

  // Layout covering every similarity expert plus the sequence files when
  // any of `ids` is the sequence expert.
  FeatureLayout layout_for(std::span<const int> ids) const;

  std::vector<const Expert*> experts_for(std::span<const int> ids) const;

  // Eval-mode prediction over gate_experts().
  ScoredPair predict(const FeatureRecord& record) const;
  // Same, over many records; `parallel` only changes scheduling.
  std::vector<ScoredPair> predict_all(std::span<const FeatureRecord> records, bool parallel = true) const;

  // "expert<id>.<param>" and "gate.<param>".
  std::vector<ParamRef> parameters();

 private:
  Config config_;
  std::vector<std::unique_ptr<Expert>> experts_;  // index id - 1
  std::optional<Expert4Dims> seq_dims_;
  std::optional<GateParams> gate_;
  std::vector<int> gate_experts_;

  friend struct CheckpointIo;
};

// Checkpoint container ("MCK1"):
//
//   offset 0    4 bytes  magic "MCK1"
//   offset 4    8 bytes  uint64 little-endian J, length of the JSON index
//   offset 12   J bytes  UTF-8 JSON index
//   offset 12+J          parameter blocks, each a complete MFV1 encoding
//
// The index is
//   {"format": "MCK1", "seed": <uint>, "config": {<model config>},
//    "sequence_dims": {"layers", "audio_dim", "text_dim"} | null,
//    "gate_experts": [<id>...], "gate_evidence_dim": <uint> | null,
//    "params": [{"name", "frozen", "shape", "offset", "length"}...]}
// with block offsets relative to the first block. Parameters are stored as
// float32, so a loaded model is the float32 rounding of the saved one.
void save_checkpoint(const std::filesystem::path& path, Model& model);

// Loads parameters into `model` (creating experts and gate as needed). The
// stored model config must equal model.config().model_json(); a mismatch is
// a ConfigError naming the field. Later files may add experts but may not
// redefine one already present.
void load_checkpoint(const std::filesystem::path& path, Model& model);

nlohmann::json read_checkpoint_index(const std::filesystem::path& path);

}  // namespace moescore
