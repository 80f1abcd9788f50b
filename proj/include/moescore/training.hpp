#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "moescore/config.hpp"
#include "moescore/features.hpp"
#include "moescore/losses.hpp"
#include "moescore/model.hpp"

namespace moescore {

// All C(n, 2) pairs (i < j) in lexicographic order, or k distinct pairs
// drawn without replacement (returned sorted).
std::vector<IndexPair> sample_pairs(std::size_t n, PairStrategy strategy, std::size_t k, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, keyed by parameter name.
struct AdamState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
  };
  std::unordered_map<std::string, Moments> moments;
};

// One bias-corrected Adam update of every parameter that requires grad.
// Frozen parameters are left untouched. A non-finite gradient anywhere
// aborts the step before any value changes (NumericError naming it).
void optimizer_step(std::span<const ParamRef> params, AdamState& state, const AdamConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the state before training
  double train_loss = 0.0;
  double dev_loss = 0.0;
  std::optional<double> dev_srcc;  // empty when undefined (constant predictions)
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

nlohmann::json to_json(const EpochRecord& record);

// Phase A: fits one expert's own parameters on its own predictions with the
// hybrid loss. Keeps the epoch with the best dev SRCC; ties go to the lower
// dev loss. `stream` separates the RNG streams of different experts.
TrainHistory train_expert(Expert& expert, const Dataset& train, const Dataset& dev, const TrainConfig& config,
                          std::uint64_t seed, std::uint64_t stream);

// Phase B: fits only the gate over model.gate_experts(). Every one of those
// experts must be frozen (FreezeViolationError otherwise). Expert outputs are
// computed once in eval mode and reused for every epoch.
TrainHistory train_gate(Model& model, const Dataset& train, const Dataset& dev, const TrainConfig& config);

}  // namespace moescore
