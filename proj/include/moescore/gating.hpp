#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moescore/experts.hpp"
#include "moescore/layers.hpp"

namespace moescore {

// affine(g_in -> g_h), tanh, affine(g_h -> K), softmax.
struct GateParams {
  Linear hidden;
  Linear out;

  GateParams() = default;
  GateParams(std::size_t evidence_dim, std::size_t hidden_dim, std::size_t experts);

  std::size_t evidence_dim() const { return hidden.in_features(); }
  std::size_t experts() const { return out.out_features(); }

  // Uniform 1/sqrt(fan_in) hidden weights; zero output layer, so a fresh
  // gate returns uniform weights.
  void init(Rng& rng);
  std::vector<ParamRef> parameters();
};

struct GateTrace {
  Tensor evidence;
  Tensor hidden;
  Tensor activated;
  Tensor logits;
  Tensor weights;
};

// Softmax weights over K experts. Throws ConfigError when the evidence
// length does not match the gate's input width.
Tensor gate_weights(const Tensor& evidence, const GateParams& params, GateTrace* trace = nullptr);
// Reads d(loss)/d(weights) from trace.weights.grad().
void gate_weights_backward(GateTrace& trace, GateParams& params);

// sum_k w_k * s_k
double moe_combine(std::span<const double> weights, std::span<const double> scores);

// Concatenation of every expert's confidence features, then the K scores.
Tensor build_evidence(std::span<const ExpertOutput> outputs);
std::size_t evidence_width(std::span<const ExpertOutput> outputs);

struct ScoredPair {
  std::string pair_id;
  std::optional<double> label;
  std::vector<int> expert_ids;
  std::vector<double> expert_scores;
  std::vector<double> gate_weights;
  double score = 0.0;
};

// Fuses precomputed expert outputs. A null gate is only valid for a single
// expert, whose weight is then exactly 1.
ScoredPair moe_combine_outputs(std::span<const ExpertOutput> outputs, const GateParams* gate,
                               GateTrace* trace = nullptr);

// Runs every expert (eval mode unless `mode` says otherwise) and fuses them.
// Expert failures are rethrown with the pair id attached.
ScoredPair moe_forward(const FeatureRecord& record, std::span<const Expert* const> experts,
                       const GateParams* gate, Mode mode, Rng& rng);

}  // namespace moescore
