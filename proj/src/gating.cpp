#include "moescore/gating.hpp"

#include "moescore/errors.hpp"

namespace moescore {

GateParams::GateParams(std::size_t evidence_dim, std::size_t hidden_dim, std::size_t experts)
    : hidden(evidence_dim, hidden_dim), out(hidden_dim, experts) {
  if (experts == 0) throw ConfigError("gate needs at least one expert", "gate");
}

void GateParams::init(Rng& rng) {
  init_uniform_fan_in(hidden.weight, hidden.in_features(), rng);
  hidden.bias.fill(0.0);
  out.weight.fill(0.0);
  out.bias.fill(0.0);
}

std::vector<ParamRef> GateParams::parameters() {
  return {{"hidden.weight", &hidden.weight},
          {"hidden.bias", &hidden.bias},
          {"out.weight", &out.weight},
          {"out.bias", &out.bias}};
}

Tensor gate_weights(const Tensor& evidence, const GateParams& params, GateTrace* trace) {
  if (evidence.rank() != 1 || evidence.size() != params.evidence_dim()) {
    throw ConfigError("gate evidence " + shape_to_string(evidence.shape()) + " does not match gate input width " +
                      std::to_string(params.evidence_dim()));
  }
  GateTrace local;
  GateTrace& t = trace ? *trace : local;
  t.evidence = evidence;
  t.hidden = affine(t.evidence, params.hidden);
  t.activated = tanh(t.hidden);
  t.logits = affine(t.activated, params.out);
  t.weights = softmax(t.logits);
  return t.weights;
}

void gate_weights_backward(GateTrace& t, GateParams& params) {
  softmax_backward(t.weights, t.logits);
  affine_backward(t.logits, t.activated, params.out);
  tanh_backward(t.activated, t.hidden);
  affine_backward(t.hidden, t.evidence, params.hidden);
}

double moe_combine(std::span<const double> weights, std::span<const double> scores) {
  if (weights.size() != scores.size()) {
    throw DimensionError("moe_combine: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(scores.size()) + " scores");
  }
  double y = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) y += weights[k] * scores[k];
  return y;
}

std::size_t evidence_width(std::span<const ExpertOutput> outputs) {
  std::size_t n = outputs.size();
  for (const auto& o : outputs) n += o.confidence_features.size();
  return n;
}

Tensor build_evidence(std::span<const ExpertOutput> outputs) {
  std::vector<double> ev;
  ev.reserve(evidence_width(outputs));
  for (const auto& o : outputs) {
    ev.insert(ev.end(), o.confidence_features.data().begin(), o.confidence_features.data().end());
  }
  for (const auto& o : outputs) ev.push_back(o.score);
  const std::size_t width = ev.size();
  return Tensor({width}, std::move(ev));
}

ScoredPair moe_combine_outputs(std::span<const ExpertOutput> outputs, const GateParams* gate,
                               GateTrace* trace) {
  ScoredPair pair;
  for (const auto& o : outputs) pair.expert_scores.push_back(o.score);
  if (gate) {
    if (gate->experts() != outputs.size()) {
      throw ConfigError("gate has " + std::to_string(gate->experts()) + " outputs for " +
                        std::to_string(outputs.size()) + " experts");
    }
    const Tensor w = gate_weights(build_evidence(outputs), *gate, trace);
    pair.gate_weights.assign(w.data().begin(), w.data().end());
  } else {
    if (outputs.size() != 1) throw ConfigError("several experts need a gate");
    pair.gate_weights = {1.0};
  }
  pair.score = moe_combine(pair.gate_weights, pair.expert_scores);
  return pair;
}

ScoredPair moe_forward(const FeatureRecord& record, std::span<const Expert* const> experts,
                       const GateParams* gate, Mode mode, Rng& rng) {
  std::vector<ExpertOutput> outputs;
  outputs.reserve(experts.size());
  for (std::size_t k = 0; k < experts.size(); ++k) {
    try {
      outputs.push_back(experts[k]->forward(record, mode, rng));
    } catch (const Error& e) {
      throw Error("pair '" + record.pair_id + "', expert " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  ScoredPair pair = moe_combine_outputs(outputs, gate);
  pair.pair_id = record.pair_id;
  return pair;
}

}  // namespace moescore
