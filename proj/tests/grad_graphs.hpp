#pragma once

// Finite-difference checks of every differentiable graph in the model. Each
// function builds a small seeded instance and returns the grad_check result.
// Shared by the unit tests and the acceptance runner.

#include <memory>
#include <random>
#include <vector>

#include "moescore/experts.hpp"
#include "moescore/gating.hpp"
#include "moescore/grad_check.hpp"
#include "moescore/layers.hpp"
#include "moescore/losses.hpp"
#include "moescore/seqcoattn.hpp"
#include "oracles.hpp"

namespace gradgraph {

using namespace moescore;

inline constexpr double kStep = 1e-5;

inline Tensor grad_input(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  Tensor t = oracle::random_tensor(std::move(shape), gen, scale);
  t.set_requires_grad(true);
  return t;
}

inline double dot(const Tensor& y, const Tensor& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

inline void seed_grad(Tensor& y, const Tensor& c) {
  for (std::size_t i = 0; i < y.size(); ++i) y.grad()[i] = c[i];
}

inline void zero(std::span<Tensor* const> ts) {
  for (Tensor* t : ts) t->zero_grad();
}

inline std::vector<Tensor*> tensors_of(std::vector<ParamRef> refs) {
  std::vector<Tensor*> out;
  for (const auto& r : refs) out.push_back(r.tensor);
  return out;
}

inline std::vector<Tensor*> tensors_of(AttentionParams& p) {
  return {&p.query.weight, &p.query.bias, &p.key.weight,    &p.key.bias,
          &p.value.weight, &p.value.bias, &p.output.weight, &p.output.bias};
}

inline void randomize_attention(AttentionParams& p, std::mt19937_64& gen) {
  for (Tensor* t : tensors_of(p)) {
    oracle::randomize(*t, gen, 0.5);
    t->set_requires_grad(true);
  }
}

// mean((tanh(x W + b) - target)^2) over W [4x4] and b [4]: 20 parameters.
inline GradCheckResult affine_tanh_mse(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const Tensor x = oracle::random_tensor({2, 4}, gen);
  const Tensor target = oracle::random_tensor({2, 4}, gen, 0.5);
  Tensor w = grad_input({4, 4}, gen, 0.5);
  Tensor b = grad_input({4}, gen, 0.5);
  Tensor* params[] = {&w, &b};
  auto loss = [&] {
    const Tensor y = moescore::tanh(affine(x, w, b));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return s / static_cast<double>(y.size());
  };
  auto backward = [&] {
    zero(params);
    Tensor xin = x;
    Tensor h = affine(xin, w, b);
    Tensor y = moescore::tanh(h);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y.grad()[i] = 2.0 * (y[i] - target[i]) / static_cast<double>(y.size());
    }
    tanh_backward(y, h);
    affine_backward(h, xin, w, b);
  };
  return grad_check(loss, backward, params, kStep);
}

inline GradCheckResult affine_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Tensor x = grad_input({3, 4}, gen);
  Tensor w = grad_input({4, 2}, gen);
  Tensor b = grad_input({2}, gen);
  const Tensor c = oracle::random_tensor({3, 2}, gen);
  Tensor* params[] = {&x, &w, &b};
  return grad_check([&] { return dot(affine(x, w, b), c); },
                    [&] {
                      zero(params);
                      Tensor y = affine(x, w, b);
                      seed_grad(y, c);
                      affine_backward(y, x, w, b);
                    },
                    params, kStep);
}

inline GradCheckResult softmax_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Tensor v = grad_input({3, 5}, gen, 2.0);
  const Tensor c = oracle::random_tensor({3, 5}, gen);
  Tensor* params[] = {&v};
  return grad_check([&] { return dot(softmax(v), c); },
                    [&] {
                      zero(params);
                      Tensor y = softmax(v);
                      seed_grad(y, c);
                      softmax_backward(y, v);
                    },
                    params, kStep);
}

inline GradCheckResult tanh_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Tensor x = grad_input({4, 3}, gen);
  const Tensor c = oracle::random_tensor({4, 3}, gen);
  Tensor* params[] = {&x};
  return grad_check([&] { return dot(moescore::tanh(x), c); },
                    [&] {
                      zero(params);
                      Tensor y = moescore::tanh(x);
                      seed_grad(y, c);
                      tanh_backward(y, x);
                    },
                    params, kStep);
}

// In train mode every evaluation reuses one seed, hence one mask.
inline GradCheckResult dropout_layer(std::uint64_t seed, Mode mode) {
  std::mt19937_64 gen(seed);
  Tensor x = grad_input({4, 6}, gen);
  const Tensor c = oracle::random_tensor({4, 6}, gen);
  Tensor* params[] = {&x};
  auto forward = [&](DropoutMask* mask) {
    Rng rng(seed);
    return dropout(x, 0.3, mode, rng, mask);
  };
  return grad_check([&] { return dot(forward(nullptr), c); },
                    [&] {
                      zero(params);
                      DropoutMask mask;
                      Tensor y = forward(&mask);
                      seed_grad(y, c);
                      dropout_backward(y, mask, x);
                    },
                    params, kStep);
}

inline GradCheckResult max_pool_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Tensor x = grad_input({5, 4}, gen);
  const Tensor c = oracle::random_tensor({4}, gen);
  Tensor* params[] = {&x};
  return grad_check([&] { return dot(max_pool_time(x), c); },
                    [&] {
                      zero(params);
                      Tensor y = max_pool_time(x);
                      seed_grad(y, c);
                      max_pool_time_backward(y, x);
                    },
                    params, kStep);
}

inline GradCheckResult attention_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  AttentionParams p(8, 2);
  randomize_attention(p, gen);
  Tensor q = grad_input({3, 8}, gen);
  Tensor kv = grad_input({4, 8}, gen);
  const Tensor c = oracle::random_tensor({3, 8}, gen);
  auto params = tensors_of(p);
  params.push_back(&q);
  params.push_back(&kv);
  return grad_check([&] { return dot(multi_head_attention(q, kv, p), c); },
                    [&] {
                      zero(params);
                      AttentionCache cache;
                      Tensor y = multi_head_attention(q, kv, p, &cache);
                      seed_grad(y, c);
                      multi_head_attention_backward(y, cache, q, kv, p);
                    },
                    params, kStep);
}

inline GradCheckResult aggregate_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Tensor h = grad_input({3, 4, 2}, gen);
  Tensor alpha = grad_input({3}, gen);
  const Tensor c = oracle::random_tensor({4, 2}, gen);
  Tensor* params[] = {&h, &alpha};
  return grad_check([&] { return dot(aggregate_layers(h, alpha), c); },
                    [&] {
                      zero(params);
                      Tensor w;
                      Tensor y = aggregate_layers(h, alpha, &w);
                      seed_grad(y, c);
                      aggregate_layers_backward(y, w, h, alpha);
                    },
                    params, kStep);
}

inline GradCheckResult fuse_layer(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  AttentionParams at(4, 2), ta(4, 2);
  randomize_attention(at, gen);
  randomize_attention(ta, gen);
  Tensor audio = grad_input({3, 4}, gen);
  Tensor text = grad_input({2, 4}, gen);
  const Tensor c = oracle::random_tensor({8}, gen);
  auto params = tensors_of(at);
  for (Tensor* t : tensors_of(ta)) params.push_back(t);
  params.push_back(&audio);
  params.push_back(&text);
  return grad_check([&] { return dot(seqcoattn_fuse(audio, text, at, ta), c); },
                    [&] {
                      zero(params);
                      FuseCache cache;
                      Tensor y = seqcoattn_fuse(audio, text, at, ta, &cache);
                      seed_grad(y, c);
                      seqcoattn_fuse_backward(y, cache, audio, text, at, ta);
                    },
                    params, kStep);
}

// Squared error of expert scores over a few records.
template <class E>
GradCheckResult expert_graph(E& expert, const std::vector<FeatureRecord>& records, const std::vector<double>& targets) {
  auto params = tensors_of(expert.parameters());
  auto loss = [&] {
    Rng rng(0);
    double s = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const double e = expert.forward(records[i], Mode::kEval, rng).score - targets[i];
      s += e * e;
    }
    return s;
  };
  auto backward = [&] {
    expert.zero_grad();
    Rng rng(0);
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::unique_ptr<ForwardState> state;
      const double score = expert.forward(records[i], Mode::kEval, rng, &state).score;
      expert.backward(*state, 2.0 * (score - targets[i]));
    }
  };
  return grad_check(loss, backward, params, kStep);
}

inline GradCheckResult similarity_expert(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  SimilarityExpert expert(1, ScoreRange{});
  expert.head().a[0] = 1.7;
  expert.head().b[0] = -0.3;
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back(oracle::toy_record("p" + std::to_string(i), gen));
  return expert_graph(expert, records, {2.0, 8.0, 5.0});
}

inline Expert4Config toy_expert4_config() { return Expert4Config{8, 2, 16, 0.1}; }

inline std::unique_ptr<SeqCoAttnExpert> toy_expert4(std::mt19937_64& gen) {
  auto expert = std::make_unique<SeqCoAttnExpert>(toy_expert4_config(), Expert4Dims{2, 5, 3}, ScoreRange{});
  Rng rng(gen());
  expert->params().init(rng);
  // Nonzero output layer and layer logits so every path carries gradient.
  oracle::randomize(expert->params().out.weight, gen, 0.5);
  oracle::randomize(expert->params().out.bias, gen, 0.2);
  oracle::randomize(expert->params().alpha, gen, 0.5);
  return expert;
}

inline GradCheckResult expert4(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto expert = toy_expert4(gen);
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 2; ++i) records.push_back(oracle::toy_record("p" + std::to_string(i), gen));
  return expert_graph(*expert, records, {3.0, 7.5});
}

inline GradCheckResult gate(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::size_t k = 3;
  std::vector<std::vector<ExpertOutput>> outputs(4);
  std::vector<double> targets;
  std::uniform_real_distribution<double> score(1.0, 10.0);
  for (auto& outs : outputs) {
    for (std::size_t e = 0; e < k; ++e) outs.push_back({score(gen), oracle::random_tensor({4}, gen)});
    targets.push_back(score(gen));
  }
  GateParams g(evidence_width(outputs[0]), 6, k);
  Rng rng(seed);
  g.init(rng);
  oracle::randomize(g.out.weight, gen, 0.5);
  auto params = tensors_of(g.parameters());
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const double e = moe_combine_outputs(outputs[i], &g).score - targets[i];
      s += e * e;
    }
    return s;
  };
  auto backward = [&] {
    zero(params);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      GateTrace trace;
      const ScoredPair p = moe_combine_outputs(outputs[i], &g, &trace);
      const double dy = 2.0 * (p.score - targets[i]);
      for (std::size_t e = 0; e < k; ++e) trace.weights.grad()[e] = dy * p.expert_scores[e];
      gate_weights_backward(trace, g);
    }
  };
  return grad_check(loss, backward, params, kStep);
}

// A similarity expert and the sequence expert fused by a gate, with every
// parameter trainable. Gradients reach the experts both through their scores
// and through the gate evidence.
inline GradCheckResult expert4_with_gate(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  SimilarityExpert sim(0, ScoreRange{});
  sim.head().a[0] = 1.3;
  sim.head().b[0] = 0.2;
  auto seq = toy_expert4(gen);
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 2; ++i) records.push_back(oracle::toy_record("p" + std::to_string(i), gen));
  const std::vector<double> targets{4.0, 6.5};

  Rng probe(0);
  const std::vector<ExpertOutput> shape_probe{sim.forward(records[0], Mode::kEval, probe),
                                              seq->forward(records[0], Mode::kEval, probe)};
  GateParams g(evidence_width(shape_probe), 5, 2);
  Rng init(seed);
  g.init(init);
  oracle::randomize(g.out.weight, gen, 0.5);

  auto params = tensors_of(sim.parameters());
  for (Tensor* t : tensors_of(seq->parameters())) params.push_back(t);
  for (Tensor* t : tensors_of(g.parameters())) params.push_back(t);

  auto loss = [&] {
    Rng rng(0);
    double s = 0.0;
    const Expert* experts[] = {&sim, seq.get()};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const double e = moe_forward(records[i], experts, &g, Mode::kEval, rng).score - targets[i];
      s += e * e;
    }
    return s;
  };
  auto backward = [&] {
    zero(params);
    Rng rng(0);
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::unique_ptr<ForwardState> sim_state, seq_state;
      std::vector<ExpertOutput> outs{sim.forward(records[i], Mode::kEval, rng, &sim_state),
                                     seq->forward(records[i], Mode::kEval, rng, &seq_state)};
      GateTrace trace;
      const ScoredPair p = moe_combine_outputs(outs, &g, &trace);
      const double dy = 2.0 * (p.score - targets[i]);
      for (std::size_t e = 0; e < 2; ++e) trace.weights.grad()[e] = dy * p.expert_scores[e];
      trace.evidence.set_requires_grad(true);
      gate_weights_backward(trace, g);

      const auto ev = trace.evidence.grad();
      const std::size_t sim_width = outs[0].confidence_features.size();
      const std::size_t seq_width = outs[1].confidence_features.size();
      const std::size_t score_slot = sim_width + seq_width;
      auto& seq_trace = dynamic_cast<Expert4Trace&>(*seq_state);
      for (std::size_t j = 0; j < seq_width; ++j) seq_trace.fused.grad()[j] += ev[sim_width + j];
      sim.backward(*sim_state, dy * p.gate_weights[0] + ev[score_slot]);
      seq->backward(*seq_state, dy * p.gate_weights[1] + ev[score_slot + 1]);
    }
  };
  return grad_check(loss, backward, params, kStep);
}

inline GradCheckResult total_loss_predictions(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::size_t n = 6;
  Tensor pred({n}, true);
  Tensor target({n});
  std::uniform_real_distribution<double> u(1.0, 10.0);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = u(gen);
    target[i] = u(gen);
  }
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  const LossConfig cfg;
  Tensor* params[] = {&pred};
  return grad_check([&] { return total_loss(pred.data(), target.data(), pairs, cfg).value; },
                    [&] {
                      pred.zero_grad();
                      const auto lv = total_loss(pred.data(), target.data(), pairs, cfg);
                      for (std::size_t i = 0; i < n; ++i) pred.grad()[i] = lv.grad[i];
                    },
                    params, kStep);
}

// Largest error over every graph above.
inline double suite_max_error(std::uint64_t seed = 1) {
  const GradCheckResult all[] = {
      affine_tanh_mse(seed),       affine_layer(seed),         softmax_layer(seed),
      tanh_layer(seed),            dropout_layer(seed, Mode::kEval), dropout_layer(seed, Mode::kTrain),
      max_pool_layer(seed),        attention_layer(seed),      aggregate_layer(seed),
      fuse_layer(seed),            similarity_expert(seed),    expert4(seed),
      gate(seed),                  expert4_with_gate(seed),    total_loss_predictions(seed),
  };
  double worst = 0.0;
  for (const auto& r : all) worst = std::max(worst, r.max_error);
  return worst;
}

}  // namespace gradgraph
