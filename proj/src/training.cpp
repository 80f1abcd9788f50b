#include "moescore/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "moescore/errors.hpp"
#include "moescore/gating.hpp"
#include "moescore/metrics.hpp"
#include "moescore/parallel.hpp"

namespace moescore {

using nlohmann::json;

namespace {

constexpr std::uint64_t kExpertTrainStream = 300;
constexpr std::uint64_t kGateTrainStream = 400;

AdamConfig adam_of(const TrainConfig& c) { return {c.lr, c.beta1, c.beta2, 1e-8}; }

// Shuffled batches; a trailing batch too small for pairs joins the previous one.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, const TrainConfig& config, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    const std::size_t end = std::min(n, start + config.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  const std::size_t min_batch = config.loss.gamma > 0.0 ? 2 : 1;
  if (batches.size() > 1 && batches.back().size() < min_batch) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

std::vector<IndexPair> batch_pairs(std::size_t n, const TrainConfig& config, Rng& rng) {
  if (config.loss.gamma == 0.0 || n < 2) return {};
  if (config.pair_strategy == PairStrategy::kRandomK) {
    const std::size_t k = std::min(config.k_pairs, n * (n - 1) / 2);
    return sample_pairs(n, config.pair_strategy, k, rng);
  }
  return sample_pairs(n, PairStrategy::kAllInBatch, 0, rng);
}

std::optional<double> try_srcc(std::span<const double> pred, std::span<const double> target) {
  try {
    return srcc(pred, target);
  } catch (const UndefinedCorrelationError&) {
    return std::nullopt;
  }
}

double dev_loss(std::span<const double> pred, std::span<const double> target, const TrainConfig& config) {
  Rng unused(0);
  const auto pairs = sample_pairs(pred.size(), PairStrategy::kAllInBatch, 0, unused);
  return total_loss(pred, target, pairs, config.loss).value;
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(std::span<const ParamRef> params) {
  Snapshot s;
  for (const auto& p : params) s.emplace_back(p.tensor->data().begin(), p.tensor->data().end());
  return s;
}

void restore(std::span<const ParamRef> params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(s[i].begin(), s[i].end(), params[i].tensor->data().begin());
  }
}

// Model selection shared by both phases.
class BestTracker {
 public:
  BestTracker(std::vector<ParamRef> params, std::size_t patience) : params_(std::move(params)), patience_(patience) {}

  // Returns true when training should stop.
  bool observe(const EpochRecord& r) {
    if (!r.dev_srcc) return false;
    const bool better = !best_srcc_ || *r.dev_srcc > *best_srcc_ ||
                        (*r.dev_srcc == *best_srcc_ && r.dev_loss < best_loss_);
    if (better) {
      best_srcc_ = r.dev_srcc;
      best_loss_ = r.dev_loss;
      best_epoch_ = r.epoch;
      best_ = snapshot(params_);
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  void finish(TrainHistory& history) {
    if (best_srcc_) {
      restore(params_, best_);
      history.best_epoch = best_epoch_;
    } else {
      history.best_epoch = history.epochs.back().epoch;
    }
  }

 private:
  std::vector<ParamRef> params_;
  std::size_t patience_;
  std::optional<double> best_srcc_;
  double best_loss_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  Snapshot best_;
};

std::vector<double> expert_predictions(const Expert& expert, const Dataset& ds) {
  std::vector<double> out(ds.size());
  for_each_index(ds.size(), true, [&](std::size_t i) { out[i] = expert.predict(ds.records[i]).score; });
  return out;
}

}  // namespace

std::vector<IndexPair> sample_pairs(std::size_t n, PairStrategy strategy, std::size_t k, Rng& rng) {
  if (n < 2) throw ParameterError("pair sampling needs a batch of at least 2, got " + std::to_string(n));
  const std::size_t total = n * (n - 1) / 2;
  std::vector<IndexPair> all;
  all.reserve(total);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(i, j);
  }
  if (strategy == PairStrategy::kAllInBatch) return all;
  if (k > total) {
    throw ParameterError("cannot draw " + std::to_string(k) + " distinct pairs from " + std::to_string(total));
  }
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(total - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

void optimizer_step(std::span<const ParamRef> params, AdamState& state, const AdamConfig& config) {
  for (const auto& p : params) {
    if (!p.tensor->requires_grad()) continue;
    for (double g : p.tensor->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter " + p.name);
    }
  }
  for (const auto& p : params) {
    if (!p.tensor->requires_grad()) continue;
    auto& mom = state.moments[p.name];
    if (mom.m.size() != p.tensor->size()) {
      mom.m.assign(p.tensor->size(), 0.0);
      mom.v.assign(p.tensor->size(), 0.0);
      mom.t = 0;
    }
    ++mom.t;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(mom.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(mom.t));
    auto theta = p.tensor->data();
    const auto grad = p.tensor->grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * grad[i];
      mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"dev_loss", r.dev_loss},
          {"dev_srcc", r.dev_srcc ? json(*r.dev_srcc) : json(nullptr)}};
}

TrainHistory train_expert(Expert& expert, const Dataset& train, const Dataset& dev, const TrainConfig& config,
                          std::uint64_t seed, std::uint64_t stream) {
  config.validate("train");
  if (train.size() < 2 || dev.size() < 2) throw ValidationError("training needs >= 2 train and >= 2 dev pairs");
  const auto train_labels = train.labels();
  const auto dev_labels = dev.labels();
  Rng rng = Rng::derive(seed, kExpertTrainStream + stream);
  AdamState adam;
  const auto params = expert.parameters();
  TrainHistory history;
  BestTracker best(params, config.patience);

  auto evaluate_dev = [&](EpochRecord& r) {
    const auto pred = expert_predictions(expert, dev);
    r.dev_srcc = try_srcc(pred, dev_labels);
    r.dev_loss = dev_loss(pred, dev_labels, config);
  };

  {
    EpochRecord r;
    const auto pred = expert_predictions(expert, train);
    r.train_loss = dev_loss(pred, train_labels, config);
    evaluate_dev(r);
    history.epochs.push_back(r);
    best.observe(r);
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord r;
    r.epoch = epoch;
    double loss_sum = 0.0;
    const auto batches = make_batches(train.size(), config, rng);
    for (const auto& batch : batches) {
      std::vector<double> pred(batch.size()), target(batch.size());
      std::vector<std::unique_ptr<ForwardState>> states(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        pred[b] = expert.forward(train.records[batch[b]], Mode::kTrain, rng, &states[b]).score;
        target[b] = train_labels[batch[b]];
      }
      const auto pairs = batch_pairs(batch.size(), config, rng);
      const LossValue loss = total_loss(pred, target, pairs, config.loss);
      loss_sum += loss.value;
      expert.zero_grad();
      for (std::size_t b = 0; b < batch.size(); ++b) expert.backward(*states[b], loss.grad[b]);
      optimizer_step(params, adam, adam_of(config));
    }
    r.train_loss = loss_sum / static_cast<double>(batches.size());
    evaluate_dev(r);
    history.epochs.push_back(r);
    if (best.observe(r)) {
      history.stopped_early = true;
      break;
    }
  }
  best.finish(history);
  expert.zero_grad();
  return history;
}

TrainHistory train_gate(Model& model, const Dataset& train, const Dataset& dev, const TrainConfig& config) {
  config.validate("gate_train");
  const auto ids = model.gate_experts();
  for (int id : ids) {
    if (!model.expert(id).frozen()) {
      throw FreezeViolationError("expert " + std::to_string(id) + " has trainable parameters; freeze it before gate training");
    }
  }
  GateParams* gate = model.gate();
  if (!gate) throw ConfigError("gate training needs at least two experts");
  if (train.size() < 2 || dev.size() < 2) throw ValidationError("training needs >= 2 train and >= 2 dev pairs");

  const auto experts = model.experts_for(ids);
  auto precompute = [&](const Dataset& ds) {
    std::vector<std::vector<ExpertOutput>> outs(ds.size());
    for_each_index(ds.size(), true, [&](std::size_t i) {
      for (const Expert* e : experts) outs[i].push_back(e->predict(ds.records[i]));
    });
    return outs;
  };
  const auto train_out = precompute(train);
  const auto dev_out = precompute(dev);
  const auto train_labels = train.labels();
  const auto dev_labels = dev.labels();

  Rng rng = Rng::derive(model.config().seed, kGateTrainStream);
  AdamState adam;
  std::vector<ParamRef> params = gate->parameters();
  TrainHistory history;
  BestTracker best(params, config.patience);

  auto predict = [&](const std::vector<std::vector<ExpertOutput>>& outs) {
    std::vector<double> pred(outs.size());
    for_each_index(outs.size(), true, [&](std::size_t i) { pred[i] = moe_combine_outputs(outs[i], gate).score; });
    return pred;
  };
  auto evaluate_dev = [&](EpochRecord& r) {
    const auto pred = predict(dev_out);
    r.dev_srcc = try_srcc(pred, dev_labels);
    r.dev_loss = dev_loss(pred, dev_labels, config);
  };

  {
    EpochRecord r;
    r.train_loss = dev_loss(predict(train_out), train_labels, config);
    evaluate_dev(r);
    history.epochs.push_back(r);
    best.observe(r);
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord r;
    r.epoch = epoch;
    double loss_sum = 0.0;
    const auto batches = make_batches(train.size(), config, rng);
    for (const auto& batch : batches) {
      std::vector<double> pred(batch.size()), target(batch.size());
      std::vector<GateTrace> traces(batch.size());
      std::vector<ScoredPair> pairs_out(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        pairs_out[b] = moe_combine_outputs(train_out[batch[b]], gate, &traces[b]);
        pred[b] = pairs_out[b].score;
        target[b] = train_labels[batch[b]];
      }
      const auto pairs = batch_pairs(batch.size(), config, rng);
      const LossValue loss = total_loss(pred, target, pairs, config.loss);
      loss_sum += loss.value;
      for (auto& p : params) p.tensor->zero_grad();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto dw = traces[b].weights.grad();
        for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = loss.grad[b] * pairs_out[b].expert_scores[k];
        gate_weights_backward(traces[b], *gate);
      }
      optimizer_step(params, adam, adam_of(config));
    }
    r.train_loss = loss_sum / static_cast<double>(batches.size());
    evaluate_dev(r);
    history.epochs.push_back(r);
    if (best.observe(r)) {
      history.stopped_early = true;
      break;
    }
  }
  best.finish(history);
  for (auto& p : params) p.tensor->zero_grad();
  return history;
}

}  // namespace moescore
