#include "moescore/experts.hpp"

#include <algorithm>
#include <cmath>

#include "moescore/errors.hpp"
#include "moescore/layers.hpp"

namespace moescore {

void ScoreRange::validate() const {
  if (!(std::isfinite(min) && std::isfinite(max) && min < max)) {
    throw ConfigError("score range needs finite min < max, got [" + std::to_string(min) + ", " +
                      std::to_string(max) + "]");
  }
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()) + " differ");
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateVectorError("cosine: zero-norm vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double squash_to_range(double z, const ScoreRange& range) {
  return range.min + (range.max - range.min) * (std::tanh(z) + 1.0) * 0.5;
}

double squash_slope(double z, const ScoreRange& range) {
  const double t = std::tanh(z);
  return (range.max - range.min) * 0.5 * (1.0 - t * t);
}

ExpertOutput Expert::predict(const FeatureRecord& record) const {
  Rng unused(0);
  return forward(record, Mode::kEval, unused);
}

void Expert::set_frozen(bool frozen) {
  for (auto& p : parameters()) p.tensor->set_requires_grad(!frozen);
}

bool Expert::frozen() {
  const auto ps = parameters();
  return std::none_of(ps.begin(), ps.end(), [](const ParamRef& p) { return p.tensor->requires_grad(); });
}

void Expert::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

namespace {

struct SimilarityState final : ForwardState {
  double cos = 0.0;
  double z = 0.0;
};

Tensor unit(const Tensor& v) {
  double nrm = 0.0;
  for (double x : v.data()) nrm += x * x;
  nrm = std::sqrt(nrm);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / nrm;
  return out;
}

}  // namespace

SimilarityExpert::SimilarityExpert(std::size_t slot, ScoreRange range) : slot_(slot), range_(range) {
  range_.validate();
}

ExpertOutput SimilarityExpert::forward(const FeatureRecord& record, Mode, Rng&,
                                       std::unique_ptr<ForwardState>* state) const {
  if (slot_ >= record.pooled.size()) {
    throw DimensionError("pair '" + record.pair_id + "' has no pooled features for slot " +
                         std::to_string(slot_));
  }
  const auto& emb = record.pooled[slot_];
  const double cos = cosine(emb.audio.data(), emb.text.data());
  const double z = head_.a[0] * cos + head_.b[0];

  ExpertOutput out;
  out.score = squash_to_range(z, range_);
  const Tensor ua = unit(emb.audio);
  const Tensor ut = unit(emb.text);
  std::vector<double> evidence(ua.data().begin(), ua.data().end());
  evidence.insert(evidence.end(), ut.data().begin(), ut.data().end());
  const std::size_t width = evidence.size();
  out.confidence_features = Tensor({width}, std::move(evidence));

  if (state) {
    auto s = std::make_unique<SimilarityState>();
    s->cos = cos;
    s->z = z;
    *state = std::move(s);
  }
  return out;
}

void SimilarityExpert::backward(ForwardState& state, double dscore) {
  const auto& s = dynamic_cast<const SimilarityState&>(state);
  const double dz = dscore * squash_slope(s.z, range_);
  if (head_.a.requires_grad()) head_.a.grad()[0] += dz * s.cos;
  if (head_.b.requires_grad()) head_.b.grad()[0] += dz;
}

std::vector<ParamRef> SimilarityExpert::parameters() {
  return {{"a", &head_.a}, {"b", &head_.b}};
}

Tensor aggregate_layers(const Tensor& layers, const Tensor& alpha, Tensor* weights) {
  if (layers.rank() != 3) {
    throw DimensionError("aggregate_layers expects [L x T x d], got " + shape_to_string(layers.shape()));
  }
  if (alpha.rank() != 1 || alpha.dim(0) != layers.dim(0)) {
    throw DimensionError("aggregate_layers: alpha " + shape_to_string(alpha.shape()) +
                         " does not match " + std::to_string(layers.dim(0)) + " layers");
  }
  const std::size_t n_layers = layers.dim(0);
  const std::size_t t_len = layers.dim(1);
  const std::size_t d = layers.dim(2);
  Tensor w = softmax(alpha);
  Tensor out({t_len, d}, layers.requires_grad() || alpha.requires_grad());
  auto o = out.data();
  const auto h = layers.data();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const double wl = w[l];
    for (std::size_t i = 0; i < t_len * d; ++i) o[i] += wl * h[l * t_len * d + i];
  }
  if (weights) *weights = std::move(w);
  return out;
}

void aggregate_layers_backward(const Tensor& out, const Tensor& weights, Tensor& layers, Tensor& alpha) {
  const std::size_t n_layers = layers.dim(0);
  const std::size_t block = layers.dim(1) * layers.dim(2);
  const auto dout = out.grad();
  const auto h = layers.data();
  if (layers.requires_grad()) {
    auto dh = layers.grad();
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (std::size_t i = 0; i < block; ++i) dh[l * block + i] += weights[l] * dout[i];
    }
  }
  if (alpha.requires_grad()) {
    Tensor w = weights;
    w.zero_grad();
    for (std::size_t l = 0; l < n_layers; ++l) {
      double g = 0.0;
      for (std::size_t i = 0; i < block; ++i) g += dout[i] * h[l * block + i];
      w.grad()[l] = g;
    }
    softmax_backward(w, alpha);
  }
}

}  // namespace moescore
