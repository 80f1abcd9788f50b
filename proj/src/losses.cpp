#include "moescore/losses.hpp"

#include <cmath>
#include <string>

#include "moescore/errors.hpp"

namespace moescore {

void LossConfig::validate() const {
  const auto nonneg = [](double v, const char* field) {
    if (!(std::isfinite(v) && v >= 0.0)) throw ConfigError("must be finite and >= 0", field);
  };
  nonneg(epsilon, "loss.epsilon");
  nonneg(tau, "loss.tau");
  nonneg(beta, "loss.beta");
  nonneg(gamma, "loss.gamma");
  if (beta + gamma <= 0.0) throw ConfigError("beta + gamma must be positive", "loss");
}

double contrastive_loss(double d_hat, double d, double epsilon) {
  return std::max(0.0, std::abs(d_hat - d) - epsilon);
}

double contrastive_grad(double d_hat, double d, double epsilon) {
  const double gap = d_hat - d;
  if (std::abs(gap) <= epsilon) return 0.0;
  return gap > 0.0 ? 1.0 : -1.0;
}

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("loss: " + std::to_string(a.size()) + " predictions for " +
                         std::to_string(b.size()) + " targets");
  }
  if (a.empty()) throw DimensionError("loss: empty batch");
}

}  // namespace

double clipped_mse(std::span<const double> predicted, std::span<const double> target, double tau) {
  check_lengths(predicted, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double r = predicted[i] - target[i];
    if (std::abs(r) > tau) sum += r * r;
  }
  return sum / static_cast<double>(predicted.size());
}

LossValue total_loss(std::span<const double> predicted, std::span<const double> target,
                     std::span<const IndexPair> pairs, const LossConfig& config) {
  check_lengths(predicted, target);
  if (pairs.empty() && config.gamma > 0.0) {
    throw ConfigError("contrastive weight gamma > 0 needs at least one pair", "loss.gamma");
  }
  const std::size_t n = predicted.size();
  LossValue out;
  out.grad.assign(n, 0.0);

  out.mse = clipped_mse(predicted, target, config.tau);
  const double mse_scale = 2.0 * config.beta / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = predicted[i] - target[i];
    if (std::abs(r) > config.tau) out.grad[i] += mse_scale * r;
  }

  if (!pairs.empty()) {
    double sum = 0.0;
    const double pair_scale = config.gamma / static_cast<double>(pairs.size());
    for (const auto& [i, j] : pairs) {
      if (i >= n || j >= n) throw DimensionError("loss: pair index out of range");
      const double d_hat = predicted[i] - predicted[j];
      const double d = target[i] - target[j];
      sum += contrastive_loss(d_hat, d, config.epsilon);
      const double g = pair_scale * contrastive_grad(d_hat, d, config.epsilon);
      out.grad[i] += g;
      out.grad[j] -= g;
    }
    out.contrastive = sum / static_cast<double>(pairs.size());
  }
  out.value = config.beta * out.mse + config.gamma * out.contrastive;
  return out;
}

}  // namespace moescore
