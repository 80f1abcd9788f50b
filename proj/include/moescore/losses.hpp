#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace moescore {

struct LossConfig {
  double epsilon = 0.5;  // contrastive margin, score units
  double tau = 0.5;      // MSE clipping threshold, score units
  double beta = 1.0;     // clipped-MSE weight
  double gamma = 0.5;    // contrastive weight

  void validate() const;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

// max(0, |d_hat - d| - epsilon) for predicted / true score differences.
double contrastive_loss(double d_hat, double d, double epsilon);
// d contrastive / d d_hat; zero inside the margin and on its edge.
double contrastive_grad(double d_hat, double d, double epsilon);

// (1/N) sum_i 1(|y_hat_i - y_i| > tau) (y_hat_i - y_i)^2
double clipped_mse(std::span<const double> predicted, std::span<const double> target, double tau);

struct LossValue {
  double value = 0.0;
  double mse = 0.0;
  double contrastive = 0.0;
  std::vector<double> grad;  // d value / d predicted_i
};

// beta * clipped_mse + gamma * mean over pairs of
// contrastive(y_hat_i - y_hat_j, y_i - y_j). The clipping indicator is held
// constant in the gradient.
LossValue total_loss(std::span<const double> predicted, std::span<const double> target,
                     std::span<const IndexPair> pairs, const LossConfig& config);

}  // namespace moescore
