#pragma once

#include <functional>
#include <span>
#include <string>

#include "moescore/tensor.hpp"

namespace moescore {

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

// Compares analytic gradients with central differences for every entry of
// every tensor in `params`.
//
// `loss` must be a pure forward evaluation returning a scalar. `backward`
// must zero the relevant grad buffers, run forward + backward, and leave
// dloss/dparam in each tensor's grad buffer. Per entry the error is
// |analytic - numeric| / max(|analytic|, |numeric|), falling back to the
// absolute difference when both magnitudes are below 1e-6.
//
// Throws NumericError when the loss is not finite at any probe point.
GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::function<void()>& backward,
                           std::span<Tensor* const> params, double step = 1e-5);

}  // namespace moescore
