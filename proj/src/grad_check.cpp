#include "moescore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "moescore/errors.hpp"

namespace moescore {

namespace {

double checked(double v, const char* where) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite loss at ") + where);
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::function<void()>& backward,
                           std::span<Tensor* const> params, double step) {
  checked(loss(), "base point");
  backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t]->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = checked(loss(), "theta + h");
      values[i] = saved - step;
      const double minus = checked(loss(), "theta - h");
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[t][i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = scale < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
      ++result.entries_checked;
      if (err > result.max_error) {
        result.max_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace moescore
