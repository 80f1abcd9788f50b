#include "moescore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "moescore/errors.hpp"
#include "moescore/kernels.hpp"

namespace moescore {

namespace {

void check_pair_lengths(std::span<const double> x, std::span<const double> y, std::size_t min_n) {
  if (x.size() != y.size()) {
    throw DimensionError("metric inputs have lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()));
  }
  if (x.size() < min_n) {
    throw DimensionError("metric needs at least " + std::to_string(min_n) + " samples, got " +
                         std::to_string(x.size()));
  }
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double lcc(std::span<const double> x, std::span<const double> y) {
  check_pair_lengths(x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair_lengths(x, y, 2);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return lcc(rx, ry);
}

double ktau_b(std::span<const double> x, std::span<const double> y) {
  check_pair_lengths(x, y, 2);
  const auto c = kernels::count_pairs(x, y);
  const auto n = static_cast<std::int64_t>(x.size());
  const std::int64_t total = n * (n - 1) / 2;
  const std::int64_t nx = total - c.tied_x;
  const std::int64_t ny = total - c.tied_y;
  if (nx == 0 || ny == 0) throw UndefinedCorrelationError("Kendall tau undefined: all pairs tied");
  return static_cast<double>(c.concordant - c.discordant) /
         std::sqrt(static_cast<double>(nx) * static_cast<double>(ny));
}

double mse_metric(std::span<const double> x, std::span<const double> y) {
  check_pair_lengths(x, y, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - y[i]) * (x[i] - y[i]);
  return sum / static_cast<double>(x.size());
}

EvalReport evaluate(std::span<const double> predicted, std::span<const double> target) {
  check_pair_lengths(predicted, target, 2);
  return {srcc(predicted, target), lcc(predicted, target), ktau_b(predicted, target),
          mse_metric(predicted, target), predicted.size()};
}

EvalReport evaluate(std::span<const ScoredPair> predictions) {
  std::vector<double> pred, label;
  for (const auto& p : predictions) {
    if (!p.label) throw ValidationError("pair '" + p.pair_id + "' has no label");
    pred.push_back(p.score);
    label.push_back(*p.label);
  }
  return evaluate(pred, label);
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"srcc", r.srcc}, {"lcc", r.lcc}, {"ktau", r.ktau}, {"mse", r.mse}, {"n", r.n}};
}

std::string format_table(std::span<const ReportRow> rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.system.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s  %6s\n", static_cast<int>(width), "System", "SRCC",
                "LCC", "KTAU", "MSE", "N");
  out += buf;
  out += std::string(width + 2 + 4 * 10 + 6, '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f  %8.4f  %6zu\n", static_cast<int>(width),
                  r.system.c_str(), r.report.srcc, r.report.lcc, r.report.ktau, r.report.mse, r.report.n);
    out += buf;
  }
  return out;
}

}  // namespace moescore
