#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moescore/gating.hpp"

namespace moescore {

struct EvalReport {
  double srcc = 0.0;
  double lcc = 0.0;
  double ktau = 0.0;
  double mse = 0.0;
  std::size_t n = 0;
};

// 1-based ranks; ties get the mean of the positions they span.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation. Throws UndefinedCorrelationError for constant input
// and DimensionError for N < 2 or a length mismatch.
double lcc(std::span<const double> x, std::span<const double> y);
// Pearson correlation of average ranks.
double srcc(std::span<const double> x, std::span<const double> y);
// Kendall tau-b: (C - D) / sqrt((T0 - Tx)(T0 - Ty)).
double ktau_b(std::span<const double> x, std::span<const double> y);
double mse_metric(std::span<const double> x, std::span<const double> y);

EvalReport evaluate(std::span<const double> predicted, std::span<const double> target);
// Every pair must carry a label; a missing one raises ValidationError naming it.
EvalReport evaluate(std::span<const ScoredPair> predictions);

nlohmann::json to_json(const EvalReport& report);

struct ReportRow {
  std::string system;
  EvalReport report;
};

// Aligned plain-text table: System | SRCC | LCC | KTAU | MSE.
std::string format_table(std::span<const ReportRow> rows);

}  // namespace moescore
