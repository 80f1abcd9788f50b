#pragma once

// Randomized property sweeps shared by the unit tests and the acceptance
// runner. Each returns a summary; callers decide the verdict.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "moescore/errors.hpp"
#include "moescore/gating.hpp"
#include "moescore/metrics.hpp"
#include "moescore/mfv.hpp"
#include "oracles.hpp"

namespace suites {

using namespace moescore;

struct MetricSweep {
  std::size_t instances = 0;
  std::size_t with_ties = 0;
  std::size_t ktau_mismatches = 0;  // exact comparison
  double srcc_max_error = 0.0;
  double lcc_max_error = 0.0;
};

// Instances alternate between continuous values and a small set of levels
// so that roughly half carry ties.
inline MetricSweep metric_oracles(std::size_t instances = 200, std::uint64_t seed = 2024) {
  std::mt19937_64 gen(seed);
  MetricSweep s;
  std::uniform_int_distribution<std::size_t> size(2, 50);
  std::normal_distribution<double> normal;
  while (s.instances < instances) {
    const std::size_t n = size(gen);
    const bool ties = s.instances % 2 == 1;
    std::uniform_int_distribution<int> level(0, 4);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? level(gen) : normal(gen);
      y[i] = ties ? level(gen) + 0.5 * x[i] : x[i] + normal(gen);
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
    };
    if (constant(x) || constant(y)) continue;
    ++s.instances;
    const auto rx = oracle::ranks(x);
    const auto ry = oracle::ranks(y);
    const bool has_ties = std::set<double>(x.begin(), x.end()).size() < n ||
                          std::set<double>(y.begin(), y.end()).size() < n;
    s.with_ties += has_ties;

    // Kendall: exact comparison of the integer-count formula.
    std::int64_t c = 0, d = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double a = x[i] - x[j], b = y[i] - y[j];
        if (a == 0) ++tx;
        if (b == 0) ++ty;
        if (a != 0 && b != 0) ((a > 0) == (b > 0) ? c : d)++;
      }
    const std::int64_t t0 = static_cast<std::int64_t>(n * (n - 1) / 2);
    const double kt = static_cast<double>(c - d) /
                      std::sqrt(static_cast<double>(t0 - tx) * static_cast<double>(t0 - ty));
    if (ktau_b(x, y) != kt) ++s.ktau_mismatches;

    s.srcc_max_error = std::max(s.srcc_max_error, std::abs(srcc(x, y) - static_cast<double>(oracle::pearson(rx, ry))));
    s.lcc_max_error = std::max(s.lcc_max_error, std::abs(lcc(x, y) - static_cast<double>(oracle::pearson(x, y))));
  }
  return s;
}

struct GateSweep {
  std::size_t evaluations = 0;
  double max_sum_error = 0.0;
  std::size_t out_of_hull = 0;
  std::size_t nonpositive_weights = 0;
};

inline GateSweep gate_simplex(std::size_t evaluations = 1000, std::uint64_t seed = 99) {
  std::mt19937_64 gen(seed);
  GateSweep s;
  std::uniform_int_distribution<std::size_t> experts(1, 6);
  std::uniform_real_distribution<double> score(1.0, 10.0);
  for (std::size_t it = 0; it < evaluations; ++it) {
    const std::size_t k = experts(gen);
    std::vector<ExpertOutput> outs;
    for (std::size_t e = 0; e < k; ++e) outs.push_back({score(gen), oracle::random_tensor({3}, gen)});
    GateParams g(evidence_width(outs), 8, k);
    Rng rng(gen());
    g.init(rng);
    // Random (not zero) output layer, with logits up to tens of units apart.
    oracle::randomize(g.out.weight, gen, 3.0);
    oracle::randomize(g.out.bias, gen, 3.0);
    const ScoredPair p = moe_combine_outputs(outs, &g);
    double total = 0.0;
    for (double w : p.gate_weights) {
      total += w;
      if (!(w > 0.0)) ++s.nonpositive_weights;
    }
    s.max_sum_error = std::max(s.max_sum_error, std::abs(total - 1.0));
    const auto [lo, hi] = std::minmax_element(p.expert_scores.begin(), p.expert_scores.end());
    if (p.score < *lo || p.score > *hi) ++s.out_of_hull;
    ++s.evaluations;
  }
  return s;
}

struct MfvSweep {
  std::size_t round_trips = 0;
  std::size_t byte_mismatches = 0;
  std::size_t value_mismatches = 0;
  std::size_t malformed_cases = 0;
  std::size_t malformed_misclassified = 0;
  std::vector<std::string> failures;
};

inline std::vector<std::uint8_t> le32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 24)};
}

// Hand-assembled MFV1 bytes, independent of the encoder.
inline std::vector<std::uint8_t> assemble_mfv(const Shape& shape, const std::vector<float>& values) {
  std::vector<std::uint8_t> out{'M', 'F', 'V', '1', static_cast<std::uint8_t>(shape.size())};
  for (auto d : shape) {
    const auto b = le32(static_cast<std::uint32_t>(d));
    out.insert(out.end(), b.begin(), b.end());
  }
  for (float f : values) {
    const auto b = le32(std::bit_cast<std::uint32_t>(f));
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

inline float random_finite_float(std::mt19937_64& gen) {
  for (;;) {
    const float f = std::bit_cast<float>(static_cast<std::uint32_t>(gen()));
    if (std::isfinite(f)) return f;
  }
}

// File round-trips through write_mfv/read_mfv plus every malformed-header
// class. `dir` must exist.
inline MfvSweep mfv_round_trips(const std::filesystem::path& dir, std::size_t trips = 1000,
                                std::uint64_t seed = 7) {
  std::mt19937_64 gen(seed);
  MfvSweep s;
  std::uniform_int_distribution<std::size_t> rank(1, 3);
  std::uniform_int_distribution<std::size_t> extent(1, 6);
  const auto path = dir / "roundtrip.mfv";
  for (std::size_t t = 0; t < trips; ++t) {
    Shape shape(rank(gen));
    for (auto& d : shape) d = extent(gen);
    std::vector<float> values(shape_numel(shape));
    for (auto& f : values) f = random_finite_float(gen);
    const auto expected = assemble_mfv(shape, values);
    write_file_bytes(path, expected);
    const Tensor loaded = read_mfv(path);
    write_mfv(path, loaded);
    const auto rewritten = read_file_bytes(path);
    ++s.round_trips;
    if (rewritten != expected) ++s.byte_mismatches;
    bool same = loaded.shape() == shape;
    for (std::size_t i = 0; same && i < values.size(); ++i) same = loaded[i] == static_cast<double>(values[i]);
    if (!same) ++s.value_mismatches;
  }

  struct Case {
    std::string name;
    std::vector<std::uint8_t> bytes;
    MfvErrorKind kind;
    std::size_t offset;
  };
  auto good = assemble_mfv({2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<Case> cases;
  {
    auto b = good;
    b[3] = '2';
    cases.push_back({"magic MFV2", b, MfvErrorKind::kBadMagic, 0});
  }
  cases.push_back({"empty file", {}, MfvErrorKind::kTruncatedHeader, 0});
  cases.push_back({"magic only", {'M', 'F', 'V', '1'}, MfvErrorKind::kTruncatedHeader, 4});
  {
    auto b = good;
    b[4] = 0;
    cases.push_back({"rank 0", b, MfvErrorKind::kBadRank, 4});
    b[4] = 4;
    cases.push_back({"rank 4", b, MfvErrorKind::kBadRank, 4});
  }
  cases.push_back({"truncated dims", std::vector<std::uint8_t>(good.begin(), good.begin() + 10),
                   MfvErrorKind::kTruncatedHeader, 10});
  {
    auto b = good;
    b[9] = 0;  // second extent -> 0
    b[10] = b[11] = b[12] = 0;
    cases.push_back({"zero extent", b, MfvErrorKind::kZeroDim, 9});
  }
  cases.push_back({"truncated payload", std::vector<std::uint8_t>(good.begin(), good.end() - 1),
                   MfvErrorKind::kTruncatedPayload, good.size() - 1});
  {
    auto b = good;
    b.push_back(0);
    cases.push_back({"trailing byte", b, MfvErrorKind::kTrailingBytes, good.size()});
  }
  {
    auto b = good;
    b[5] = 3;  // dims say 3x3, payload holds 6 values
    cases.push_back({"dim/length mismatch", b, MfvErrorKind::kTruncatedPayload, good.size()});
  }
  for (const auto& c : cases) {
    ++s.malformed_cases;
    write_file_bytes(path, c.bytes);
    try {
      read_mfv(path);
      ++s.malformed_misclassified;
      s.failures.push_back(c.name + ": accepted");
    } catch (const MfvFormatError& e) {
      if (e.kind() != c.kind || e.offset() != c.offset) {
        ++s.malformed_misclassified;
        s.failures.push_back(c.name + ": " + e.what());
      }
    } catch (const std::exception& e) {
      ++s.malformed_misclassified;
      s.failures.push_back(c.name + ": wrong class: " + e.what());
    }
  }
  return s;
}

}  // namespace suites
