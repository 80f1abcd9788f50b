#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

// Dense inner loops. Each kernel has a plain serial form under
// kernels::reference and an OpenMP form in kernels. Both accumulate every
// output element over the reduction index in the same order, so they agree
// bit-for-bit; tests rely on that, and so does run-to-run determinism.
namespace moescore::kernels {

// c[n x m] += a[n x k] * b[k x m]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
// c[k x m] += a[n x k]^T * b[n x m]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);
// c[n x k] += a[n x m] * b[k x m]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k);

struct PairCounts {
  std::int64_t concordant = 0;
  std::int64_t discordant = 0;
  std::int64_t tied_x = 0;  // pairs tied in x (joint ties included)
  std::int64_t tied_y = 0;  // pairs tied in y (joint ties included)
};

// Exhaustive O(N^2) concordance count over all i < j.
PairCounts count_pairs(std::span<const double> x, std::span<const double> y);

bool openmp_enabled();
int max_threads();

// Work below this many multiply-adds runs serially.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k);
PairCounts count_pairs(std::span<const double> x, std::span<const double> y);

}  // namespace reference
}  // namespace moescore::kernels
