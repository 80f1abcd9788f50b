#include "moescore/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace moescore::kernels {

namespace {

inline int sign_of(double d) { return (d > 0.0) - (d < 0.0); }

}  // namespace

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = c[i * m + j];
      for (std::size_t r = 0; r < k; ++r) acc += a[i * k + r] * b[r * m + j];
      c[i * m + j] = acc;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = c[i * m + j];
      for (std::size_t r = 0; r < n; ++r) acc += a[r * k + i] * b[r * m + j];
      c[i * m + j] = acc;
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = c[i * k + j];
      for (std::size_t r = 0; r < m; ++r) acc += a[i * m + r] * b[j * m + r];
      c[i * k + j] = acc;
    }
  }
}

PairCounts count_pairs(std::span<const double> x, std::span<const double> y) {
  PairCounts out;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = sign_of(x[i] - x[j]);
      const int sy = sign_of(y[i] - y[j]);
      if (sx == 0) ++out.tied_x;
      if (sy == 0) ++out.tied_y;
      if (sx * sy > 0) ++out.concordant;
      if (sx * sy < 0) ++out.discordant;
    }
  }
  return out;
}

}  // namespace reference

// The parallel forms walk the reduction index in the outer loop of a row so
// the inner loop is contiguous; per element the summation order is unchanged.

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c.data() + i * m;
    const double* arow = a.data() + i * k;
    for (std::size_t r = 0; r < k; ++r) {
      const double av = arow[r];
      const double* brow = b.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c.data() + i * m;
    for (std::size_t r = 0; r < n; ++r) {
      const double av = a[r * k + i];
      const double* brow = b.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = a.data() + i * m;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b.data() + j * m;
      double acc = c[i * k + j];
      for (std::size_t r = 0; r < m; ++r) acc += arow[r] * brow[r];
      c[i * k + j] = acc;
    }
  }
}

PairCounts count_pairs(std::span<const double> x, std::span<const double> y) {
  std::int64_t conc = 0, disc = 0, tx = 0, ty = 0;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(dynamic, 64) reduction(+ : conc, disc, tx, ty) if (n >= 512)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t j = i + 1; j < n; ++j) {
      const int sx = sign_of(x[i] - x[j]);
      const int sy = sign_of(y[i] - y[j]);
      tx += (sx == 0);
      ty += (sy == 0);
      conc += (sx * sy > 0);
      disc += (sx * sy < 0);
    }
  }
  return {conc, disc, tx, ty};
}

}  // namespace moescore::kernels
