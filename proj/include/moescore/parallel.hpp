#pragma once

#include <cstddef>
#include <exception>

namespace moescore {

// Runs fn(i) for i in [0, n). With `parallel` set the iterations are spread
// over OpenMP threads; each iteration must only write its own slot. The
// first exception (lowest index) is rethrown after the loop.
template <class Fn>
void for_each_index(std::size_t n, bool parallel, Fn&& fn) {
  std::exception_ptr first_error;
  std::size_t first_index = n;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4) if (parallel && n > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(moescore_for_each_index)
      {
        if (static_cast<std::size_t>(i) < first_index) {
          first_index = static_cast<std::size_t>(i);
          first_error = std::current_exception();
        }
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace moescore
