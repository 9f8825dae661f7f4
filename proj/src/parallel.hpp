#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace crowdnav::detail {

// OpenMP loop over [0, n) that forwards the first exception thrown by `body`
// to the caller instead of terminating.
template <class Body>
void omp_for(std::ptrdiff_t n, Body&& body) {
  std::exception_ptr error;
  std::mutex error_mutex;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace crowdnav::detail
