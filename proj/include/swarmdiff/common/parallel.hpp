#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include "swarmdiff/common/exec.hpp"

namespace swarmdiff {

/// Runs body(i) for i in [0, n). Exec::parallel uses a dynamic OpenMP
/// schedule. An exception thrown by any iteration is rethrown after the loop;
/// when several iterations throw, the one with the lowest index wins so the
/// reported error does not depend on thread timing.
template <typename Body>
void parallel_for(std::ptrdiff_t n, Exec exec, Body&& body) {
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n > 0 ? n : 0));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace swarmdiff
