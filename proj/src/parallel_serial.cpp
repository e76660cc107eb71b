#include <exception>
#include <vector>

#include "proxysynth/parallel.hpp"

namespace proxysynth {

bool openmp_available() {
#ifdef PROXYSYNTH_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

Execution default_execution() {
  return openmp_available() ? Execution::OpenMP : Execution::Serial;
}

const char* to_string(Execution exec) {
  return exec == Execution::Serial ? "serial" : "openmp";
}

namespace parallel::seq {

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace parallel::seq

#ifndef PROXYSYNTH_HAVE_OPENMP
namespace parallel::omp {
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  seq::for_each_index(n, fn);
}
int max_threads() { return 1; }
}  // namespace parallel::omp
#endif

void for_each_index(Execution exec, std::size_t n,
                    const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (exec == Execution::OpenMP) {
    parallel::omp::for_each_index(n, guarded);
  } else {
    parallel::seq::for_each_index(n, guarded);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace proxysynth
