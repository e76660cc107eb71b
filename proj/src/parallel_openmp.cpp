#include <omp.h>

#include <cstdint>

#include "proxysynth/parallel.hpp"

namespace proxysynth::parallel::omp {

// fn must not throw; the dispatcher in parallel_serial.cpp wraps it.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace proxysynth::parallel::omp
