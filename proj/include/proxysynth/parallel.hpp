#pragma once

#include <cstddef>
#include <functional>

namespace proxysynth {

/// Backend for the data-parallel kernels. Serial is the reference path the
/// tests compare the OpenMP path against.
enum class Execution { Serial, OpenMP };

bool openmp_available();
/// OpenMP when compiled in, Serial otherwise.
Execution default_execution();
const char* to_string(Execution exec);

namespace parallel::seq {
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);
}  // namespace parallel::seq

namespace parallel::omp {
/// Falls back to the serial loop when OpenMP is not compiled in.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);
int max_threads();
}  // namespace parallel::omp

/// Runs fn(0..n-1). If iterations throw, the exception of the lowest index
/// is rethrown after all iterations finish, on either backend.
void for_each_index(Execution exec, std::size_t n,
                    const std::function<void(std::size_t)>& fn);

}  // namespace proxysynth
