#pragma once

#include <cstddef>
#include <functional>

namespace canopy {

// Process-wide worker count used by parallel_for. 1 means fully serial.
void set_num_threads(int threads);
int num_threads() noexcept;

// Runs fn(i) for i in [0, count). Iterations must write disjoint memory;
// results never depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace canopy
