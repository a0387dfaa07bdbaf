#pragma once

#include <cstddef>
#include <functional>

namespace cpdrad {

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs body(i) for i in [0, count). Iterations must write to disjoint
/// outputs; results are then independent of the schedule. The first
/// exception thrown by any iteration is rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace cpdrad
