#pragma once

#include <cstddef>
#include <functional>

namespace rgm {

// Worker cap: min(hardware_concurrency, RGM_THREADS if set).
int worker_count();

// Runs fn(i) for i in [0, n) across workers. Callers write results into
// per-index slots, so the output is deterministic regardless of scheduling.
// Exceptions are captured and rethrown (first one wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace rgm
