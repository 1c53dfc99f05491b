#pragma once

#include <cstddef>
#include <functional>

namespace anosups {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited
// exactly once; callers write results into per-index slots so output does
// not depend on scheduling. The first exception thrown is rethrown after all
// workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// Worker count from ANOSUPS_JOBS, else 1.
int default_jobs();

}  // namespace anosups
