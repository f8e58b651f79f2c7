#pragma once

#include <cstddef>
#include <functional>

namespace fpjpa {

// Worker count from an explicit request, else FPJPA_JOBS, else 1.
int resolve_jobs(int requested);

// Runs body(i) for i in [0, n) on contiguous blocks; order of writes is the caller's.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace fpjpa
