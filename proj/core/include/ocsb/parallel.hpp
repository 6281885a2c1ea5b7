#pragma once

#include <cstdint>
#include <functional>
#include <optional>

namespace ocsb {

/// Worker count: explicit flag, else $OCSB_JOBS, else 1.
int resolve_jobs(std::optional<int> flag);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Results must be
/// written by index; scheduling never affects what fn computes. The exception
/// from the lowest failing index is rethrown.
void parallel_for(int64_t count, int jobs, const std::function<void(int64_t)>& fn);

}  // namespace ocsb
