#include "ocsb/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ocsb/error.hpp"

namespace ocsb {

int resolve_jobs(std::optional<int> flag) {
  if (flag) {
    if (*flag < 1) throw ValidationError("--jobs must be at least 1");
    return *flag;
  }
  if (const char* env = std::getenv("OCSB_JOBS"); env != nullptr && *env != '\0') {
    try {
      size_t used = 0;
      const int v = std::stoi(env, &used);
      if (used == std::char_traits<char>::length(env) && v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("OCSB_JOBS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void parallel_for(int64_t count, int jobs, const std::function<void(int64_t)>& fn) {
  if (count <= 0) return;
  const int workers = static_cast<int>(std::min<int64_t>(std::max(jobs, 1), count));
  if (workers == 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::mutex mu;
  int64_t failed_at = count;
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const int64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ocsb
