#pragma once

#include <cstddef>
#include <functional>

namespace scriptbmi {

// Worker budget: hardware concurrency capped by SCRIPTBMI_THREADS.
std::size_t thread_budget();

// Runs fn(begin, end) over disjoint chunks of [0, n). Each index is owned by
// exactly one worker, so writes to per-index outputs stay deterministic
// regardless of the budget. Small n runs inline on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace scriptbmi
