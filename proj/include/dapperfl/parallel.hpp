#pragma once

#include <cstddef>
#include <functional>

namespace dapperfl {

/// Worker count: `requested` if nonzero, else the number of hardware
/// threads, capped by DAPPERFL_THREADS when that is set. Never less than 1.
std::size_t resolve_thread_count(std::size_t requested = 0);

/// Calls fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace dapperfl
