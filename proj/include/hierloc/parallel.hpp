#pragma once

#include <cstddef>
#include <functional>

namespace hierloc {

/// Number of worker threads: HIERLOC_THREADS when set (clamped to >= 1),
/// otherwise std::thread::hardware_concurrency().
unsigned worker_count();

/// Runs fn(i) for i in [0, n). Work items must be independent; callers get
/// deterministic results by writing to slot i of a pre-sized container.
/// Nested calls run serially so stages cannot oversubscribe each other.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace hierloc
