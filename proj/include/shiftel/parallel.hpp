#pragma once

#include <cstddef>
#include <functional>

namespace shiftel {

//! Worker count: `requested` if positive, else SHIFTEL_THREADS, else the
//! hardware concurrency (at least 1).
unsigned resolve_threads(int requested);

//! Calls fn(i) for i in [0, count) on up to `threads` workers. Items are
//! claimed in index order; the first exception is rethrown after all workers
//! stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

} // namespace shiftel
