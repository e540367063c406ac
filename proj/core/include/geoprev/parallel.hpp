#pragma once

#include <cstddef>
#include <functional>

namespace geoprev::parallel {

/// Runs body(i) for i in [0, n). With threads <= 1 everything runs inline on
/// the calling thread; otherwise indices are split into contiguous blocks over
/// `threads` std::threads. Bodies must write only to per-index state.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

/// Number of worker threads spawned by parallel_for since the last reset.
/// Lets tests verify that single-threaded runs never start workers.
std::size_t workers_spawned();
void reset_worker_count();

}  // namespace geoprev::parallel
