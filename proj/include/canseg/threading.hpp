#pragma once

#include <cstddef>
#include <functional>

namespace canseg {

// Number of worker threads used inside kernels. Defaults to 1; the
// CANSEG_THREADS environment variable (read once at first use) raises it.
int thread_count();
void set_thread_count(int n);

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Each chunk writes disjoint output, so results are bit-identical for any
// thread count. Small ranges run inline.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace canseg
