#pragma once

#include <cstddef>
#include <functional>

namespace cpinn {

// Worker count: min(hardware, 8), capped by the CPINN_THREADS env var.
int thread_count();
void set_thread_count(int n);

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
// The block layout depends only on (n, block_size), never on the worker
// count, so callers that reduce per-block results in block order get
// bit-identical sums for any thread setting.
void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace cpinn
