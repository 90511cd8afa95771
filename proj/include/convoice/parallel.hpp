// convoice/parallel.hpp
//
// Kernel thread budget. Defaults to 1 (stable benchmark timings); the
// CONVOICE_THREADS environment variable or SetKernelThreads raise it.

#pragma once

#include <cstddef>
#include <functional>

namespace convoice {

std::size_t KernelThreads();
void SetKernelThreads(std::size_t threads);

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks across at
// most KernelThreads() threads; each index is visited exactly once.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace convoice
