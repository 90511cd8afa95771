// convoice/parallel.cpp

#include "convoice/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace convoice {
namespace {

std::size_t ThreadsFromEnv() {
  const char* env = std::getenv("CONVOICE_THREADS");
  if (!env) return 1;
  try {
    const long v = std::stol(env);
    return v > 0 ? static_cast<std::size_t>(v) : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

std::atomic<std::size_t>& Budget() {
  static std::atomic<std::size_t> threads{ThreadsFromEnv()};
  return threads;
}

}  // namespace

std::size_t KernelThreads() { return Budget().load(); }

void SetKernelThreads(std::size_t threads) { Budget().store(std::max<std::size_t>(1, threads)); }

void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(KernelThreads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace convoice
