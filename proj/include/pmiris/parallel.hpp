#pragma once

#include <thread>
#include <vector>

#include "pmiris/error.hpp"

namespace pmiris {

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results are identical for any worker count; jobs <= 1 stays sequential.
template <typename Fn>
void parallel_for(long n, int jobs, Fn&& fn) {
  if (n < 0) throw InvalidParam("parallel_for: negative count");
  if (jobs <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = int(std::min<long>(jobs, n));
  std::vector<std::thread> threads;
  threads.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&fn, w, workers, n] {
      for (long i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : threads) t.join();
}

}  // namespace pmiris
