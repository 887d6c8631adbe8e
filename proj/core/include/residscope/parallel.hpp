// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace residscope {

// Worker count: RESIDSCOPE_THREADS when set and positive, otherwise the
// hardware concurrency.
std::size_t worker_count();

// Runs fn(0..n-1) on up to worker_count() threads. Each index is executed
// exactly once; the first exception thrown is rethrown after all workers
// join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Results are stored by index, so the output order never depends on
// scheduling.
template <typename T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace residscope
