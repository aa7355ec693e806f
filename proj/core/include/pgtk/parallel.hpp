// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "pgtk/common.hpp"

namespace pgtk {

// Resolves a thread-count request: explicit value wins, then the
// PGTK_THREADS environment variable, then hardware concurrency.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PGTK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return int(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

// Runs fn(task, worker) for task in [0, n_tasks).  Tasks are assigned to
// workers statically (task % n_threads) so any reduction the caller does
// per worker buffer is independent of scheduling; results are then
// deterministic for a fixed thread count.  n_threads == 1 runs inline.
inline void run_tasks(int n_tasks, int n_threads,
                      const std::function<void(int task, int worker)>& fn) {
  check(n_tasks >= 0, "run_tasks: negative task count");
  if (n_tasks == 0) return;
  if (n_threads <= 0) n_threads = resolve_threads(0);
  if (n_threads > n_tasks) n_threads = n_tasks;
  if (n_threads == 1) {
    for (int t = 0; t < n_tasks; ++t) fn(t, 0);
    return;
  }

  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker_loop = [&](int worker) {
    for (int t = worker; t < n_tasks; t += n_threads) {
      try {
        fn(t, worker);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  for (int w = 1; w < n_threads; ++w) pool.emplace_back(worker_loop, w);
  worker_loop(0);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pgtk
