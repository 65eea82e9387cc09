// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace affectfuse::parallel {

namespace {

int default_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::atomic<int> g_threads{0};  // 0 means "not set yet"

int resolve_initial() {
  if (const char* env = std::getenv("AFFECTFUSE_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return default_threads();
}

}  // namespace

void set_threads(int n) {
  g_threads.store(n >= 1 ? n : default_threads(), std::memory_order_relaxed);
}

int threads() {
  int v = g_threads.load(std::memory_order_relaxed);
  if (v == 0) {
    v = resolve_initial();
    g_threads.store(v, std::memory_order_relaxed);
  }
  return v;
}

namespace detail {

void run_indexed(int n, void* ctx, void (*fn)(void*, int)) {
  if (n <= 0) return;
  int nt = threads();
  if (nt <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(ctx, i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < n; ++i) {
    try {
      fn(ctx, i);
    } catch (...) {
#pragma omp critical(affectfuse_parallel_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (int i = 0; i < n; ++i) fn(ctx, i);
#endif
}

}  // namespace detail

}  // namespace affectfuse::parallel
