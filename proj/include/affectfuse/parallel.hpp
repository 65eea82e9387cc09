// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <type_traits>

namespace affectfuse::parallel {

// Worker count for all parallel regions. 0 or negative resets to the
// hardware default. Thread count never changes numerical results: every
// parallel loop writes to disjoint per-index slots and reductions happen
// serially afterwards in index order.
void set_threads(int n);
int threads();

namespace detail {
void run_indexed(int n, void* ctx, void (*fn)(void*, int));
}

// Runs fn(0..n-1). Parallel when more than one worker is configured and the
// range is nontrivial; exceptions from workers are rethrown (first by
// completion, arbitrary but never lost).
template <class F>
void parallel_for(int n, F&& fn) {
  using Fn = std::remove_reference_t<F>;
  detail::run_indexed(n, &fn, [](void* ctx, int i) { (*static_cast<Fn*>(ctx))(i); });
}

}  // namespace affectfuse::parallel
