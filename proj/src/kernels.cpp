// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/kernels.hpp"

#include <cstring>

#include "affectfuse/parallel.hpp"

namespace affectfuse::kernels {

namespace {

// Work threshold below which threading overhead dominates.
constexpr int64_t kParallelMinWork = 1 << 15;

inline void row_product(const double* a, const double* b, double* c, int i, int k, int n) {
  const double* arow = a + static_cast<int64_t>(i) * k;
  double* crow = c + static_cast<int64_t>(i) * n;
  for (int kk = 0; kk < k; ++kk) {
    const double av = arow[kk];
    const double* brow = b + static_cast<int64_t>(kk) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline bool go_parallel(int64_t work) {
  return parallel::threads() > 1 && work >= kParallelMinWork;
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) row_product(a, b, c, i, k, n);
}

void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
  parallel::parallel_for(m, [&](int i) { row_product(a, b, c, i, k, n); });
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (go_parallel(static_cast<int64_t>(m) * k * n)) {
    matmul_omp(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  if (go_parallel(static_cast<int64_t>(m) * k * n)) {
    parallel::parallel_for(m, [&](int i) { row_product(a, b, c, i, k, n); });
  } else {
    for (int i = 0; i < m; ++i) row_product(a, b, c, i, k, n);
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  auto body = [&](int i) {
    const double* arow = a + static_cast<int64_t>(i) * n;
    double* crow = c + static_cast<int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double* brow = b + static_cast<int64_t>(l) * n;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[l] += s;
    }
  };
  if (go_parallel(static_cast<int64_t>(m) * n * k)) {
    parallel::parallel_for(m, body);
  } else {
    for (int i = 0; i < m; ++i) body(i);
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  auto body = [&](int l) {
    double* crow = c + static_cast<int64_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[static_cast<int64_t>(i) * k + l];
      const double* brow = b + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  };
  if (go_parallel(static_cast<int64_t>(m) * k * n)) {
    parallel::parallel_for(k, body);
  } else {
    for (int l = 0; l < k; ++l) body(l);
  }
}

}  // namespace affectfuse::kernels
