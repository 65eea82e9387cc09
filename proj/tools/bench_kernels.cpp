// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Compares the serial reference kernels against the OpenMP versions and
// reports timings plus a bit-exactness check. Usage: bench_kernels [threads]

#include <cstdio>
#include <cstdlib>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "affectfuse/kernels.hpp"
#include "affectfuse/parallel.hpp"
#include "affectfuse/rng.hpp"

using namespace affectfuse;

namespace {

double now() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return 0.0;
#endif
}

double bench_matmul(int m, int k, int n, int reps, bool parallel_kernel) {
  Rng rng(1234);
  std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
      c(static_cast<size_t>(m) * n);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  // warmup
  if (parallel_kernel)
    kernels::matmul_omp(a.data(), b.data(), c.data(), m, k, n);
  else
    kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n);
  double t0 = now();
  for (int r = 0; r < reps; ++r) {
    if (parallel_kernel)
      kernels::matmul_omp(a.data(), b.data(), c.data(), m, k, n);
    else
      kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n);
  }
  return (now() - t0) / reps;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) parallel::set_threads(std::atoi(argv[1]));
  std::printf("threads: %d\n", parallel::threads());

  const int sizes[][3] = {{64, 64, 64}, {128, 128, 128}, {256, 256, 256}, {512, 512, 512}};
  std::printf("%-16s %12s %12s %8s\n", "matmul", "serial(ms)", "omp(ms)", "speedup");
  for (auto& s : sizes) {
    const int m = s[0], k = s[1], n = s[2];
    const int reps = m <= 128 ? 50 : 10;
    double ts = bench_matmul(m, k, n, reps, false);
    double tp = bench_matmul(m, k, n, reps, true);
    std::printf("%4dx%4dx%4d   %12.3f %12.3f %8.2f\n", m, k, n, ts * 1e3, tp * 1e3,
                tp > 0 ? ts / tp : 0.0);
  }

  // Bit-exactness across thread counts.
  Rng rng(7);
  const int m = 93, k = 71, n = 57;
  std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  std::vector<double> cs(static_cast<size_t>(m) * n), cp(static_cast<size_t>(m) * n);
  kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n);
  kernels::matmul_omp(a.data(), b.data(), cp.data(), m, k, n);
  std::printf("serial/omp bit-identical: %s\n", cs == cp ? "yes" : "NO");
  return cs == cp ? 0 : 1;
}
