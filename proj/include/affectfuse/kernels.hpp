// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>

namespace affectfuse::kernels {

// Dense row-major matrix products. Each kernel exists in a serial reference
// form and an OpenMP form that splits output rows across threads; for a fixed
// output element both run the identical ascending-k accumulation, so results
// are bit-identical at any thread count. The unsuffixed entry points dispatch
// on configured thread count and problem size.

// C = A(m x k) * B(k x n)
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// C += A(m x k) * B(k x n)
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);

// C += A(m x n) * B(k x n)^T, result m x k
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k);

// C += A(m x k)^T * B(m x n), result k x n
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace affectfuse::kernels
