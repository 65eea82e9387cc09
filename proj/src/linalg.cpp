// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/linalg.hpp"

#include <cmath>
#include <vector>

#include "affectfuse/error.hpp"
#include "affectfuse/rng.hpp"

namespace affectfuse {

namespace {

double spectral_norm_impl(const double* w, int m, int n, double rel_tol, int max_iter) {
  if (m == 0 || n == 0) return 0.0;
  // All-zero matrices short-circuit; power iteration cannot grow from zero.
  bool any = false;
  for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i)
    if (w[i] != 0.0) {
      any = true;
      break;
    }
  if (!any) return 0.0;

  Rng rng(0x5eed5bec7ull);
  std::vector<double> v(static_cast<size_t>(n));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;

  std::vector<double> u(static_cast<size_t>(m));
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // u = W v
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      const double* row = w + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) s += row[j] * v[static_cast<size_t>(j)];
      u[static_cast<size_t>(i)] = s;
    }
    double unorm = 0.0;
    for (double x : u) unorm += x * x;
    unorm = std::sqrt(unorm);
    if (unorm == 0.0) return 0.0;  // start vector in the null space
    // v = W^T u / |W^T u|
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += w[static_cast<int64_t>(i) * n + j] * u[static_cast<size_t>(i)];
      v[static_cast<size_t>(j)] = s;
    }
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    for (auto& x : v) x /= vnorm;
    const double next = unorm;
    if (it > 0 && std::abs(next - sigma) <= rel_tol * std::abs(next)) return next;
    sigma = next;
  }
  throw NumericalError("spectral norm power iteration did not converge in " +
                       std::to_string(max_iter) + " steps");
}

}  // namespace

double spectral_norm(const Tensor& w, double rel_tol, int max_iter) {
  if (w.ndim() != 2) throw DimensionError("spectral_norm: need 2D tensor, got " + shape_str(w.shape));
  return spectral_norm_impl(w.data.data(), w.shape[0], w.shape[1], rel_tol, max_iter);
}

double spectral_norm_cols(const Tensor& w, int c0, int c1, double rel_tol, int max_iter) {
  if (w.ndim() != 2) throw DimensionError("spectral_norm_cols: need 2D tensor");
  if (c0 < 0 || c1 > w.shape[1] || c0 >= c1)
    throw ContractError("spectral_norm_cols: bad column range [" + std::to_string(c0) + "," +
                        std::to_string(c1) + ")");
  const int m = w.shape[0], n = c1 - c0;
  std::vector<double> sub(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      sub[static_cast<size_t>(i) * n + j] = w.at(i, c0 + j);
  return spectral_norm_impl(sub.data(), m, n, rel_tol, max_iter);
}

}  // namespace affectfuse
