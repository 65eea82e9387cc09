// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affectfuse/error.hpp"
#include "affectfuse/kernels.hpp"

namespace affectfuse {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of src[0..len) into dst, shifted by the segment max.
void softmax_segment(const double* src, double* dst, int len) {
  double mx = src[0];
  for (int i = 1; i < len; ++i) mx = std::max(mx, src[i]);
  double sum = 0.0;
  for (int i = 0; i < len; ++i) {
    dst[i] = std::exp(src[i] - mx);
    sum += dst[i];
  }
  for (int i = 0; i < len; ++i) dst[i] /= sum;
}

// dx_j = y_j * (g_j - sum_l g_l y_l) over one softmax segment, accumulated.
void softmax_segment_backward(const double* y, const double* g, double* dx, int len) {
  double dot = 0.0;
  for (int i = 0; i < len; ++i) dot += g[i] * y[i];
  for (int i = 0; i < len; ++i) dx[i] += y[i] * (g[i] - dot);
}

}  // namespace

const Tape::Node& Tape::node(Val v) const {
  if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
    throw ContractError("tape: invalid value handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Tape::Node& Tape::node(Val v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Val Tape::push(std::vector<int> shape, std::vector<double> value, std::array<int, 3> parents,
               std::function<void(Tape&, int)> bw) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.parent = parents;
  for (int p : parents) n.needs_grad = n.needs_grad || parent_needs(p);
  if (n.needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Val Tape::leaf(const Tensor& t) {
  Node n;
  n.shape = t.shape;
  n.value = t.data;
  n.needs_grad = t.requires_grad;
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

Val Tape::constant(const Tensor& t) {
  Node n;
  n.shape = t.shape;
  n.value = t.data;
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

Val Tape::constant(std::vector<int> shape, std::vector<double> data) {
  return constant(Tensor(std::move(shape), std::move(data)));
}

Tensor Tape::value_tensor(Val v) const {
  const Node& n = node(v);
  return Tensor(n.shape, n.value);
}

std::vector<double> Tape::grad(Val v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

// ---- matrix ops ----

Val Tape::matmul(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
    throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
  const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul(A.value.data(), B.value.data(), out.data(), m, k, n);
  return push({m, n}, std::move(out), {a.id, b.id, -1}, [m, k, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
    if (t.nodes_[pa].needs_grad)
      kernels::matmul_nt_acc(g.data(), t.nodes_[pb].value.data(), t.grad_buf(pa).data(), m, n, k);
    if (t.nodes_[pb].needs_grad)
      kernels::matmul_tn_acc(t.nodes_[pa].value.data(), g.data(), t.grad_buf(pb).data(), m, k, n);
  });
}

Val Tape::transpose(Val a) {
  const Node& A = node(a);
  if (A.shape.size() != 2)
    throw DimensionError("transpose: needs a 2D tensor, got " + shape_str(A.shape));
  const int m = A.shape[0], n = A.shape[1];
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = A.value[static_cast<size_t>(i) * n + j];
  return push({n, m}, std::move(out), {a.id, -1, -1}, [m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) da[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  });
}

// ---- elementwise ----

Val Tape::add(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape == B.shape) {
    std::vector<double> out(A.value.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] + B.value[i];
    return push(A.shape, std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      for (int s = 0; s < 2; ++s) {
        const int p = t.nodes_[self].parent[s];
        if (!t.nodes_[p].needs_grad) continue;
        auto& d = t.grad_buf(p);
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }
  // Row broadcast: [m x n] + [n].
  if (A.shape.size() == 2 && B.shape.size() == 1 && A.shape[1] == B.shape[0]) {
    const int m = A.shape[0], n = A.shape[1];
    std::vector<double> out(A.value.size());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(i) * n + j] = A.value[static_cast<size_t>(i) * n + j] + B.value[static_cast<size_t>(j)];
    return push(A.shape, std::move(out), {a.id, b.id, -1}, [m, n](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
      if (t.nodes_[pa].needs_grad) {
        auto& da = t.grad_buf(pa);
        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (t.nodes_[pb].needs_grad) {
        auto& db = t.grad_buf(pb);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) db[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * n + j];
      }
    });
  }
  throw DimensionError("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
}

Val Tape::sub(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape)
    throw DimensionError("sub: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] - B.value[i];
  return push(A.shape, std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
    if (t.nodes_[pa].needs_grad) {
      auto& da = t.grad_buf(pa);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (t.nodes_[pb].needs_grad) {
      auto& db = t.grad_buf(pb);
      for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Val Tape::mul(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape)
    throw DimensionError("mul: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] * B.value[i];
  return push(A.shape, std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
    if (t.nodes_[pa].needs_grad) {
      auto& da = t.grad_buf(pa);
      const auto& bv = t.nodes_[pb].value;
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.nodes_[pb].needs_grad) {
      auto& db = t.grad_buf(pb);
      const auto& av = t.nodes_[pa].value;
      for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Val Tape::div(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape != B.shape)
    throw DimensionError("div: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] / B.value[i];
  return push(A.shape, std::move(out), {a.id, b.id, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const auto& c = t.nodes_[self].value;
    const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
    const auto& bv = t.nodes_[pb].value;
    if (t.nodes_[pa].needs_grad) {
      auto& da = t.grad_buf(pa);
      for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / bv[i];
    }
    if (t.nodes_[pb].needs_grad) {
      auto& db = t.grad_buf(pb);
      for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i] * c[i] / bv[i];
    }
  });
}

Val Tape::scale(Val a, double c) {
  const Node& A = node(a);
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] * c;
  return push(A.shape, std::move(out), {a.id, -1, -1}, [c](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
  });
}

Val Tape::add_scalar(Val a, double c) {
  const Node& A = node(a);
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] + c;
  return push(A.shape, std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

Val Tape::sigmoid(Val a) {
  const Node& A = node(a);
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(A.value[i]);
  return push(A.shape, std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Val Tape::relu(Val a) {
  const Node& A = node(a);
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = A.value[i] > 0.0 ? A.value[i] : 0.0;
  return push(A.shape, std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int p = t.nodes_[self].parent[0];
    const auto& x = t.nodes_[p].value;
    auto& da = t.grad_buf(p);
    for (size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) da[i] += g[i];
  });
}

Val Tape::log(Val a) {
  const Node& A = node(a);
  std::vector<double> out(A.value.size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (A.value[i] <= 0.0)
      throw DomainError("log: nonpositive input " + std::to_string(A.value[i]));
    out[i] = std::log(A.value[i]);
  }
  return push(A.shape, std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int p = t.nodes_[self].parent[0];
    const auto& x = t.nodes_[p].value;
    auto& da = t.grad_buf(p);
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / x[i];
  });
}

// ---- shape & reduction ----

Val Tape::reshape(Val a, std::vector<int> shape) {
  const Node& A = node(a);
  if (shape_numel(shape) != static_cast<int64_t>(A.value.size()))
    throw DimensionError("reshape: cannot view " + shape_str(A.shape) + " as " + shape_str(shape));
  std::vector<double> out = A.value;
  return push(std::move(shape), std::move(out), {a.id, -1, -1}, [](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

Val Tape::concat_last_axis(Val a, Val b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape.size() == 1 && B.shape.size() == 1) {
    const int na = A.shape[0], nb = B.shape[0];
    std::vector<double> out;
    out.reserve(static_cast<size_t>(na + nb));
    out.insert(out.end(), A.value.begin(), A.value.end());
    out.insert(out.end(), B.value.begin(), B.value.end());
    return push({na + nb}, std::move(out), {a.id, b.id, -1}, [na, nb](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
      if (t.nodes_[pa].needs_grad) {
        auto& da = t.grad_buf(pa);
        for (int i = 0; i < na; ++i) da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
      }
      if (t.nodes_[pb].needs_grad) {
        auto& db = t.grad_buf(pb);
        for (int i = 0; i < nb; ++i) db[static_cast<size_t>(i)] += g[static_cast<size_t>(na + i)];
      }
    });
  }
  if (A.shape.size() == 2 && B.shape.size() == 2 && A.shape[0] == B.shape[0]) {
    const int m = A.shape[0], na = A.shape[1], nb = B.shape[1], n = na + nb;
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < na; ++j) out[static_cast<size_t>(i) * n + j] = A.value[static_cast<size_t>(i) * na + j];
      for (int j = 0; j < nb; ++j) out[static_cast<size_t>(i) * n + na + j] = B.value[static_cast<size_t>(i) * nb + j];
    }
    return push({m, n}, std::move(out), {a.id, b.id, -1}, [m, na, nb, n](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      const int pa = t.nodes_[self].parent[0], pb = t.nodes_[self].parent[1];
      if (t.nodes_[pa].needs_grad) {
        auto& da = t.grad_buf(pa);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < na; ++j) da[static_cast<size_t>(i) * na + j] += g[static_cast<size_t>(i) * n + j];
      }
      if (t.nodes_[pb].needs_grad) {
        auto& db = t.grad_buf(pb);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nb; ++j) db[static_cast<size_t>(i) * nb + j] += g[static_cast<size_t>(i) * n + na + j];
      }
    });
  }
  throw DimensionError("concat_last_axis: incompatible shapes " + shape_str(A.shape) + " vs " +
                       shape_str(B.shape));
}

Val Tape::mean_axis(Val a, int axis) {
  const Node& A = node(a);
  if (A.shape.size() == 1) {
    if (axis != 0) throw DimensionError("mean_axis: 1D tensor has only axis 0");
    const int n = A.shape[0];
    double s = 0.0;
    for (double v : A.value) s += v;
    return push({1}, {s / n}, {a.id, -1, -1}, [n](Tape& t, int self) {
      const double g = t.nodes_[self].grad[0] / n;
      auto& da = t.grad_buf(t.nodes_[self].parent[0]);
      for (auto& d : da) d += g;
    });
  }
  if (A.shape.size() != 2 || (axis != 0 && axis != 1))
    throw DimensionError("mean_axis: need 2D tensor with axis 0 or 1, got " + shape_str(A.shape));
  const int m = A.shape[0], n = A.shape[1];
  if (axis == 0) {
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += A.value[static_cast<size_t>(i) * n + j];
    for (auto& v : out) v /= m;
    return push({n}, std::move(out), {a.id, -1, -1}, [m, n](Tape& t, int self) {
      const auto& g = t.nodes_[self].grad;
      auto& da = t.grad_buf(t.nodes_[self].parent[0]);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) da[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j)] / m;
    });
  }
  std::vector<double> out(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += A.value[static_cast<size_t>(i) * n + j];
    out[static_cast<size_t>(i)] = s / n;
  }
  return push({m}, std::move(out), {a.id, -1, -1}, [m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) da[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(i)] / n;
  });
}

Val Tape::sum_all(Val a) {
  const Node& A = node(a);
  double s = 0.0;
  for (double v : A.value) s += v;
  return push({1}, {s}, {a.id, -1, -1}, [](Tape& t, int self) {
    const double g = t.nodes_[self].grad[0];
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (auto& d : da) d += g;
  });
}

Val Tape::pick(Val a, int64_t index) {
  const Node& A = node(a);
  if (index < 0 || index >= static_cast<int64_t>(A.value.size()))
    throw ContractError("pick: index " + std::to_string(index) + " out of range for " +
                        shape_str(A.shape));
  return push({1}, {A.value[static_cast<size_t>(index)]}, {a.id, -1, -1},
              [index](Tape& t, int self) {
                t.grad_buf(t.nodes_[self].parent[0])[static_cast<size_t>(index)] +=
                    t.nodes_[self].grad[0];
              });
}

Val Tape::take_row(Val a, int r) {
  const Node& A = node(a);
  if (A.shape.size() != 2 || r < 0 || r >= A.shape[0])
    throw ContractError("take_row: row " + std::to_string(r) + " out of range for " +
                        shape_str(A.shape));
  const int n = A.shape[1];
  std::vector<double> out(A.value.begin() + static_cast<int64_t>(r) * n,
                          A.value.begin() + static_cast<int64_t>(r + 1) * n);
  return push({n}, std::move(out), {a.id, -1, -1}, [r, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int j = 0; j < n; ++j) da[static_cast<size_t>(r) * n + j] += g[static_cast<size_t>(j)];
  });
}

Val Tape::take_col(Val a, int c) {
  const Node& A = node(a);
  if (A.shape.size() != 2 || c < 0 || c >= A.shape[1])
    throw ContractError("take_col: column " + std::to_string(c) + " out of range for " +
                        shape_str(A.shape));
  const int m = A.shape[0], n = A.shape[1];
  std::vector<double> out(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) out[static_cast<size_t>(i)] = A.value[static_cast<size_t>(i) * n + c];
  return push({m}, std::move(out), {a.id, -1, -1}, [c, m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int i = 0; i < m; ++i) da[static_cast<size_t>(i) * n + c] += g[static_cast<size_t>(i)];
  });
}

Val Tape::slice_rows(Val a, int r0, int r1) {
  const Node& A = node(a);
  if (A.shape.size() != 2 || r0 < 0 || r1 > A.shape[0] || r0 >= r1)
    throw ContractError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                        ") invalid for " + shape_str(A.shape));
  const int n = A.shape[1], m = r1 - r0;
  std::vector<double> out(A.value.begin() + static_cast<int64_t>(r0) * n,
                          A.value.begin() + static_cast<int64_t>(r1) * n);
  return push({m, n}, std::move(out), {a.id, -1, -1}, [r0, m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        da[static_cast<size_t>(r0 + i) * n + j] += g[static_cast<size_t>(i) * n + j];
  });
}

Val Tape::scale_rows(Val x, Val s) {
  const Node& X = node(x);
  const Node& S = node(s);
  if (X.shape.size() != 2 || S.shape.size() != 1 || S.shape[0] != X.shape[0])
    throw DimensionError("scale_rows: need [m x n] and [m], got " + shape_str(X.shape) + " and " +
                         shape_str(S.shape));
  const int m = X.shape[0], n = X.shape[1];
  std::vector<double> out(X.value.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = X.value[static_cast<size_t>(i) * n + j] * S.value[static_cast<size_t>(i)];
  return push(X.shape, std::move(out), {x.id, s.id, -1}, [m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int px = t.nodes_[self].parent[0], ps = t.nodes_[self].parent[1];
    const auto& xv = t.nodes_[px].value;
    const auto& sv = t.nodes_[ps].value;
    if (t.nodes_[px].needs_grad) {
      auto& dx = t.grad_buf(px);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dx[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(i) * n + j] * sv[static_cast<size_t>(i)];
    }
    if (t.nodes_[ps].needs_grad) {
      auto& ds = t.grad_buf(ps);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += g[static_cast<size_t>(i) * n + j] * xv[static_cast<size_t>(i) * n + j];
        ds[static_cast<size_t>(i)] += acc;
      }
    }
  });
}

// ---- softmax family ----

Val Tape::softmax_rows(Val a) {
  const Node& A = node(a);
  int m, n;
  if (A.shape.size() == 1) {
    m = 1;
    n = A.shape[0];
  } else if (A.shape.size() == 2) {
    m = A.shape[0];
    n = A.shape[1];
  } else {
    throw DimensionError("softmax_rows: need 1D or 2D, got " + shape_str(A.shape));
  }
  std::vector<double> out(A.value.size());
  for (int i = 0; i < m; ++i)
    softmax_segment(A.value.data() + static_cast<int64_t>(i) * n, out.data() + static_cast<int64_t>(i) * n, n);
  return push(A.shape, std::move(out), {a.id, -1, -1}, [m, n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int i = 0; i < m; ++i)
      softmax_segment_backward(y.data() + static_cast<int64_t>(i) * n,
                               g.data() + static_cast<int64_t>(i) * n,
                               da.data() + static_cast<int64_t>(i) * n, n);
  });
}

Val Tape::causal_softmax_rows(Val a) {
  const Node& A = node(a);
  if (A.shape.size() != 2 || A.shape[0] != A.shape[1])
    throw DimensionError("causal_softmax_rows: need a square 2D tensor, got " + shape_str(A.shape));
  const int n = A.shape[0];
  std::vector<double> out(A.value.size(), 0.0);
  for (int i = 0; i < n; ++i)
    softmax_segment(A.value.data() + static_cast<int64_t>(i) * n, out.data() + static_cast<int64_t>(i) * n, i + 1);
  return push(A.shape, std::move(out), {a.id, -1, -1}, [n](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& da = t.grad_buf(t.nodes_[self].parent[0]);
    for (int i = 0; i < n; ++i)
      softmax_segment_backward(y.data() + static_cast<int64_t>(i) * n,
                               g.data() + static_cast<int64_t>(i) * n,
                               da.data() + static_cast<int64_t>(i) * n, i + 1);
  });
}

// ---- layer norm ----

Val Tape::layer_norm(Val x, Val gamma, Val beta, double eps) {
  const Node& X = node(x);
  const Node& G = node(gamma);
  const Node& B = node(beta);
  int m, d;
  if (X.shape.size() == 1) {
    m = 1;
    d = X.shape[0];
  } else if (X.shape.size() == 2) {
    m = X.shape[0];
    d = X.shape[1];
  } else {
    throw DimensionError("layer_norm: need 1D or 2D input, got " + shape_str(X.shape));
  }
  if (G.shape != std::vector<int>{d} || B.shape != std::vector<int>{d})
    throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                         shape_str(G.shape) + " and " + shape_str(B.shape));
  if (eps <= 0.0) throw DomainError("layer_norm: eps must be positive");
  std::vector<double> out(X.value.size());
  for (int i = 0; i < m; ++i) {
    const double* row = X.value.data() + static_cast<int64_t>(i) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* orow = out.data() + static_cast<int64_t>(i) * d;
    for (int j = 0; j < d; ++j)
      orow[j] = G.value[static_cast<size_t>(j)] * (row[j] - mu) * inv + B.value[static_cast<size_t>(j)];
  }
  return push(X.shape, std::move(out), {x.id, gamma.id, beta.id}, [m, d, eps](Tape& t, int self) {
    const auto& g = t.nodes_[self].grad;
    const int px = t.nodes_[self].parent[0], pg = t.nodes_[self].parent[1], pb = t.nodes_[self].parent[2];
    const auto& xv = t.nodes_[px].value;
    const auto& gv = t.nodes_[pg].value;
    const bool wx = t.nodes_[px].needs_grad;
    const bool wg = t.nodes_[pg].needs_grad;
    const bool wb = t.nodes_[pb].needs_grad;
    for (int i = 0; i < m; ++i) {
      const double* row = xv.data() + static_cast<int64_t>(i) * d;
      const double* grow = g.data() + static_cast<int64_t>(i) * d;
      double mu = 0.0;
      for (int j = 0; j < d; ++j) mu += row[j];
      mu /= d;
      double var = 0.0;
      for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= d;
      const double inv = 1.0 / std::sqrt(var + eps);
      if (wg) {
        auto& dg = t.grad_buf(pg);
        for (int j = 0; j < d; ++j) dg[static_cast<size_t>(j)] += grow[j] * (row[j] - mu) * inv;
      }
      if (wb) {
        auto& db = t.grad_buf(pb);
        for (int j = 0; j < d; ++j) db[static_cast<size_t>(j)] += grow[j];
      }
      if (wx) {
        auto& dx = t.grad_buf(px);
        double mean_h = 0.0, mean_hx = 0.0;
        for (int j = 0; j < d; ++j) {
          const double h = grow[j] * gv[static_cast<size_t>(j)];
          const double xhat = (row[j] - mu) * inv;
          mean_h += h;
          mean_hx += h * xhat;
        }
        mean_h /= d;
        mean_hx /= d;
        for (int j = 0; j < d; ++j) {
          const double h = grow[j] * gv[static_cast<size_t>(j)];
          const double xhat = (row[j] - mu) * inv;
          dx[static_cast<size_t>(i) * d + j] += (h - mean_h - xhat * mean_hx) * inv;
        }
      }
    }
  });
}

// ---- backward ----

void Tape::backward(Val loss) {
  const Node& L = node(loss);
  if (L.value.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(L.shape));
  if (!L.needs_grad)
    throw ContractError("backward: loss does not depend on any gradient-tracked leaf");
  grad_buf(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
}

// ---- binder ----

Val Binder::operator()(Tensor& t) {
  auto it = bound_.find(&t);
  if (it != bound_.end()) return it->second;
  Val v = tape_->leaf(t);
  bound_.emplace(&t, v);
  return v;
}

Val Binder::val_of(const Tensor& t) const {
  auto it = bound_.find(&t);
  if (it == bound_.end()) throw ContractError("binder: tensor was never bound to this tape");
  return it->second;
}

}  // namespace affectfuse
