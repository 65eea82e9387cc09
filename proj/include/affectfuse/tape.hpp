// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <functional>
#include <unordered_map>
#include <vector>

#include "affectfuse/tensor.hpp"

namespace affectfuse {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Val {
  int id = -1;
  bool ok() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. A tape is built fresh for every forward
// pass; recording an op runs it immediately and appends one node, so node
// order is a topological order by construction. backward() walks nodes in
// reverse exactly once, skipping nodes that need no gradient or received
// none. Leaves copy their data in: mutating the source tensor after
// recording does not disturb an existing tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. leaf() honors t.requires_grad; constant() never tracks.
  Val leaf(const Tensor& t);
  Val constant(const Tensor& t);
  Val constant(std::vector<int> shape, std::vector<double> data);

  // Matrix ops (2D).
  Val matmul(Val a, Val b);
  Val transpose(Val a);

  // Elementwise and broadcasting.
  Val add(Val a, Val b);  // same shape, or 2D + 1D row-broadcast over the last axis
  Val sub(Val a, Val b);  // same shape
  Val mul(Val a, Val b);  // Hadamard, same shape
  Val div(Val a, Val b);  // elementwise, same shape
  Val scale(Val a, double c);
  Val add_scalar(Val a, double c);
  Val sigmoid(Val a);
  Val relu(Val a);
  Val log(Val a);  // DomainError on any nonpositive entry

  // Shape and reduction.
  Val reshape(Val a, std::vector<int> shape);  // numel preserved
  Val concat_last_axis(Val a, Val b);          // 1D+1D or 2D+2D with equal rows
  Val mean_axis(Val a, int axis);              // 2D: axis 0 or 1; 1D: axis 0 -> scalar
  Val sum_all(Val a);                          // -> [1]
  Val pick(Val a, int64_t index);              // flat index -> [1]
  Val take_row(Val a, int r);                  // 2D -> [cols]
  Val take_col(Val a, int c);                  // 2D -> [rows]
  Val slice_rows(Val a, int r0, int r1);       // 2D -> [(r1-r0) x cols]
  Val scale_rows(Val x, Val s);                // x [m x n] * s [m], per-row scalar

  // Softmax family. Row softmax is numerically shifted by the row max.
  // The causal variant works on square matrices: row t is a softmax over
  // columns 0..t and exact zeros beyond.
  Val softmax_rows(Val a);  // 2D per row, or 1D as a single row
  Val causal_softmax_rows(Val a);

  // Fused layer norm over the last axis; x is 1D or 2D, gamma/beta 1D.
  Val layer_norm(Val x, Val gamma, Val beta, double eps);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // reachable node with needs_grad. loss must be a scalar.
  void backward(Val loss);

  // By value: recording ops may reallocate node storage, so a reference
  // would not survive the next recorded op.
  std::vector<int> shape(Val v) const { return node(v).shape; }
  const std::vector<double>& value(Val v) const { return node(v).value; }
  Tensor value_tensor(Val v) const;
  bool needs_grad(Val v) const { return node(v).needs_grad; }
  // Gradient of the last backward() w.r.t. v; zeros if v never participated.
  std::vector<double> grad(Val v) const;
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily during backward
    std::array<int, 3> parent{-1, -1, -1};
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  const Node& node(Val v) const;
  Node& node(Val v);
  Val push(std::vector<int> shape, std::vector<double> value, std::array<int, 3> parents,
           std::function<void(Tape&, int)> bw);
  std::vector<double>& grad_buf(int id);
  bool parent_needs(int id) const { return id >= 0 && nodes_[id].needs_grad; }

  std::vector<Node> nodes_;

  friend struct TapeBackdoor;  // test hook
};

// Maps parameter tensors to tape leaves, one leaf per tensor per tape, so
// shared parameters accumulate gradients across every use site.
class Binder {
 public:
  explicit Binder(Tape& tape) : tape_(&tape) {}
  Val operator()(Tensor& t);
  Val val_of(const Tensor& t) const;  // ContractError if never bound

 private:
  Tape* tape_;
  std::unordered_map<const Tensor*, Val> bound_;
};

}  // namespace affectfuse
