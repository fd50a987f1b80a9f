// Copyright 2026 The distillab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "distillab/matrix.hpp"

namespace dlab::ad {

enum class OpKind {
  input,
  matmul,
  transpose,
  row_normalize,
  softmax,
  log,
  sum,
  scale,
  add,
  add_row,  // broadcast a 1xC row over every row
  tanh,
  dropout_mask_apply,
  drop_diagonal,
};

const char* op_name(OpKind kind);

using NodeId = std::size_t;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Matrix& value() const;
};

using GradientMap = std::map<NodeId, Matrix>;

/// Per-node constant data needed by some backward rules.
struct NodeAux {
  std::optional<Matrix> tensor;  // mask or weights
  double scalar = 0.0;           // temperature or scale factor
};

/// Tape of compute nodes built by the free functions below. Nodes are appended
/// in creation order; backward() nonetheless derives its own topological order
/// so a corrupted parent list is detected instead of silently mis-ordered.
///
/// A graph is single-threaded: build, run backward, read gradients, discard.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return input(std::move(value), false); }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  /// Adjoint of v from the last backward(); ContractError if v got none.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse pass from a 1x1 root. Returns adjoints of every reachable input
  /// node that requires a gradient.
  GradientMap backward(Var root);

  /// Overwrites a node's parent list. Exists so tests can build malformed
  /// graphs (cycles); never needed by regular code.
  void debug_set_parents(NodeId node, std::vector<NodeId> parents);

  // Used by the op builders.
  using Aux = NodeAux;
  Var push(OpKind kind, std::vector<NodeId> parents, Matrix value, Aux aux = {});

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> parents;
    Matrix value;
    std::optional<Matrix> adjoint;
    bool requires_grad = false;
    Aux aux;
  };

  std::vector<NodeId> topological_order(NodeId root) const;
  void propagate(NodeId id);
  void accumulate(NodeId id, const Matrix& delta);

  std::vector<Node> nodes_;
};

// Differentiable builders. All operands must belong to the same graph.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var l2_normalize_rows(Var a);
/// Row-wise softmax of a / temperature.
Var softmax_rows(Var a, double temperature);
/// Elementwise natural log; every entry must be positive.
Var log(Var a);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Sum of weights (.) a with a constant weight matrix, 1x1.
Var weighted_sum(Var a, Matrix weights);
Var scale(Var a, double factor);
Var add(Var a, Var b);
Var add_row(Var a, Var row);
Var tanh(Var a);
/// a (.) mask with a constant mask.
Var dropout_mask_apply(Var a, Matrix mask);
/// NxN -> Nx(N-1), removing entry (i, i) from each row.
Var drop_diagonal(Var a);

}  // namespace dlab::ad
