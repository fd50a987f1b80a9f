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

#include "distillab/autodiff.hpp"

#include <cmath>
#include <string>

#include "distillab/error.hpp"

namespace dlab::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::row_normalize: return "row-normalize";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::scale: return "scale";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add-row";
    case OpKind::tanh: return "tanh";
    case OpKind::dropout_mask_apply: return "dropout-mask-apply";
    case OpKind::drop_diagonal: return "drop-diagonal";
  }
  return "?";
}

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::input(Matrix value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("graph input contains non-finite values");
  nodes_.push_back(Node{OpKind::input, {}, std::move(value), std::nullopt, requires_grad, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(OpKind kind, std::vector<NodeId> parents, Matrix value, Aux aux) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name(kind));
  }
  bool needs = false;
  for (NodeId p : parents) needs = needs || nodes_.at(p).requires_grad;
  nodes_.push_back(Node{kind, std::move(parents), std::move(value), std::nullopt, needs,
                        std::move(aux)});
  return Var{this, nodes_.size() - 1};
}

const Matrix& Graph::grad(Var v) const {
  const auto& node = nodes_.at(v.id);
  if (!node.adjoint) {
    throw ContractError("node " + std::to_string(v.id) + " has no gradient; run backward first");
  }
  return *node.adjoint;
}

void Graph::debug_set_parents(NodeId node, std::vector<NodeId> parents) {
  nodes_.at(node).parents = std::move(parents);
}

std::vector<NodeId> Graph::topological_order(NodeId root) const {
  enum : char { unvisited, active, done };
  std::vector<char> state(nodes_.size(), unvisited);
  std::vector<NodeId> order;
  // Iterative DFS; each frame remembers how many parents it has expanded.
  std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
  state[root] = active;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const auto& parents = nodes_[id].parents;
    if (next < parents.size()) {
      const NodeId p = parents[next++];
      if (p >= nodes_.size()) throw ContractError("dangling parent reference");
      if (state[p] == active) {
        throw ContractError("compute graph contains a cycle through node " + std::to_string(p));
      }
      if (state[p] == unvisited) {
        state[p] = active;
        stack.emplace_back(p, 0);
      }
    } else {
      state[id] = done;
      order.push_back(id);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

GradientMap Graph::backward(Var root) {
  if (root.graph != this) throw ContractError("backward root belongs to another graph");
  const Matrix& rv = nodes_.at(root.id).value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ContractError("backward root must be scalar, got " + rv.shape_string());
  }
  const auto order = topological_order(root.id);
  for (auto& node : nodes_) node.adjoint.reset();
  for (NodeId id : order) {
    if (nodes_[id].requires_grad) {
      nodes_[id].adjoint = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
  }
  if (!nodes_[root.id].requires_grad) return {};
  (*nodes_[root.id].adjoint)(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (nodes_[*it].requires_grad) propagate(*it);
  }
  GradientMap grads;
  for (NodeId id : order) {
    if (nodes_[id].kind == OpKind::input && nodes_[id].requires_grad) {
      grads.emplace(id, *nodes_[id].adjoint);
    }
  }
  return grads;
}

void Graph::accumulate(NodeId id, const Matrix& delta) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  auto dst = node.adjoint->values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::propagate(NodeId id) {
  // Copies keep references valid while accumulate() touches other nodes.
  const Node& node = nodes_[id];
  const Matrix& g = *node.adjoint;
  const auto& ps = node.parents;
  auto parent_value = [&](std::size_t k) -> const Matrix& { return nodes_[ps[k]].value; };
  auto parent_needs = [&](std::size_t k) { return nodes_[ps[k]].requires_grad; };

  switch (node.kind) {
    case OpKind::input:
      return;
    case OpKind::matmul: {
      if (parent_needs(0)) accumulate(ps[0], matmul_nt(g, parent_value(1)));
      if (parent_needs(1)) accumulate(ps[1], matmul_tn(parent_value(0), g));
      return;
    }
    case OpKind::transpose:
      accumulate(ps[0], dlab::transpose(g));
      return;
    case OpKind::row_normalize: {
      const Matrix& x = parent_value(0);
      const Matrix& y = node.value;
      Matrix dx(x.rows(), x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double norm = std::sqrt(dot(x.row(r), x.row(r)));
        const double proj = dot(y.row(r), g.row(r));
        for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = (g(r, c) - y(r, c) * proj) / norm;
      }
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::softmax: {
      const Matrix& y = node.value;
      const double tau = node.aux.scalar;
      Matrix dx(y.rows(), y.cols());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double inner = dot(y.row(r), g.row(r));
        for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - inner) / tau;
      }
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::log: {
      const Matrix& x = parent_value(0);
      Matrix dx(x.rows(), x.cols());
      for (std::size_t i = 0; i < dx.size(); ++i) dx.values()[i] = g.values()[i] / x.values()[i];
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::sum: {
      const Matrix& x = parent_value(0);
      const double gs = g(0, 0);
      Matrix dx(x.rows(), x.cols(), gs);
      if (node.aux.tensor) {
        auto w = node.aux.tensor->values();
        for (std::size_t i = 0; i < dx.size(); ++i) dx.values()[i] = gs * w[i];
      }
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::scale:
      accumulate(ps[0], dlab::scale(g, node.aux.scalar));
      return;
    case OpKind::add:
      accumulate(ps[0], g);
      accumulate(ps[1], g);
      return;
    case OpKind::add_row: {
      accumulate(ps[0], g);
      if (parent_needs(1)) {
        Matrix db(1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) db(0, c) += g(r, c);
        accumulate(ps[1], db);
      }
      return;
    }
    case OpKind::tanh: {
      const Matrix& y = node.value;
      Matrix dx(y.rows(), y.cols());
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double yi = y.values()[i];
        dx.values()[i] = g.values()[i] * (1.0 - yi * yi);
      }
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::dropout_mask_apply: {
      Matrix dx = g;
      auto m = node.aux.tensor->values();
      for (std::size_t i = 0; i < dx.size(); ++i) dx.values()[i] *= m[i];
      accumulate(ps[0], dx);
      return;
    }
    case OpKind::drop_diagonal: {
      const std::size_t n = g.rows();
      Matrix dx(n, n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0, k = 0; c < n; ++c) {
          if (c == r) continue;
          dx(r, c) = g(r, k++);
        }
      }
      accumulate(ps[0], dx);
      return;
    }
  }
}

namespace {

Graph& graph_of(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractError("operands belong to different graphs");
  }
  return *a.graph;
}

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractError("operand is not attached to a graph");
  return *a.graph;
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.push(OpKind::matmul, {a.id, b.id}, dlab::matmul(a.value(), b.value()));
}

Var transpose(Var a) {
  return graph_of(a).push(OpKind::transpose, {a.id}, dlab::transpose(a.value()));
}

Var l2_normalize_rows(Var a) {
  return graph_of(a).push(OpKind::row_normalize, {a.id}, dlab::l2_normalize_rows(a.value()));
}

Var softmax_rows(Var a, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax temperature must be positive, got " +
                         std::to_string(temperature));
  }
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto p = dlab::softmax(x.row(r), temperature);
    std::copy(p.begin(), p.end(), y.row(r).begin());
  }
  return graph_of(a).push(OpKind::softmax, {a.id}, std::move(y), {std::nullopt, temperature});
}

Var log(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.values()[i];
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
    y.values()[i] = std::log(v);
  }
  return graph_of(a).push(OpKind::log, {a.id}, std::move(y));
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return graph_of(a).push(OpKind::sum, {a.id}, Matrix(1, 1, s));
}

Var weighted_sum(Var a, Matrix weights) {
  if (!weights.same_shape(a.value())) {
    throw ShapeError("weighted_sum weights " + weights.shape_string() + " vs operand " +
                     a.value().shape_string());
  }
  double s = 0.0;
  auto x = a.value().values();
  auto w = weights.values();
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return graph_of(a).push(OpKind::sum, {a.id}, Matrix(1, 1, s), {std::move(weights), 0.0});
}

Var scale(Var a, double factor) {
  return graph_of(a).push(OpKind::scale, {a.id}, dlab::scale(a.value(), factor),
                          {std::nullopt, factor});
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  return g.push(OpKind::add, {a.id, b.id}, dlab::add(a.value(), b.value()));
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  const Matrix& x = a.value();
  const Matrix& b = row.value();
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw ShapeError("add_row expects a 1x" + std::to_string(x.cols()) + " row, got " +
                     b.shape_string());
  }
  Matrix y = x;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
  return g.push(OpKind::add_row, {a.id, row.id}, std::move(y));
}

Var tanh(Var a) {
  Matrix y = a.value();
  for (double& v : y.values()) v = std::tanh(v);
  return graph_of(a).push(OpKind::tanh, {a.id}, std::move(y));
}

Var dropout_mask_apply(Var a, Matrix mask) {
  if (!mask.same_shape(a.value())) {
    throw ShapeError("dropout mask " + mask.shape_string() + " vs operand " +
                     a.value().shape_string());
  }
  Matrix y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] *= mask.values()[i];
  return graph_of(a).push(OpKind::dropout_mask_apply, {a.id}, std::move(y),
                          {std::move(mask), 0.0});
}

Var drop_diagonal(Var a) {
  const Matrix& x = a.value();
  if (x.rows() != x.cols() || x.rows() < 2) {
    throw ShapeError("drop_diagonal needs a square matrix with N >= 2, got " + x.shape_string());
  }
  const std::size_t n = x.rows();
  Matrix y(n, n - 1);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0, k = 0; c < n; ++c) {
      if (c == r) continue;
      y(r, k++) = x(r, c);
    }
  }
  return graph_of(a).push(OpKind::drop_diagonal, {a.id}, std::move(y));
}

}  // namespace dlab::ad
