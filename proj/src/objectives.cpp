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

#include "distillab/objectives.hpp"

#include <cmath>
#include <string>

#include "distillab/error.hpp"

namespace dlab {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw ParameterError(std::string(name) + " must be positive, got " + std::to_string(v));
}

}  // namespace

void DistillConfig::validate() const {
  require_positive(tau, "tau");
  require_positive(tau_s, "tau_s");
  require_positive(tau_t, "tau_t");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("lambda must be a finite nonnegative number");
  }
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("p must lie in (0, 1], got " + std::to_string(p));
  if (batch_size < 2) throw ParameterError("batch size must be at least 2");
  if (rounds < 1) throw ParameterError("rounds must be at least 1");
}

LogitMatrix similarity_logits(const EmbeddingBatch& view1, const EmbeddingBatch& view2,
                              LogitSource source) {
  if (!view1.view.same_shape(view2.view)) {
    throw ShapeError("views differ in shape: " + view1.view.shape_string() + " vs " +
                     view2.view.shape_string());
  }
  return {matmul_nt(view1.view, view2.view), source, 0};
}

ad::Var similarity_logits(ad::Var view1, ad::Var view2) {
  if (!view1.value().same_shape(view2.value())) {
    throw ShapeError("views differ in shape: " + view1.value().shape_string() + " vs " +
                     view2.value().shape_string());
  }
  return ad::matmul(view1, ad::transpose(view2));
}

ad::Var contrastive_loss(ad::Var logits, double tau) {
  require_positive(tau, "contrastive temperature");
  const Matrix& l = logits.value();
  if (l.rows() != l.cols()) throw ShapeError("contrastive logits must be square, got " + l.shape_string());
  const std::size_t n = l.rows();
  Matrix weights(n, n);
  for (std::size_t i = 0; i < n; ++i) weights(i, i) = -1.0 / static_cast<double>(n);
  return ad::weighted_sum(ad::log(ad::softmax_rows(logits, tau)), std::move(weights));
}

ad::Var distill_loss(ad::Var student_logits, const Matrix& targets, double tau_s) {
  require_positive(tau_s, "student temperature");
  const Matrix& s = student_logits.value();
  if (s.rows() != s.cols() || s.rows() < 2) {
    throw ShapeError("student logits must be square with N >= 2, got " + s.shape_string());
  }
  if (targets.rows() != s.rows() || targets.cols() != s.rows() - 1) {
    throw ShapeError("teacher targets " + targets.shape_string() + " do not match student logits " +
                     s.shape_string());
  }
  Matrix weights = scale(targets, -1.0 / static_cast<double>(s.rows()));
  return ad::weighted_sum(ad::log(ad::softmax_rows(ad::drop_diagonal(student_logits), tau_s)),
                          std::move(weights));
}

double contrastive_loss(const LogitMatrix& logits, double tau) {
  ad::Graph graph;
  return contrastive_loss(graph.constant(logits.values), tau).value()(0, 0);
}

Matrix off_diagonal(const Matrix& square) {
  if (square.rows() != square.cols() || square.rows() < 2) {
    throw ShapeError("expected a square matrix with N >= 2, got " + square.shape_string());
  }
  const std::size_t n = square.rows();
  Matrix out(n, n - 1);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0, k = 0; c < n; ++c)
      if (c != r) out(r, k++) = square(r, c);
  return out;
}

Matrix with_diagonal(const Matrix& rows, std::span<const double> diagonal) {
  const std::size_t n = rows.rows();
  if (rows.cols() + 1 != n || diagonal.size() != n) {
    throw ShapeError("with_diagonal expects Nx(N-1) rows and N diagonal values");
  }
  Matrix out(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    out(r, r) = diagonal[r];
    for (std::size_t c = 0, k = 0; c < n; ++c)
      if (c != r) out(r, c) = rows(r, k++);
  }
  return out;
}

Matrix teacher_distribution(const Matrix& teacher_logits, double tau_t) {
  require_positive(tau_t, "teacher temperature");
  Matrix q = off_diagonal(teacher_logits);
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const auto p = softmax(q.row(r), tau_t);
    std::copy(p.begin(), p.end(), q.row(r).begin());
  }
  return q;
}

double distill_loss(const LogitMatrix& student, const LogitMatrix& teacher, double tau_s,
                    double tau_t) {
  if (!student.values.same_shape(teacher.values)) {
    throw ShapeError("student logits " + student.values.shape_string() + " vs teacher logits " +
                     teacher.values.shape_string());
  }
  ad::Graph graph;
  return distill_loss(graph.constant(student.values), teacher_distribution(teacher.values, tau_t),
                      tau_s)
      .value()(0, 0);
}

double combined_loss(double cl, double distill, double lambda) {
  if (!std::isfinite(cl) || !std::isfinite(distill) || !std::isfinite(lambda)) {
    throw NumericError("combined loss inputs must be finite");
  }
  if (lambda < 0.0) throw ParameterError("lambda must be nonnegative");
  return cl + lambda * distill;
}

}  // namespace dlab
