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

#include "distillab/autodiff.hpp"
#include "distillab/encoder.hpp"
#include "distillab/matrix.hpp"

namespace dlab {

enum class LogitSource { student, teacher, averaged };

/// Cosine-similarity logits between two views: entry (i, j) compares view-1
/// row i with view-2 row j, so the diagonal holds the positive pairs.
struct LogitMatrix {
  Matrix values;
  LogitSource source = LogitSource::student;
  std::size_t member = 0;  // teacher index when source == teacher

  std::size_t size() const noexcept { return values.rows(); }
  friend bool operator==(const LogitMatrix&, const LogitMatrix&) = default;
};

/// Scalars of the contrastive, distillation and combined objectives.
struct DistillConfig {
  double tau = 0.05;    // contrastive temperature
  double tau_s = 0.02;  // student distillation temperature
  double tau_t = 0.01;  // teacher distillation temperature
  double lambda = 1.0;  // distillation weight
  double p = 0.1;       // Group-P interval width
  std::size_t batch_size = 64;
  std::size_t rounds = 1;

  void validate() const;
};

LogitMatrix similarity_logits(const EmbeddingBatch& view1, const EmbeddingBatch& view2,
                              LogitSource source = LogitSource::student);

/// Mean over rows of -log softmax(row / tau)[i]; the denominator includes the
/// positive (diagonal) term.
double contrastive_loss(const LogitMatrix& logits, double tau);

/// Mean over rows of the cross-entropy between the teacher and student
/// softmaxes taken over the off-diagonal entries of each row.
double distill_loss(const LogitMatrix& student, const LogitMatrix& teacher, double tau_s,
                    double tau_t);

double combined_loss(double cl, double distill, double lambda);

/// Row i of an NxN matrix with entry i removed, as an Nx(N-1) matrix.
Matrix off_diagonal(const Matrix& square);
/// Inverse of off_diagonal; `diagonal` fills the reinserted entries.
Matrix with_diagonal(const Matrix& rows, std::span<const double> diagonal);

/// Teacher target distribution q: softmax(off_diagonal(t) / tau_t) per row.
Matrix teacher_distribution(const Matrix& teacher_logits, double tau_t);

// Differentiable forms used during training.

ad::Var similarity_logits(ad::Var view1, ad::Var view2);
ad::Var contrastive_loss(ad::Var logits, double tau);
/// `targets` is an Nx(N-1) teacher distribution (see teacher_distribution).
ad::Var distill_loss(ad::Var student_logits, const Matrix& targets, double tau_s);

}  // namespace dlab
