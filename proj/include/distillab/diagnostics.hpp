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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distillab/data.hpp"
#include "distillab/encoder.hpp"
#include "distillab/logit_transform.hpp"
#include "distillab/objectives.hpp"

namespace dlab {

struct GaussianStats {
  double mean = 0.0;
  double std = 1.0;
  std::size_t n = 0;
};

/// Sample mean and (n-1)-normalized standard deviation. DiagnosticError for
/// fewer than two samples or a spread below 1e-12 of max(1, |mean|).
GaussianStats fit_gaussian(std::span<const double> samples);

/// KL(N(a) || N(b)) in nats.
double gaussian_kl(const GaussianStats& a, const GaussianStats& b);

/// Entropy of a Gaussian with the given standard deviation, in nats.
double differential_entropy(double std);

/// Discrete KL between 64-bin histograms over the pooled range, add-one smoothed.
double histogram_kl(std::span<const double> a, std::span<const double> b, std::size_t bins = 64);

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. DiagnosticError if
/// either sequence is constant.
double spearman(std::span<const double> x, std::span<const double> y);

enum class CurveKind { in_batch, test_pairs };

/// Every i < j in-batch cosine, sorted descending (evaluation embeddings).
std::vector<double> sharpness_curve(const EncoderParams& model, const SentenceBatch& batch);
/// One cosine per given pair, sorted descending.
std::vector<double> sharpness_curve(const EncoderParams& model, const std::vector<ScoredPair>& pairs);

/// Eval-mode cosine of each pair.
std::vector<double> pair_similarities(const EncoderParams& model, const std::vector<ScoredPair>& pairs);

struct OrderStats {
  GaussianStats first_train;   // per-sentence mean over embedding dims
  GaussianStats first_test;
  GaussianStats second_train;  // in-batch cosine logits
  GaussianStats second_test;   // test-pair cosine logits
};

OrderStats first_vs_second_order_stats(const EncoderParams& model,
                                       const std::vector<SentenceBatch>& train_batches,
                                       const std::vector<ScoredPair>& test_pairs);

/// Average standard deviation across ensemble members of the first-order
/// variable (per sentence) and of the second-order logits (per pair).
struct TeacherSpread {
  double first_order_std = 0.0;
  double second_order_std = 0.0;
};
TeacherSpread cross_teacher_spread(const TeacherEnsemble& ensemble,
                                   const std::vector<SentenceBatch>& batches);

/// For each batch row and ordered teacher pair (a, b), Spearman between the
/// two teachers' logits on teacher a's top-k off-diagonal positions; averaged
/// over rows, pairs and batches. Rows where either side is constant are skipped.
double cross_teacher_spearman(const TeacherEnsemble& ensemble,
                              const std::vector<SentenceBatch>& batches, std::size_t top_k);
/// Same statistic over precomputed per-member logits (e.g. read from dumps).
double cross_teacher_spearman(const std::vector<LogitDump>& dumps, std::size_t top_k);

double sts_spearman(const EncoderParams& model, const std::vector<ScoredPair>& pairs);

/// Averages the members' eval-mode cosines per pair, then correlates with gold.
double ensemble_eval(const TeacherEnsemble& teachers, const std::vector<ScoredPair>& pairs);

struct CorrelationReport {
  std::optional<double> self_teacher;
  std::optional<double> other_teachers;
  std::optional<double> other_students;
  std::vector<std::string> warnings;
};

/// Spearman between the student's per-pair similarities and each reference
/// model's, averaged within each group. Empty groups are omitted with a warning.
CorrelationReport model_correlation_report(const EncoderParams& student,
                                           const std::vector<EncoderParams>& self_teacher,
                                           const std::vector<EncoderParams>& other_teachers,
                                           const std::vector<EncoderParams>& other_students,
                                           const std::vector<ScoredPair>& dev_pairs);

struct LossGap {
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap() const noexcept { return test_loss - train_loss; }
};

/// Mean distillation loss of the student (deterministic pass) against the
/// unshuffled ensemble-averaged teacher logits on each split.
LossGap loss_gap_report(const EncoderParams& student, const TeacherEnsemble& teachers,
                        const std::vector<SentenceBatch>& train_split,
                        const std::vector<SentenceBatch>& test_split, const DistillConfig& cfg);

struct SharpnessCurve {
  std::string label;
  std::vector<double> logits;  // descending
};

struct ReportRow {
  std::string name;
  std::string split;
  double value = 0.0;
};

struct DiagnosticsReport {
  OrderStats order;
  double kl_first = 0.0;
  double kl_second = 0.0;
  std::vector<std::pair<std::string, double>> differential_entropy;  // variable -> nats
  std::optional<double> cross_teacher_spearman;
  std::vector<std::pair<std::string, LossGap>> loss_gaps;  // method -> losses
  std::vector<SharpnessCurve> curves;

  std::vector<ReportRow> rows() const;
  /// DiagnosticError if any number is non-finite or a curve is not descending.
  void validate() const;
};

/// KL and entropy summary plus in-batch/test sharpness curves for one model.
DiagnosticsReport diagnose_model(const EncoderParams& model,
                                 const std::vector<SentenceBatch>& train_batches,
                                 const std::vector<ScoredPair>& test_pairs);

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);
void write_sharpness_csv(const std::string& path, const std::vector<SharpnessCurve>& curves);

}  // namespace dlab
