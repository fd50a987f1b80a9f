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

#include "distillab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>

#include "distillab/error.hpp"

namespace dlab {

GaussianStats fit_gaussian(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw DiagnosticError("need at least two samples to fit a Gaussian");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / static_cast<double>(n - 1));
  // Spread at rounding level counts as zero.
  if (!(std > 1e-12 * std::max(1.0, std::abs(mean)))) {
    throw DiagnosticError("degenerate population: standard deviation is zero");
  }
  return {mean, std, n};
}

double gaussian_kl(const GaussianStats& a, const GaussianStats& b) {
  if (!(a.std > 0.0) || !(b.std > 0.0)) {
    throw ParameterError("gaussian_kl needs positive standard deviations");
  }
  const double diff = a.mean - b.mean;
  return std::log(b.std / a.std) + (a.std * a.std + diff * diff) / (2.0 * b.std * b.std) - 0.5;
}

double differential_entropy(double std) {
  if (!(std > 0.0)) throw ParameterError("differential entropy needs a positive std");
  return std::log(std) + 0.5 * std::log(2.0 * M_PI * M_E);
}

double histogram_kl(std::span<const double> a, std::span<const double> b, std::size_t bins) {
  if (a.empty() || b.empty() || bins == 0) throw ParameterError("histogram_kl needs data and bins");
  double lo = a[0], hi = a[0];
  for (auto s : {a, b})
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  auto histogram = [&](std::span<const double> s) {
    std::vector<double> h(bins, 1.0);
    for (double v : s) {
      const auto k = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
      h[k] += 1.0;
    }
    const double total = std::accumulate(h.begin(), h.end(), 0.0);
    for (double& x : h) x /= total;
    return h;
  };
  const auto pa = histogram(a);
  const auto pb = histogram(b);
  double kl = 0.0;
  for (std::size_t k = 0; k < bins; ++k) kl += pa[k] * std::log(pa[k] / pb[k]);
  return kl;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);  // mean of start+1 .. end
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

namespace {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> try_spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

Matrix eval_embeddings(const EncoderParams& model, const SentenceBatch& batch) {
  return encode(model, batch, EncodeMode::eval).view;
}

SentenceBatch pair_side(const std::vector<ScoredPair>& pairs, bool first) {
  SentenceBatch b;
  b.sentences.reserve(pairs.size());
  for (const auto& p : pairs) b.sentences.push_back(first ? p.a : p.b);
  return b;
}

std::vector<double> upper_triangle(const Matrix& square) {
  std::vector<double> out;
  out.reserve(square.rows() * (square.rows() - 1) / 2);
  for (std::size_t i = 0; i < square.rows(); ++i)
    for (std::size_t j = i + 1; j < square.cols(); ++j) out.push_back(square(i, j));
  return out;
}

std::vector<double> row_means(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    out[r] = s / static_cast<double>(m.cols());
  }
  return out;
}

void sort_descending(std::vector<double>& v) { std::sort(v.begin(), v.end(), std::greater<>()); }

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman inputs differ in length");
  if (x.size() < 2) throw DiagnosticError("spearman needs at least two observations");
  const auto r = try_spearman(x, y);
  if (!r) throw DiagnosticError("spearman correlation undefined for constant scores");
  return *r;
}

std::vector<double> pair_similarities(const EncoderParams& model, const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) throw InputError("no pairs to score");
  const Matrix ea = eval_embeddings(model, pair_side(pairs, true));
  const Matrix eb = eval_embeddings(model, pair_side(pairs, false));
  std::vector<double> sims(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) sims[i] = dot(ea.row(i), eb.row(i));
  return sims;
}

std::vector<double> sharpness_curve(const EncoderParams& model, const SentenceBatch& batch) {
  if (batch.size() < 2) throw InputError("sharpness curve needs at least two sentences");
  const Matrix e = eval_embeddings(model, batch);
  auto curve = upper_triangle(matmul_nt(e, e));
  sort_descending(curve);
  return curve;
}

std::vector<double> sharpness_curve(const EncoderParams& model, const std::vector<ScoredPair>& pairs) {
  if (pairs.size() < 2) throw InputError("sharpness curve needs at least two pairs");
  auto curve = pair_similarities(model, pairs);
  sort_descending(curve);
  return curve;
}

OrderStats first_vs_second_order_stats(const EncoderParams& model,
                                       const std::vector<SentenceBatch>& train_batches,
                                       const std::vector<ScoredPair>& test_pairs) {
  if (train_batches.size() < 2) throw InputError("need at least two training batches");
  if (test_pairs.size() < 2) throw InputError("need at least two test pairs");
  std::vector<double> first_train, second_train;
  for (const auto& batch : train_batches) {
    const Matrix e = eval_embeddings(model, batch);
    const auto means = row_means(e);
    first_train.insert(first_train.end(), means.begin(), means.end());
    const auto logits = upper_triangle(matmul_nt(e, e));
    second_train.insert(second_train.end(), logits.begin(), logits.end());
  }
  std::vector<double> first_test;
  for (bool side : {true, false}) {
    const auto means = row_means(eval_embeddings(model, pair_side(test_pairs, side)));
    first_test.insert(first_test.end(), means.begin(), means.end());
  }
  const auto second_test = pair_similarities(model, test_pairs);
  return {fit_gaussian(first_train), fit_gaussian(first_test), fit_gaussian(second_train),
          fit_gaussian(second_test)};
}

TeacherSpread cross_teacher_spread(const TeacherEnsemble& ensemble,
                                   const std::vector<SentenceBatch>& batches) {
  ensemble.validate();
  if (ensemble.size() < 2) throw InputError("teacher spread needs at least two teachers");
  if (batches.empty()) throw InputError("teacher spread needs at least one batch");
  const std::size_t m_count = ensemble.size();
  auto sample_std = [&](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double v : xs) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
  };
  double first_total = 0.0, second_total = 0.0;
  std::size_t first_count = 0, second_count = 0;
  for (const auto& batch : batches) {
    std::vector<std::vector<double>> firsts, seconds;
    for (const auto& member : ensemble.members) {
      const Matrix e = eval_embeddings(member, batch);
      firsts.push_back(row_means(e));
      seconds.push_back(upper_triangle(matmul_nt(e, e)));
    }
    std::vector<double> across(m_count);
    for (std::size_t i = 0; i < firsts[0].size(); ++i) {
      for (std::size_t m = 0; m < m_count; ++m) across[m] = firsts[m][i];
      first_total += sample_std(across);
      ++first_count;
    }
    for (std::size_t i = 0; i < seconds[0].size(); ++i) {
      for (std::size_t m = 0; m < m_count; ++m) across[m] = seconds[m][i];
      second_total += sample_std(across);
      ++second_count;
    }
  }
  return {first_total / static_cast<double>(first_count),
          second_total / static_cast<double>(second_count)};
}

namespace {

// Core of cross-teacher agreement over per-member logits of each batch.
double cross_teacher_spearman_impl(const std::vector<std::vector<Matrix>>& per_batch,
                                   std::size_t top_k) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& members : per_batch) {
    if (members.size() < 2) throw InputError("cross-teacher agreement needs at least two teachers");
    const std::size_t n = members.front().rows();
    if (top_k < 2 || top_k > n - 1) {
      throw ParameterError("top-k must lie in [2, N-1] = [2, " + std::to_string(n - 1) +
                           "], got " + std::to_string(top_k));
    }
    std::vector<Matrix> rows;
    for (const auto& m : members) rows.push_back(off_diagonal(m));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < rows.size(); ++a) {
        const auto ra = rows[a].row(i);
        std::vector<std::size_t> order(ra.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return ra[x] > ra[y]; });
        order.resize(top_k);
        std::vector<double> xa(top_k), xb(top_k);
        for (std::size_t b = 0; b < rows.size(); ++b) {
          if (b == a) continue;
          const auto rb = rows[b].row(i);
          for (std::size_t k = 0; k < top_k; ++k) {
            xa[k] = ra[order[k]];
            xb[k] = rb[order[k]];
          }
          if (const auto r = try_spearman(xa, xb)) {
            total += *r;
            ++count;
          }
        }
      }
    }
  }
  if (count == 0) throw DiagnosticError("every teacher row was constant on its top-k positions");
  return total / static_cast<double>(count);
}

}  // namespace

double cross_teacher_spearman(const TeacherEnsemble& ensemble,
                              const std::vector<SentenceBatch>& batches, std::size_t top_k) {
  ensemble.validate();
  if (ensemble.size() < 2) throw InputError("cross-teacher agreement needs at least two teachers");
  std::vector<std::vector<Matrix>> per_batch;
  for (const auto& batch : batches) {
    std::vector<Matrix> members;
    for (auto& l : member_logits(ensemble, batch)) members.push_back(std::move(l.values));
    per_batch.push_back(std::move(members));
  }
  return cross_teacher_spearman_impl(per_batch, top_k);
}

double cross_teacher_spearman(const std::vector<LogitDump>& dumps, std::size_t top_k) {
  std::vector<std::vector<Matrix>> per_batch;
  for (const auto& d : dumps) per_batch.push_back(d.members);
  return cross_teacher_spearman_impl(per_batch, top_k);
}

double sts_spearman(const EncoderParams& model, const std::vector<ScoredPair>& pairs) {
  if (pairs.size() < 3) throw InputError("STS evaluation needs at least three pairs");
  const auto sims = pair_similarities(model, pairs);
  std::vector<double> gold(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) gold[i] = pairs[i].gold;
  return spearman(sims, gold);
}

double ensemble_eval(const TeacherEnsemble& teachers, const std::vector<ScoredPair>& pairs) {
  teachers.validate();
  if (pairs.size() < 3) throw InputError("STS evaluation needs at least three pairs");
  std::vector<double> mean(pairs.size(), 0.0);
  for (const auto& member : teachers.members) {
    const auto sims = pair_similarities(member, pairs);
    for (std::size_t i = 0; i < sims.size(); ++i) mean[i] += sims[i];
  }
  for (double& v : mean) v /= static_cast<double>(teachers.size());
  std::vector<double> gold(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) gold[i] = pairs[i].gold;
  return spearman(mean, gold);
}

CorrelationReport model_correlation_report(const EncoderParams& student,
                                           const std::vector<EncoderParams>& self_teacher,
                                           const std::vector<EncoderParams>& other_teachers,
                                           const std::vector<EncoderParams>& other_students,
                                           const std::vector<ScoredPair>& dev_pairs) {
  CorrelationReport report;
  const auto mine = pair_similarities(student, dev_pairs);
  auto group_mean = [&](const std::vector<EncoderParams>& group, const char* name) -> std::optional<double> {
    if (group.empty()) {
      report.warnings.push_back(std::string("group ") + name + " is empty; omitted");
      return std::nullopt;
    }
    double total = 0.0;
    for (const auto& model : group) {
      if (model.dims().hidden != student.dims().hidden) {
        throw EnsembleError(std::string("model in group ") + name + " has a different embedding width");
      }
      total += spearman(mine, pair_similarities(model, dev_pairs));
    }
    return total / static_cast<double>(group.size());
  };
  report.self_teacher = group_mean(self_teacher, "self-teacher");
  report.other_teachers = group_mean(other_teachers, "other-teachers");
  report.other_students = group_mean(other_students, "other-students");
  return report;
}

LossGap loss_gap_report(const EncoderParams& student, const TeacherEnsemble& teachers,
                        const std::vector<SentenceBatch>& train_split,
                        const std::vector<SentenceBatch>& test_split, const DistillConfig& cfg) {
  if (train_split.empty() || test_split.empty()) throw InputError("loss gap needs non-empty splits");
  teachers.validate();
  auto mean_loss = [&](const std::vector<SentenceBatch>& split) {
    double total = 0.0;
    for (const auto& batch : split) {
      const auto s = teacher_logits(student, batch);
      const auto t = average_teachers(teachers, batch);
      total += distill_loss(s, t, cfg.tau_s, cfg.tau_t);
    }
    return total / static_cast<double>(split.size());
  };
  return {mean_loss(train_split), mean_loss(test_split)};
}

DiagnosticsReport diagnose_model(const EncoderParams& model,
                                 const std::vector<SentenceBatch>& train_batches,
                                 const std::vector<ScoredPair>& test_pairs) {
  DiagnosticsReport report;
  report.order = first_vs_second_order_stats(model, train_batches, test_pairs);
  report.kl_first = gaussian_kl(report.order.first_train, report.order.first_test);
  report.kl_second = gaussian_kl(report.order.second_train, report.order.second_test);
  report.curves.push_back({"in-batch", sharpness_curve(model, train_batches.front())});
  report.curves.push_back({"test-pairs", sharpness_curve(model, test_pairs)});
  return report;
}

std::vector<ReportRow> DiagnosticsReport::rows() const {
  std::vector<ReportRow> out;
  auto stats = [&](const char* name, const GaussianStats& s, const char* split) {
    out.push_back({std::string(name) + "_mean", split, s.mean});
    out.push_back({std::string(name) + "_std", split, s.std});
  };
  stats("first_order", order.first_train, "train");
  stats("first_order", order.first_test, "test");
  stats("second_order", order.second_train, "train");
  stats("second_order", order.second_test, "test");
  out.push_back({"kl_first_order", "train_vs_test", kl_first});
  out.push_back({"kl_second_order", "train_vs_test", kl_second});
  for (const auto& [variable, h] : differential_entropy) {
    out.push_back({"differential_entropy_" + variable, "teachers", h});
  }
  if (cross_teacher_spearman) out.push_back({"cross_teacher_spearman", "train", *cross_teacher_spearman});
  for (const auto& [method, gap] : loss_gaps) {
    out.push_back({"distill_loss_" + method, "train", gap.train_loss});
    out.push_back({"distill_loss_" + method, "test", gap.test_loss});
  }
  return out;
}

void DiagnosticsReport::validate() const {
  for (const auto& row : rows()) {
    if (!std::isfinite(row.value)) throw DiagnosticError("report value " + row.name + " is not finite");
  }
  for (const auto& curve : curves) {
    if (!std::is_sorted(curve.logits.begin(), curve.logits.end(), std::greater<>())) {
      throw DiagnosticError("sharpness curve " + curve.label + " is not descending");
    }
  }
}

namespace {

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "name,split,value\n";
  for (const auto& r : rows) out << r.name << ',' << r.split << ',' << number(r.value) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void write_sharpness_csv(const std::string& path, const std::vector<SharpnessCurve>& curves) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "rank,logit,label\n";
  for (const auto& c : curves)
    for (std::size_t r = 0; r < c.logits.size(); ++r) out << r + 1 << ',' << number(c.logits[r]) << ',' << c.label << '\n';
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace dlab
