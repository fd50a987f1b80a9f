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

#include "distillab/logit_transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "distillab/error.hpp"

namespace dlab {

namespace {

// Positions sorted by descending value; equal values keep position order.
std::vector<std::size_t> descending_order(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

void fisher_yates(std::vector<double>& values, const std::vector<std::size_t>& positions,
                  RngStream& rng) {
  for (std::size_t i = positions.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(values[positions[i - 1]], values[positions[j]]);
  }
}

}  // namespace

std::vector<double> sorted_cumulative(const LogitRow& row) {
  if (row.values.empty()) throw ParameterError("logit row is empty");
  const auto probs = softmax(row.values, 1.0);
  const auto order = descending_order(row.values);
  std::vector<double> g(row.values.size());
  double running = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && row.values[order[end]] == row.values[order[start]]) {
      running += probs[order[end]];
      ++end;
    }
    for (std::size_t k = start; k < end; ++k) g[order[k]] = running;
    start = end;
  }
  return g;
}

GroupAssignment group_by_cumulative(const LogitRow& row, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("p must lie in (0, 1], got " + std::to_string(p));
  GroupAssignment out;
  out.cumulative = sorted_cumulative(row);
  // Slack absorbs rounding in G / p so a value sitting on a boundary stays in
  // the lower (right-closed) interval.
  constexpr double kSlack = 1e-9;
  std::vector<std::size_t> interval(out.cumulative.size());
  for (std::size_t j = 0; j < interval.size(); ++j) {
    const double k = std::ceil(out.cumulative[j] / p - kSlack) - 1.0;
    interval[j] = static_cast<std::size_t>(std::max(k, 0.0));
  }
  std::vector<std::size_t> used = interval;
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  out.group.resize(interval.size());
  for (std::size_t j = 0; j < interval.size(); ++j) {
    out.group[j] = static_cast<std::size_t>(
        std::lower_bound(used.begin(), used.end(), interval[j]) - used.begin());
  }
  return out;
}

LogitRow group_p_shuffle(const LogitRow& row, double p, RngStream& rng) {
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("p must lie in (0, 1], got " + std::to_string(p));
  LogitRow out = row;
  if (row.values.size() < 2) return out;
  const auto assignment = group_by_cumulative(row, p);
  const std::size_t groups = *std::max_element(assignment.group.begin(), assignment.group.end()) + 1;
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t j = 0; j < assignment.group.size(); ++j) members[assignment.group[j]].push_back(j);
  for (const auto& positions : members) fisher_yates(out.values, positions, rng);
  return out;
}

LogitRow rank_interval_shuffle(const LogitRow& row, std::size_t lo, std::size_t hi,
                               RngStream& rng) {
  if (lo < 1 || lo > hi || hi > row.values.size()) {
    throw ParameterError("rank interval [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "] invalid for a row of length " + std::to_string(row.values.size()));
  }
  LogitRow out = row;
  const auto order = descending_order(row.values);
  const std::vector<std::size_t> positions(order.begin() + static_cast<std::ptrdiff_t>(lo - 1),
                                           order.begin() + static_cast<std::ptrdiff_t>(hi));
  fisher_yates(out.values, positions, rng);
  return out;
}

LogitMatrix apply_shuffle(const LogitMatrix& logits, const ShuffleMode& mode, const RngStream& rng) {
  if (std::holds_alternative<NoShuffle>(mode)) return logits;
  const Matrix& t = logits.values;
  Matrix rows = off_diagonal(t);
  std::vector<double> diagonal(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) diagonal[i] = t(i, i);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    LogitRow row{std::vector<double>(rows.row(i).begin(), rows.row(i).end()), i};
    RngStream row_rng = rng.split(i);
    LogitRow shuffled =
        std::visit([&](const auto& m) -> LogitRow {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, GroupPShuffle>) {
            return group_p_shuffle(row, m.p, row_rng);
          } else if constexpr (std::is_same_v<M, RankIntervalShuffle>) {
            return rank_interval_shuffle(row, m.lo, m.hi, row_rng);
          } else {
            return row;
          }
        }, mode);
    std::copy(shuffled.values.begin(), shuffled.values.end(), rows.row(i).begin());
  }
  return {with_diagonal(rows, diagonal), logits.source, logits.member};
}

void TeacherEnsemble::validate() const {
  if (members.empty()) throw EnsembleError("teacher ensemble is empty");
  const auto& first = members.front();
  for (std::size_t m = 0; m < members.size(); ++m) {
    members[m].validate();
    if (members[m].dims().output != first.dims().output || members[m].vocab() != first.vocab()) {
      throw EnsembleError("teacher " + std::to_string(m) + " has output width " +
                          std::to_string(members[m].dims().output) + " and vocab " +
                          std::to_string(members[m].vocab()) + "; teacher 0 has " +
                          std::to_string(first.dims().output) + " and " +
                          std::to_string(first.vocab()));
    }
  }
}

LogitMatrix teacher_logits(const EncoderParams& teacher, const SentenceBatch& batch, bool dropout,
                           std::uint64_t seed) {
  if (dropout) {
    const auto [v1, v2] = encode_pair(teacher, batch, seed);
    return similarity_logits(v1, v2, LogitSource::teacher);
  }
  const auto view = encode(teacher, batch, EncodeMode::deterministic_head);
  return similarity_logits(view, view, LogitSource::teacher);
}

std::vector<LogitMatrix> member_logits(const TeacherEnsemble& ensemble, const SentenceBatch& batch,
                                       std::size_t threads, bool dropout, std::uint64_t seed) {
  ensemble.validate();
  const std::size_t m_count = ensemble.size();
  std::vector<LogitMatrix> out(m_count);
  auto run_member = [&](std::size_t m) {
    out[m] = teacher_logits(ensemble.members[m], batch, dropout, derive_seed(seed, m));
    out[m].member = m;
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), m_count);
  if (workers <= 1) {
    for (std::size_t m = 0; m < m_count; ++m) run_member(m);
    return out;
  }
  std::vector<std::exception_ptr> errors(m_count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t m = w; m < m_count; m += workers) {
          try {
            run_member(m);
          } catch (...) {
            errors[m] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

LogitMatrix average_teachers(const TeacherEnsemble& ensemble, const SentenceBatch& batch,
                             std::size_t threads, bool dropout, std::uint64_t seed) {
  const auto logits = member_logits(ensemble, batch, threads, dropout, seed);
  Matrix total = logits.front().values;
  for (std::size_t m = 1; m < logits.size(); ++m) {
    auto dst = total.values();
    auto src = logits[m].values.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double count = static_cast<double>(logits.size());
  for (double& v : total.values()) v /= count;
  return {std::move(total), LogitSource::averaged, 0};
}

namespace {

constexpr std::uint32_t kDumpVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IoError("truncated logit dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_logit_dump(std::ostream& out, const LogitDump& dump) {
  if (dump.members.empty()) throw EnsembleError("logit dump needs at least one member");
  const std::size_t n = dump.members.front().rows();
  for (const auto& m : dump.members) {
    if (m.rows() != n || m.cols() != n) throw ShapeError("logit dump members must all be NxN");
  }
  out.write("DLGT", 4);
  const std::uint32_t version = kDumpVersion;
  unsigned char vb[4];
  for (int i = 0; i < 4; ++i) vb[i] = static_cast<unsigned char>(version >> (8 * i));
  out.write(reinterpret_cast<const char*>(vb), 4);
  put_u64(out, n);
  put_u64(out, dump.members.size());
  put_u64(out, dump.batch_id);
  for (const auto& m : dump.members) {
    for (double v : m.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
  if (!out) throw IoError("failed writing logit dump");
}

LogitDump read_logit_dump(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DLGT", 4) != 0) throw IoError("bad logit dump magic");
  unsigned char vb[4];
  in.read(reinterpret_cast<char*>(vb), 4);
  if (!in) throw IoError("truncated logit dump");
  const std::uint32_t version = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (static_cast<std::uint32_t>(vb[3]) << 24);
  if (version != kDumpVersion) throw IoError("unsupported logit dump version");
  const std::uint64_t n = get_u64(in);
  const std::uint64_t m_count = get_u64(in);
  LogitDump dump;
  dump.batch_id = get_u64(in);
  if (n == 0 || m_count == 0 || n > (1u << 16) || m_count > (1u << 16)) {
    throw IoError("implausible logit dump header");
  }
  for (std::uint64_t m = 0; m < m_count; ++m) {
    Matrix mat(n, n);
    for (double& v : mat.values()) {
      const std::uint64_t bits = get_u64(in);
      std::memcpy(&v, &bits, 8);
    }
    dump.members.push_back(std::move(mat));
  }
  return dump;
}

}  // namespace dlab
