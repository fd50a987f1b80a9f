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
#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "distillab/encoder.hpp"
#include "distillab/objectives.hpp"
#include "distillab/rng.hpp"

namespace dlab {

/// Off-diagonal entries of one logit row, in column order.
struct LogitRow {
  std::vector<double> values;
  std::size_t origin = 0;  // row index i in the source matrix
};

/// Sorted cumulative probability of each position and its Group-P group.
struct GroupAssignment {
  std::vector<double> cumulative;   // G per position
  std::vector<std::size_t> group;   // contiguous ids, 0 = most probable interval
};

/// G(j) = sum of softmax(row)_k over every k with row_k >= row_j
/// (temperature 1). Equal logits receive equal G.
std::vector<double> sorted_cumulative(const LogitRow& row);

/// Assigns positions to the intervals (k p, (k+1) p] of their G value. The
/// last interval is the partial (floor(1/p) p, 1] when 1/p is not an integer. Empty
/// intervals are skipped so group ids stay contiguous.
GroupAssignment group_by_cumulative(const LogitRow& row, double p);

/// Permutes values uniformly within each Group-P group (seeded Fisher-Yates).
LogitRow group_p_shuffle(const LogitRow& row, double p, RngStream& rng);

/// Permutes the values holding descending ranks lo..hi (1-based, inclusive;
/// ties broken by position) among their positions.
LogitRow rank_interval_shuffle(const LogitRow& row, std::size_t lo, std::size_t hi,
                               RngStream& rng);

struct NoShuffle {
  friend bool operator==(const NoShuffle&, const NoShuffle&) = default;
};
struct GroupPShuffle {
  double p = 0.1;
  friend bool operator==(const GroupPShuffle&, const GroupPShuffle&) = default;
};
struct RankIntervalShuffle {
  std::size_t lo = 1;
  std::size_t hi = 12;
  friend bool operator==(const RankIntervalShuffle&, const RankIntervalShuffle&) = default;
};
using ShuffleMode = std::variant<NoShuffle, GroupPShuffle, RankIntervalShuffle>;

/// Applies the shuffle to the off-diagonal part of every row; the diagonal is
/// left in place. Row i draws from rng.split(i).
LogitMatrix apply_shuffle(const LogitMatrix& logits, const ShuffleMode& mode, const RngStream& rng);

struct TeacherEnsemble {
  std::vector<EncoderParams> members;

  std::size_t size() const noexcept { return members.size(); }
  /// EnsembleError if empty or members disagree on output width / vocab.
  void validate() const;
};

/// Similarity logits from one teacher pass. Without dropout the projection
/// head runs deterministically and both views coincide; with dropout two
/// independent views are drawn from `seed`.
LogitMatrix teacher_logits(const EncoderParams& teacher, const SentenceBatch& batch,
                           bool dropout = false, std::uint64_t seed = 0);

/// Mean of the members' raw similarity logits, reduced in member order.
/// `threads` > 1 fans member inference out; the result is bit-identical.
LogitMatrix average_teachers(const TeacherEnsemble& ensemble, const SentenceBatch& batch,
                             std::size_t threads = 1, bool dropout = false,
                             std::uint64_t seed = 0);

/// Per-member logits for one batch.
std::vector<LogitMatrix> member_logits(const TeacherEnsemble& ensemble, const SentenceBatch& batch,
                                       std::size_t threads = 1, bool dropout = false,
                                       std::uint64_t seed = 0);

// Logit dump: "DLGT", u32 version, u64 N, u64 M, u64 batch id, then M
// row-major NxN little-endian f64 blocks.

struct LogitDump {
  std::uint64_t batch_id = 0;
  std::vector<Matrix> members;
};

void write_logit_dump(std::ostream& out, const LogitDump& dump);
LogitDump read_logit_dump(std::istream& in);

}  // namespace dlab
