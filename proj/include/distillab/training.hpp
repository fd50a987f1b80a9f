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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "distillab/data.hpp"
#include "distillab/encoder.hpp"
#include "distillab/logit_transform.hpp"
#include "distillab/objectives.hpp"

namespace dlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over the five encoder tensors.
class Adam {
 public:
  Adam(const EncoderParams& params, double learning_rate, AdamConfig cfg = {});

  void step(EncoderParams& params, const std::array<Matrix, EncoderParams::kTensorCount>& grads);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  double lr_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::array<Matrix, EncoderParams::kTensorCount> m_;
  std::array<Matrix, EncoderParams::kTensorCount> v_;
};

struct TrainConfig {
  std::optional<std::size_t> steps;  // unset: one epoch with drop-last batching
  double learning_rate = 1e-3;
  std::size_t eval_interval = 125;
  AdamConfig adam;
  DistillConfig distill;
  std::uint64_t seed = 1;
  ShuffleMode shuffle = NoShuffle{};
  std::size_t ensemble_size = 4;
  LayerDims dims;
  double dropout = 0.1;
  bool teacher_dropout = false;  // teacher passes inside distillation
  std::size_t threads = 1;       // teacher fan-out only

  void validate() const;
  /// Number of optimizer steps for a corpus of the given size.
  std::size_t resolved_steps(std::size_t corpus_size) const;
};

struct Checkpoint {
  EncoderParams params;
  std::size_t round = 0;
  double dev_score = 0.0;
  std::size_t step = 0;
};

/// One line of the metrics log. Step 0 carries only the initial dev score.
struct MetricsRow {
  std::size_t step = 0;
  std::optional<double> cl_loss;
  std::optional<double> distill_loss;
  std::optional<double> total_loss;
  std::optional<double> dev_spearman;
};

struct EvalPoint {
  std::size_t step = 0;
  double dev_score = 0.0;
};

struct TrainResult {
  Checkpoint best;
  EncoderParams final_params;
  std::vector<MetricsRow> metrics;
  std::vector<EvalPoint> history;
};

/// Step with the highest dev score; ties go to the earliest step.
std::size_t select_checkpoint(const std::vector<EvalPoint>& history);

/// Contrastive training from a fresh init seeded by cfg.seed.
TrainResult train_teacher(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                          const TrainConfig& cfg);

/// Student trained from a fresh init against the averaged, optionally
/// shuffled, teacher logits. With lambda = 0 the teacher is never consulted
/// and the run matches train_teacher exactly.
TrainResult distill_student(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                            const TeacherEnsemble& teachers, const TrainConfig& cfg);

struct SelfTrainResult {
  /// rounds[r][m]: member m of round r. Round 0 holds the contrastive teachers.
  std::vector<std::vector<TrainResult>> rounds;

  TeacherEnsemble ensemble(std::size_t round) const;
};

/// Seed of ensemble member m in round r.
std::uint64_t member_seed(std::uint64_t seed, std::size_t round, std::size_t member);

/// Round 0 trains cfg.ensemble_size teachers; each later round trains as many
/// students, every one distilled from the whole previous round.
SelfTrainResult self_train(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                           const TrainConfig& cfg, std::size_t rounds);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Encoder checkpoint with round, step and dev-score metadata.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dlab
