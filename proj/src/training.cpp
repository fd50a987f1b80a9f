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

#include "distillab/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "distillab/diagnostics.hpp"
#include "distillab/error.hpp"

namespace dlab {

Adam::Adam(const EncoderParams& params, double learning_rate, AdamConfig cfg)
    : lr_(learning_rate), cfg_(cfg) {
  const auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    m_[k] = Matrix(tensors[k]->rows(), tensors[k]->cols());
    v_[k] = Matrix(tensors[k]->rows(), tensors[k]->cols());
  }
}

void Adam::step(EncoderParams& params, const std::array<Matrix, EncoderParams::kTensorCount>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (!grads[k].same_shape(*tensors[k])) throw ShapeError("gradient shape mismatch in Adam");
    auto w = tensors[k]->values();
    auto g = grads[k].values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  distill.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning rate must be positive");
  }
  if (eval_interval < 1) throw ParameterError("eval interval must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ParameterError("Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
  }
  if (ensemble_size < 1) throw ParameterError("ensemble size must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (dims.token < 1 || dims.hidden < 1 || dims.output < 1) throw ParameterError("layer widths must be positive");
  if (threads < 1) throw ParameterError("threads must be at least 1");
  if (const auto* g = std::get_if<GroupPShuffle>(&shuffle); g && !(g->p > 0.0 && g->p <= 1.0)) {
    throw ParameterError("group-p shuffle needs p in (0, 1]");
  }
  if (const auto* r = std::get_if<RankIntervalShuffle>(&shuffle); r && (r->lo < 1 || r->lo > r->hi)) {
    throw ParameterError("rank interval needs 1 <= lo <= hi");
  }
}

std::size_t TrainConfig::resolved_steps(std::size_t corpus_size) const {
  if (steps) return *steps;
  return corpus_size / distill.batch_size;
}

std::size_t select_checkpoint(const std::vector<EvalPoint>& history) {
  if (history.empty()) throw InputError("checkpoint history is empty");
  std::size_t best = 0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (history[k].dev_score > history[best].dev_score) best = k;
  }
  return history[best].step;
}

namespace {

// Per-step seeds, all derived from the run seed so a run is reproducible
// from (corpus, cfg) alone.
struct StepSeeds {
  std::uint64_t views;
  std::uint64_t teacher;
  RngStream shuffle;
};

StepSeeds step_seeds(std::uint64_t seed, std::size_t step) {
  return {derive_seed(seed, 0x7669657773ULL, step), derive_seed(seed, 0x746561636865ULL, step),
          RngStream(seed).split(StreamTag::shuffle).split(step)};
}

TrainResult run_training(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                         const TeacherEnsemble* teachers, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.size() < 2) throw InputError("training corpus needs at least two sentences");
  if (corpus.size() < cfg.distill.batch_size) {
    throw InputError("corpus of " + std::to_string(corpus.size()) + " sentences is smaller than batch size " +
                     std::to_string(cfg.distill.batch_size));
  }
  const bool use_teacher = teachers != nullptr && cfg.distill.lambda > 0.0;
  if (teachers != nullptr) {
    teachers->validate();
    const auto& t = teachers->members.front();
    if (t.dims().output != cfg.dims.output) {
      throw EnsembleError("teacher output width " + std::to_string(t.dims().output) +
                          " differs from student width " + std::to_string(cfg.dims.output));
    }
    if (t.vocab() != corpus.vocab) throw EnsembleError("teacher vocabulary differs from the corpus");
  }

  const std::size_t total_steps = cfg.resolved_steps(corpus.size());
  const std::size_t per_epoch = corpus.size() / cfg.distill.batch_size;

  TrainResult result;
  EncoderParams params = init_params(corpus.vocab, cfg.dims, cfg.dropout, cfg.seed);
  Adam adam(params, cfg.learning_rate, cfg.adam);

  auto evaluate = [&](std::size_t step, MetricsRow& row) {
    const double score = sts_spearman(params, dev);
    row.dev_spearman = score;
    result.history.push_back({step, score});
    if (result.history.size() == 1 || score > result.best.dev_score) {
      result.best = {params, 0, score, step};
    }
  };

  MetricsRow initial;
  evaluate(0, initial);
  result.metrics.push_back(initial);

  std::vector<SentenceBatch> epoch_batches;
  std::size_t loaded_epoch = static_cast<std::size_t>(-1);
  for (std::size_t step = 1; step <= total_steps; ++step) {
    const std::size_t epoch = (step - 1) / per_epoch;
    if (epoch != loaded_epoch) {
      epoch_batches = batch_iter(corpus, cfg.distill.batch_size, cfg.seed, epoch);
      loaded_epoch = epoch;
    }
    const SentenceBatch& batch = epoch_batches[(step - 1) % per_epoch];
    const StepSeeds seeds = step_seeds(cfg.seed, step);

    MetricsRow row;
    row.step = step;
    try {
      ad::Graph graph;
      const ParamVars vars = bind_params(graph, params);
      const auto [s1, s2] = view_seeds(seeds.views);
      ad::Var v1 = encode_graph(graph, vars, params, batch, EncodeMode::train, s1);
      ad::Var v2 = encode_graph(graph, vars, params, batch, EncodeMode::train, s2);
      ad::Var logits = similarity_logits(v1, v2);
      ad::Var cl = contrastive_loss(logits, cfg.distill.tau);
      ad::Var total = cl;
      row.cl_loss = cl.value()(0, 0);
      row.distill_loss = 0.0;
      if (use_teacher) {
        const LogitMatrix averaged =
            average_teachers(*teachers, batch, cfg.threads, cfg.teacher_dropout, seeds.teacher);
        const LogitMatrix shuffled = apply_shuffle(averaged, cfg.shuffle, seeds.shuffle);
        ad::Var d = distill_loss(logits, teacher_distribution(shuffled.values, cfg.distill.tau_t),
                                 cfg.distill.tau_s);
        row.distill_loss = d.value()(0, 0);
        total = ad::add(cl, ad::scale(d, cfg.distill.lambda));
      }
      row.total_loss = total.value()(0, 0);
      if (!std::isfinite(*row.total_loss)) throw NumericError("non-finite loss");
      graph.backward(total);
      std::array<Matrix, EncoderParams::kTensorCount> grads;
      const auto all = vars.all();
      for (std::size_t k = 0; k < all.size(); ++k) grads[k] = graph.grad(all[k]);
      adam.step(params, grads);
    } catch (const NumericError& e) {
      throw TrainingError(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
    } catch (const DegenerateEmbeddingError& e) {
      throw TrainingError(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (step % cfg.eval_interval == 0 || step == total_steps) evaluate(step, row);
    result.metrics.push_back(row);
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_teacher(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                          const TrainConfig& cfg) {
  return run_training(corpus, dev, nullptr, cfg);
}

TrainResult distill_student(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                            const TeacherEnsemble& teachers, const TrainConfig& cfg) {
  return run_training(corpus, dev, &teachers, cfg);
}

TeacherEnsemble SelfTrainResult::ensemble(std::size_t round) const {
  if (round >= rounds.size()) throw InputError("no round " + std::to_string(round));
  TeacherEnsemble out;
  for (const auto& member : rounds[round]) out.members.push_back(member.best.params);
  return out;
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t round, std::size_t member) {
  return derive_seed(seed, round, member);
}

SelfTrainResult self_train(const Corpus& corpus, const std::vector<ScoredPair>& dev,
                           const TrainConfig& cfg, std::size_t rounds) {
  if (rounds < 1) throw ParameterError("self-training needs at least one round");
  cfg.validate();
  SelfTrainResult out;
  for (std::size_t r = 0; r <= rounds; ++r) {
    std::vector<TrainResult> members;
    const TeacherEnsemble teachers = r == 0 ? TeacherEnsemble{} : out.ensemble(r - 1);
    for (std::size_t m = 0; m < cfg.ensemble_size; ++m) {
      TrainConfig member_cfg = cfg;
      member_cfg.seed = member_seed(cfg.seed, r, m);
      TrainResult run = r == 0 ? train_teacher(corpus, dev, member_cfg)
                               : distill_student(corpus, dev, teachers, member_cfg);
      run.best.round = r;
      members.push_back(std::move(run));
    }
    out.rounds.push_back(std::move(members));
  }
  return out;
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "step,cl_loss,distill_loss,total_loss,dev_spearman\n";
  for (const auto& r : rows) {
    out << r.step << ',' << cell(r.cl_loss) << ',' << cell(r.distill_loss) << ',' << cell(r.total_loss)
        << ',' << cell(r.dev_spearman) << '\n';
  }
  return out.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << metrics_csv(rows);
  if (!out) throw IoError("failed writing " + path);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  save_encoder(path, ckpt.params,
               {{"round", std::to_string(ckpt.round)},
                {"step", std::to_string(ckpt.step)},
                {"dev_score", format_exact(ckpt.dev_score)}});
}

Checkpoint load_checkpoint(const std::string& path) {
  CheckpointMetadata meta;
  Checkpoint ckpt;
  ckpt.params = load_encoder(path, &meta);
  try {
    if (auto it = meta.find("round"); it != meta.end()) ckpt.round = std::stoul(it->second);
    if (auto it = meta.find("step"); it != meta.end()) ckpt.step = std::stoul(it->second);
    if (auto it = meta.find("dev_score"); it != meta.end()) ckpt.dev_score = parse_exact(it->second);
  } catch (const std::logic_error&) {
    throw IoError("malformed checkpoint metadata in " + path);
  }
  return ckpt;
}

}  // namespace dlab
