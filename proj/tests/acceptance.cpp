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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Criteria 6 to 8 train on the default synthetic corpus and take a few minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "distillab/cli.hpp"
#include "distillab/diagnostics.hpp"
#include "distillab/gradcheck.hpp"
#include "distillab/logit_transform.hpp"
#include "distillab/training.hpp"
#include "test_support.hpp"

namespace {

using namespace dlab;
using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

template <typename... Args>
std::string fmt(const char* format, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Runs a criterion body; an escaped exception counts as FAIL.
void criterion(int id, const std::string& title, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, title, std::string("threw: ") + e.what());
  }
}

void gradient_check() {
  const auto start = Clock::now();
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const std::size_t vocab = 6 + trial % 5, n = 2 + trial % 4;
    const LayerDims dims{2 + trial % 3, 3 + trial % 4, 2 + trial % 3};
    const EncoderParams base = init_params(vocab, dims, trial % 2 ? 0.2 : 0.0, 500 + trial);
    const SentenceBatch batch = testing::random_batch(n, vocab, 5, gen);
    const Matrix targets = teacher_distribution(testing::random_matrix(n, n, gen), 0.3);
    const std::uint64_t seed = gen();
    const double tau = 0.2 + 0.1 * (trial % 3), tau_s = 0.3, lambda = 0.5 + trial % 2;
    Objective f = [&](std::span<const Matrix> ps, std::vector<Matrix>* grads) {
      EncoderParams p = base;
      auto tensors = p.tensors();
      for (std::size_t k = 0; k < tensors.size(); ++k) *tensors[k] = ps[k];
      ad::Graph g;
      const ParamVars vars = bind_params(g, p);
      const auto [s1, s2] = view_seeds(seed);
      ad::Var logits = similarity_logits(encode_graph(g, vars, p, batch, EncodeMode::train, s1),
                                         encode_graph(g, vars, p, batch, EncodeMode::train, s2));
      ad::Var loss = ad::add(contrastive_loss(logits, tau),
                             ad::scale(distill_loss(logits, targets, tau_s), lambda));
      if (grads) {
        g.backward(loss);
        grads->clear();
        for (auto v : vars.all()) grads->push_back(g.grad(v));
      }
      return loss.value()(0, 0);
    };
    std::vector<Matrix> params;
    for (const Matrix* m : base.tensors()) params.push_back(*m);
    worst = std::max(worst, finite_diff_check(f, params, 1e-5));
  }
  const double secs = seconds_since(start);
  report(1, worst <= 1e-4 && secs < 30.0, "gradient check",
         fmt("max relative error %.2e over 100 instances (limit 1e-4), %.1f s (limit 30 s)", worst, secs));
}

std::vector<double> softmax(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> e(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) z += e[i] = std::exp(v[i] - m);
  for (double& x : e) x /= z;
  return e;
}

void group_p_suite() {
  RngStream rng(2024);
  std::mt19937_64 gen(77);
  std::size_t multiset_bad = 0, cross_group = 0, identity_bad = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    LogitRow row;
    const std::size_t n = 2 + gen() % 30;
    std::normal_distribution<double> logit(0.0, 1.0 + trial % 3);
    for (std::size_t j = 0; j < n; ++j) {
      double v = logit(gen);
      if (trial % 4 == 0) v = std::round(v * 2.0) / 2.0;  // force ties
      row.values.push_back(v);
    }
    const double p = std::uniform_real_distribution<double>(0.01, 1.0)(gen);
    const LogitRow out = group_p_shuffle(row, p, rng);

    std::vector<double> a = row.values, b = out.values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    multiset_bad += a != b;

    // Each group must keep exactly its own values.
    const GroupAssignment groups = group_by_cumulative(row, p);
    std::map<std::size_t, std::vector<double>> before, after;
    for (std::size_t j = 0; j < n; ++j) {
      before[groups.group[j]].push_back(row.values[j]);
      after[groups.group[j]].push_back(out.values[j]);
    }
    for (auto& [g, vals] : before) {
      std::sort(vals.begin(), vals.end());
      std::sort(after[g].begin(), after[g].end());
      cross_group += vals != after[g];
    }

    const std::vector<double> probs = softmax(row.values);
    const double small_p = 0.99 * *std::min_element(probs.begin(), probs.end());
    identity_bad += group_p_shuffle(row, small_p, rng).values != row.values;
  }

  // Length-4 rows at p = 1: all 24 arrangements equally likely.
  const LogitRow four{{0.4, -1.0, 2.0, 0.7}};
  std::map<std::vector<double>, std::size_t> counts;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) ++counts[group_p_shuffle(four, 1.0, rng).values];
  const double expected = draws / 24.0;
  double chi2 = 0.0;
  for (const auto& [perm, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  chi2 += (24.0 - static_cast<double>(counts.size())) * expected;  // unseen arrangements
  const double pvalue = boost::math::cdf(boost::math::complement(boost::math::chi_squared(23.0), chi2));

  const bool pass = multiset_bad == 0 && cross_group == 0 && identity_bad == 0 && counts.size() == 24 &&
                    pvalue > 0.01;
  report(2, pass, "group-p shuffle",
         fmt("10000 trials: %zu multiset violations, %zu cross-group moves, %zu non-identity at small p; "
             "p=1 length-4 chi2=%.2f (23 df) p-value %.3f over %zu arrangements",
             multiset_bad, cross_group, identity_bad, chi2, pvalue, counts.size()));
}

// Members are one base teacher with independent Gaussian parameter noise.
void clt_variance() {
  const auto start = Clock::now();
  const EncoderParams base = init_params(300, LayerDims{}, 0.0, 9);
  std::mt19937_64 gen(5);
  const SentenceBatch batch = testing::random_batch(16, 300, 20, gen);
  const std::size_t trials = 400;
  RngStream noise = RngStream(31).split(StreamTag::perturbation);
  auto member = [&] {
    EncoderParams p = base;
    for (Matrix* m : p.tensors())
      for (double& v : m->values()) v += 0.05 * noise.normal();
    return p;
  };
  auto mean_std = [&](std::size_t m_count) {
    const std::size_t n = batch.sentences.size();
    std::vector<double> sum(n * n, 0.0), sum2(n * n, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      TeacherEnsemble e;
      for (std::size_t m = 0; m < m_count; ++m) e.members.push_back(member());
      const Matrix avg = average_teachers(e, batch).values;
      for (std::size_t k = 0; k < n * n; ++k) {
        sum[k] += avg.values()[k];
        sum2[k] += avg.values()[k] * avg.values()[k];
      }
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::size_t k = i * n + j;
        const double mean = sum[k] / trials;
        total += std::sqrt(std::max(0.0, (sum2[k] - trials * mean * mean) / (trials - 1)));
        ++count;
      }
    return total / static_cast<double>(count);
  };
  const double s1 = mean_std(1), s4 = mean_std(4), s16 = mean_std(16);
  const double r4 = (s4 / s1) * 2.0, r16 = (s16 / s1) * 4.0;  // 1 when exactly 1/sqrt(M)
  const double secs = seconds_since(start);
  const bool pass = std::abs(r4 - 1.0) <= 0.15 && std::abs(r16 - 1.0) <= 0.15 && secs < 60.0;
  report(3, pass, "ensemble variance reduction",
         fmt("std ratio / (1/sqrt M): M=4 %.3f, M=16 %.3f (tolerance 0.15), %.1f s (limit 60 s)", r4, r16, secs));
}

void entropy_values() {
  const double a = differential_entropy(2.177e-5), b = differential_entropy(0.0406);
  report(4, std::abs(a + 9.3160) <= 5e-4 && std::abs(b + 1.7853) <= 5e-4, "differential entropy",
         fmt("std 2.177e-5 -> %.4f (want -9.3160), std 0.0406 -> %.4f (want -1.7853)", a, b));
}

void fixed_point() {
  std::mt19937_64 gen(12);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const EncoderParams p = init_params(60, {8, 16, 8}, 0.0, 40 + trial);
    const SentenceBatch batch = testing::random_batch(12, 60, 10, gen);
    const double tau = 0.02;
    ad::Graph g;
    const ParamVars vars = bind_params(g, p);
    const auto [s1, s2] = view_seeds(gen());
    ad::Var logits = similarity_logits(encode_graph(g, vars, p, batch, EncodeMode::train, s1),
                                       encode_graph(g, vars, p, batch, EncodeMode::train, s2));
    const Matrix q = teacher_distribution(teacher_logits(p, batch).values, tau);
    g.backward(distill_loss(logits, q, tau));
    double norm2 = 0.0;
    for (auto v : vars.all())
      for (double x : g.grad(v).values()) norm2 += x * x;
    worst = std::max(worst, std::sqrt(norm2));
  }
  report(5, worst <= 1e-8, "self-distillation fixed point",
         fmt("max distill gradient norm %.2e over 20 instances (limit 1e-8)", worst));
}

// Criteria 6 to 8 share one training run per seed.
struct SeedRun {
  std::vector<EncoderParams> teachers;
  EncoderParams vanilla, group_p_avg;
  LossGap gap_vanilla, gap_group_p;
  double student = 0.0, vanilla_score = 0.0, ensemble = 0.0;
  double kl_first = 0.0, kl_second = 0.0;
};

void desk_scale() {
  constexpr std::uint64_t kSeeds = 5;
  constexpr std::size_t kSteps = 780;
  const SyntheticData d = generate_corpus(GeneratorConfig{});
  std::vector<SentenceBatch> train, test;
  for (std::size_t pass = 0; pass < 10; ++pass) {
    const auto tb = batch_iter(d.train, 64, 999, pass);
    train.insert(train.end(), tb.begin(), tb.begin() + 15);
    const auto sb = batch_iter(d.test, 64, 999, pass);
    test.insert(test.end(), sb.begin(), sb.end());
  }

  std::vector<SeedRun> runs;
  double gap_secs = 0.0, student_secs = 0.0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    SeedRun run;
    TrainConfig cfg;
    cfg.steps = kSteps;
    auto start = Clock::now();
    for (std::size_t m = 0; m < 4; ++m) {
      TrainConfig t = cfg;
      t.seed = member_seed(seed, 0, m);
      run.teachers.push_back(train_teacher(d.train, d.dev, t).best.params);
    }
    const TeacherEnsemble first{{run.teachers[0]}}, all{run.teachers};
    TrainConfig s = cfg;
    s.seed = member_seed(seed, 1, 0);
    run.vanilla = distill_student(d.train, d.dev, first, s).final_params;
    s.shuffle = GroupPShuffle{0.1};
    const EncoderParams group_p = distill_student(d.train, d.dev, first, s).final_params;
    const DistillConfig dc;
    run.gap_vanilla = loss_gap_report(run.vanilla, first, train, test, dc);
    run.gap_group_p = loss_gap_report(group_p, first, train, test, dc);
    gap_secs += seconds_since(start);

    start = Clock::now();
    run.group_p_avg = distill_student(d.train, d.dev, all, s).final_params;
    run.student = sts_spearman(run.group_p_avg, d.test_pairs);
    run.vanilla_score = sts_spearman(run.vanilla, d.test_pairs);
    run.ensemble = ensemble_eval(all, d.test_pairs);
    student_secs += seconds_since(start);

    const DiagnosticsReport diag = diagnose_model(run.teachers[0], train, d.test_pairs);
    run.kl_first = diag.kl_first;
    run.kl_second = diag.kl_second;
    runs.push_back(std::move(run));
  }

  int gap_agree = 0, beats_vanilla = 0, beats_ensemble = 0, kl_agree = 0;
  std::string gaps, scores, kls;
  for (const auto& r : runs) {
    gap_agree += r.gap_vanilla.gap() > r.gap_group_p.gap();
    beats_vanilla += r.student >= r.vanilla_score;
    beats_ensemble += r.student >= r.ensemble;
    kl_agree += r.kl_second > r.kl_first;
    gaps += fmt(" %.3f/%.3f", r.gap_vanilla.gap(), r.gap_group_p.gap());
    scores += fmt(" %.3f/%.3f/%.3f", r.student, r.vanilla_score, r.ensemble);
    kls += fmt(" %.3f/%.3f", r.kl_second, r.kl_first);
  }
  report(6, gap_agree >= 4 && gap_secs < 600.0, "loss gap direction",
         fmt("vanilla > group-p on %d/5 seeds (need 4), gaps vanilla/group-p:%s; %.0f s (limit 600 s)",
             gap_agree, gaps.c_str(), gap_secs));
  report(7, beats_vanilla >= 4 && beats_ensemble >= 4 && gap_secs + student_secs < 900.0,
         "averaged group-p student",
         fmt(">= vanilla on %d/5, >= ensemble on %d/5 (need 4 each), student/vanilla/ensemble:%s; %.0f s "
             "(limit 900 s)",
             beats_vanilla, beats_ensemble, scores.c_str(), gap_secs + student_secs));
  report(8, kl_agree == 5, "second-order shift exceeds first-order",
         fmt("kl_second > kl_first on %d/5 seeds, second/first:%s", kl_agree, kls.c_str()));
}

constexpr const char* kPipelineConfig =
    "topics=6\nvocab=300\nbackground-words=40\n"
    "train-sentences=1024\ntest-sentences=128\ndev-pairs=100\ntest-pairs=100\n"
    "min-length=8\nmax-length=16\n"
    "batch-size=32\nsteps=60\neval-interval=20\n"
    "token-dim=16\nhidden-dim=32\noutput-dim=16\nensemble-size=2\n";

void pipeline_determinism() {
  ::unsetenv("DLAB_SEED");
  testing::TempDir dir("acceptance");
  const std::string config = dir.file("run.cfg");
  testing::spit(config, kPipelineConfig);
  std::ostringstream sink;
  std::vector<std::string> problems;
  auto cli = [&](std::vector<std::string> args) {
    if (cli::run(args, sink, sink) != 0) problems.push_back(args[0] + " failed");
  };
  auto pipeline = [&](const std::string& tag, const std::string& threads) {
    const std::string root = dir.file(tag);
    cli({"gen-data", "--config", config, "--out", root + "/data"});
    cli({"train-teacher", "--config", config, "--data", root + "/data", "--out", root + "/t0"});
    cli({"train-teacher", "--config", config, "--data", root + "/data", "--seed", "2", "--out", root + "/t1"});
    cli({"distill", "--config", config, "--data", root + "/data", "--shuffle", "group-p", "--threads", threads,
         "--teachers", root + "/t0/checkpoint-r0.bin," + root + "/t1/checkpoint-r0.bin", "--out", root + "/s"});
  };
  pipeline("a", "1");
  pipeline("b", "1");
  pipeline("c", "4");
  std::size_t compared = 0;
  for (const char* stage : {"t0", "t1", "s"}) {
    const std::string a = testing::slurp(dir.file(std::string("a/") + stage + "/metrics.csv"));
    if (a.empty()) problems.push_back(std::string(stage) + " metrics missing");
    for (const char* other : {"b", "c"}) {
      ++compared;
      if (testing::slurp(dir.file(std::string(other) + "/" + stage + "/metrics.csv")) != a)
        problems.push_back(std::string(other) + "/" + stage + " metrics differ");
    }
  }
  std::string detail = fmt("%zu metrics.csv comparisons across two runs and a --threads 4 run", compared);
  for (const auto& p : problems) detail += "; " + p;
  report(9, problems.empty(), "pipeline determinism", detail);
}

void round_handoff() {
  const SyntheticData d = generate_corpus(testing::tiny_generator(8));
  TrainConfig cfg;
  cfg.steps = 40;
  cfg.eval_interval = 10;
  cfg.distill.batch_size = 16;
  cfg.dims = {8, 16, 8};
  cfg.ensemble_size = 2;
  cfg.shuffle = GroupPShuffle{0.1};
  const SelfTrainResult r = self_train(d.train, d.dev, cfg, 2);
  const SentenceBatch probe = batch_iter(d.test, 16, 5, 0).front();
  testing::TempDir dir("handoff");
  std::size_t checked = 0, mismatched = 0;
  for (std::size_t round = 0; round + 1 < r.rounds.size(); ++round) {
    TeacherEnsemble loaded;
    for (std::size_t m = 0; m < r.rounds[round].size(); ++m) {
      const std::string path = dir.file(fmt("checkpoint-r%zu-m%zu.bin", round, m));
      save_checkpoint(path, r.rounds[round][m].best);
      loaded.members.push_back(load_checkpoint(path).params);
      const LogitMatrix as_student = teacher_logits(r.rounds[round][m].best.params, probe);
      mismatched += teacher_logits(loaded.members.back(), probe) != as_student;
      mismatched += teacher_logits(r.ensemble(round).members[m], probe) != as_student;
      ++checked;
    }
    // The next round replays exactly when distilled from the reloaded teachers.
    TrainConfig next = cfg;
    next.seed = member_seed(cfg.seed, round + 1, 0);
    mismatched += distill_student(d.train, d.dev, loaded, next).best.params != r.rounds[round + 1][0].best.params;
  }
  report(10, mismatched == 0 && checked > 0, "round handoff",
         fmt("%zu members across %zu handoffs, %zu mismatches", checked, r.rounds.size() - 1, mismatched));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  criterion(1, "gradient check", gradient_check);
  criterion(2, "group-p shuffle", group_p_suite);
  criterion(3, "ensemble variance reduction", clt_variance);
  criterion(4, "differential entropy", entropy_values);
  criterion(5, "self-distillation fixed point", fixed_point);
  criterion(6, "desk-scale criteria 6-8", desk_scale);
  criterion(9, "pipeline determinism", pipeline_determinism);
  criterion(10, "round handoff", round_handoff);
  std::printf("%s: %d failing, %.0f s total\n", failures ? "FAIL" : "PASS", failures, seconds_since(start));
  return failures ? 1 : 0;
}
