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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "distillab/cli.hpp"
#include "distillab/error.hpp"
#include "distillab/training.hpp"
#include "test_support.hpp"

namespace dlab::cli {
namespace {

namespace fs = std::filesystem;
using testing::slurp;
using testing::spit;
using testing::TempDir;

constexpr const char* kTinyConfig =
    "# small enough for unit tests\n"
    "topics=4\nvocab=120\nbackground-words=20\n"
    "train-sentences=256\ntest-sentences=64\ndev-pairs=50\ntest-pairs=50\n"
    "min-length=6\nmax-length=12\n"
    "batch-size=16\nsteps=20\neval-interval=10\n"
    "token-dim=8\nhidden-dim=16\noutput-dim=8\nensemble-size=2\n";

struct Result {
  int status;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = run(args, out, err);
  return {status, out.str(), err.str()};
}

// Clears DLAB_SEED for the lifetime of a test unless one is set explicitly.
class EnvSeed {
 public:
  explicit EnvSeed(const char* value = nullptr) {
    if (value) ::setenv("DLAB_SEED", value, 1);
    else ::unsetenv("DLAB_SEED");
  }
  ~EnvSeed() { ::unsetenv("DLAB_SEED"); }
};

TEST(CliUsageTest, NoArgumentsPrintsUsageAndExitsTwo) {
  const Result r = invoke({});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("usage: distillab"), std::string::npos);
  for (const char* cmd : {"gen-data", "train-teacher", "distill", "self-train", "evaluate", "diagnose", "sweep"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
}

TEST(CliUsageTest, UnknownCommandOrFlagExitsTwo) {
  EnvSeed env;
  EXPECT_EQ(invoke({"frobnicate"}).status, 2);
  const Result r = invoke({"gen-data", "--no-such-flag", "3"});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("usage:"), std::string::npos);
  EXPECT_EQ(invoke({"gen-data", "--tau_s", "0.1"}).status, 2);
}

TEST(CliUsageTest, HelpExitsZero) {
  const Result r = invoke({"distill", "--help"});
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("--tau-s"), std::string::npos);
  EXPECT_NE(r.out.find("--teachers"), std::string::npos);
}

TEST(ParseConfigTest, CommentsBlanksAndWhitespace) {
  const Settings s = parse_config("# header\n\n tau-s = 0.03  # inline\nshuffle=group-p\r\n");
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.at("tau-s"), "0.03");
  EXPECT_EQ(s.at("shuffle"), "group-p");
}

TEST(ParseConfigTest, UnknownKeysAndMalformedLinesNameTheLine) {
  try {
    parse_config("tau=0.05\n\ntau_s=0.02\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("tau_s"), std::string::npos);
  }
  try {
    parse_config("seed=1\njust words\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LayerSettingsTest, FlagsBeatEnvBeatsFileBeatsDefaults) {
  const Settings file{{"seed", "5"}, {"lambda", "0.5"}};
  Settings s = layer_settings(file, std::nullopt, {});
  EXPECT_EQ(s.at("seed"), "5");
  EXPECT_EQ(s.at("lambda"), "0.5");
  EXPECT_EQ(s.at("tau"), "0.05");
  EXPECT_EQ(s.size(), config_keys().size());
  s = layer_settings(file, std::string("9"), {});
  EXPECT_EQ(s.at("seed"), "9");
  s = layer_settings(file, std::string("9"), {{"seed", "11"}});
  EXPECT_EQ(s.at("seed"), "11");
}

TEST(ResolveTest, DefaultsMatchTheLibrary) {
  const ResolvedConfig r = resolve(layer_settings({}, std::nullopt, {}));
  const GeneratorConfig g;
  const TrainConfig t;
  EXPECT_EQ(r.generator.topics, g.topics);
  EXPECT_EQ(r.generator.vocab, g.vocab);
  EXPECT_EQ(r.generator.topic_concentration, g.topic_concentration);
  EXPECT_EQ(r.generator.background_rate, g.background_rate);
  EXPECT_EQ(r.generator.min_length, g.min_length);
  EXPECT_EQ(r.generator.zipf_exponent, g.zipf_exponent);
  EXPECT_FALSE(r.train.steps.has_value());
  EXPECT_EQ(r.train.learning_rate, t.learning_rate);
  EXPECT_EQ(r.train.distill.tau, t.distill.tau);
  EXPECT_EQ(r.train.distill.tau_s, t.distill.tau_s);
  EXPECT_EQ(r.train.distill.tau_t, t.distill.tau_t);
  EXPECT_EQ(r.train.distill.batch_size, t.distill.batch_size);
  EXPECT_EQ(r.train.dims, t.dims);
  EXPECT_EQ(r.train.dropout, t.dropout);
  EXPECT_EQ(r.train.ensemble_size, t.ensemble_size);
  EXPECT_EQ(r.train.threads, 1u);
  EXPECT_EQ(r.train.shuffle, ShuffleMode{NoShuffle{}});
  EXPECT_EQ(r.max_seq_len, 32u);
}

TEST(ResolveTest, ShuffleModesAndBadValues) {
  Settings s = layer_settings({}, std::nullopt, {{"shuffle", "group-p"}, {"p", "0.2"}});
  EXPECT_EQ(resolve(s).train.shuffle, ShuffleMode{GroupPShuffle{0.2}});
  s = layer_settings({}, std::nullopt, {{"shuffle", "rank-interval"}, {"lo", "2"}, {"hi", "5"}});
  EXPECT_EQ(resolve(s).train.shuffle, (ShuffleMode{RankIntervalShuffle{2, 5}}));
  for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
           {"shuffle", "sideways"}, {"lr", "fast"}, {"steps", "-3"}, {"p", "0"}, {"tau", "1e999"},
           {"teacher-dropout", "maybe"}, {"batch-size", "2.5"}}) {
    try {
      resolve(layer_settings({}, std::nullopt, {{key, value}}));
      ADD_FAILURE() << key << "=" << value << " accepted";
    } catch (const InputError& e) {
      if (key != "p") EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  }
}

class PipelineTest : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  EnvSeed env;
  std::string config = dir.file("tiny.cfg");

  void SetUp() override { spit(config, kTinyConfig); }

  std::string sub(const std::string& name) const { return dir.file(name); }

  void gen(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"gen-data", "--config", config, "--out", out};
    args.insert(args.end(), extra.begin(), extra.end());
    const Result r = invoke(args);
    ASSERT_EQ(r.status, 0) << r.err;
  }

  Result teacher(const std::string& data, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train-teacher", "--config", config, "--data", data, "--out", out};
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  }
};

TEST_F(PipelineTest, GenDataWritesSplitsAndManifest) {
  gen(sub("data"));
  for (const char* f : {"train.txt", "test.txt", "dev.tsv", "test.tsv", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(sub("data") + "/" + f)) << f;
  }
  const std::string manifest = slurp(sub("data/manifest.txt"));
  EXPECT_EQ(manifest.rfind("command=gen-data\n", 0), 0u);
  EXPECT_NE(manifest.find("\ntopics=4\n"), std::string::npos);
  EXPECT_NE(manifest.find("\ntau-s=0.02\n"), std::string::npos);
  EXPECT_NE(manifest.find("\nconfig=" + config + "\n"), std::string::npos);
  EXPECT_EQ(load_corpus(sub("data/train.txt"), 120).size(), 256u);
  EXPECT_EQ(load_sts(sub("data/dev.tsv"), 120).size(), 50u);
}

TEST_F(PipelineTest, SeedPrecedenceShowsInManifestAndOutputs) {
  gen(sub("a"));
  {
    EnvSeed seven("7");
    gen(sub("b"));
    gen(sub("c"), {"--seed", "1"});
  }
  EXPECT_NE(slurp(sub("b/manifest.txt")).find("\nseed=7\n"), std::string::npos);
  EXPECT_NE(slurp(sub("c/manifest.txt")).find("\nseed=1\n"), std::string::npos);
  EXPECT_NE(slurp(sub("a/train.txt")), slurp(sub("b/train.txt")));
  EXPECT_EQ(slurp(sub("a/train.txt")), slurp(sub("c/train.txt")));
}

TEST_F(PipelineTest, TeacherTrainingIsReproducible) {
  gen(sub("data"));
  ASSERT_EQ(teacher(sub("data"), sub("t1")).status, 0);
  ASSERT_EQ(teacher(sub("data"), sub("t2")).status, 0);
  const std::string metrics = slurp(sub("t1/metrics.csv"));
  EXPECT_EQ(metrics.rfind("step,cl_loss,distill_loss,total_loss,dev_spearman\n", 0), 0u);
  EXPECT_EQ(metrics, slurp(sub("t2/metrics.csv")));
  EXPECT_EQ(slurp(sub("t1/checkpoint-r0.bin")), slurp(sub("t2/checkpoint-r0.bin")));
  const Checkpoint c = load_checkpoint(sub("t1/checkpoint-r0.bin"));
  EXPECT_EQ(c.round, 0u);
  EXPECT_EQ(c.params.dims(), (LayerDims{8, 16, 8}));
}

TEST_F(PipelineTest, DistillEvaluateDiagnoseAndThreads) {
  gen(sub("data"));
  ASSERT_EQ(teacher(sub("data"), sub("t0")).status, 0);
  ASSERT_EQ(teacher(sub("data"), sub("t1"), {"--seed", "2"}).status, 0);
  const std::string teachers = sub("t0/checkpoint-r0.bin") + "," + sub("t1/checkpoint-r0.bin");

  const std::vector<std::string> distill{"distill", "--config", config, "--data", sub("data"), "--teachers", teachers,
                                         "--shuffle", "group-p", "--p", "0.1"};
  auto with_out = [](std::vector<std::string> a, std::vector<std::string> extra) {
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  Result r = invoke(with_out(distill, {"--out", sub("s1")}));
  ASSERT_EQ(r.status, 0) << r.err;
  ASSERT_EQ(invoke(with_out(distill, {"--out", sub("s4"), "--threads", "4"})).status, 0);
  EXPECT_EQ(slurp(sub("s1/metrics.csv")), slurp(sub("s4/metrics.csv")));
  EXPECT_EQ(load_checkpoint(sub("s1/checkpoint-r1.bin")).round, 1u);
  EXPECT_NE(slurp(sub("s1/manifest.txt")).find("\nshuffle=group-p\n"), std::string::npos);
  EXPECT_NE(slurp(sub("s1/manifest.txt")).find("\nthreads=1\n"), std::string::npos);

  r = invoke({"evaluate", "--checkpoint", sub("s1/checkpoint-r1.bin"), "--pairs", sub("data/test.tsv"),
              "--teachers", teachers, "--out", sub("eval")});
  ASSERT_EQ(r.status, 0) << r.err;
  const std::string report = slurp(sub("eval/report.csv"));
  EXPECT_EQ(report.rfind("name,split,value\nsts_spearman,test,", 0), 0u);
  EXPECT_NE(report.find("\nensemble_spearman,test,"), std::string::npos);

  r = invoke({"diagnose", "--config", config, "--data", sub("data"), "--checkpoint", sub("s1/checkpoint-r1.bin"),
              "--teachers", teachers, "--out", sub("diag")});
  ASSERT_EQ(r.status, 0) << r.err;
  const std::string diag = slurp(sub("diag/report.csv"));
  for (const char* name : {"kl_first_order,train_vs_test,", "kl_second_order,train_vs_test,",
                           "differential_entropy_first_order,teachers,", "cross_teacher_spearman,train,",
                           "distill_loss_checkpoint,train,", "distill_loss_checkpoint,test,"}) {
    EXPECT_NE(diag.find(name), std::string::npos) << name;
  }
  const std::string sharp = slurp(sub("diag/sharpness.csv"));
  EXPECT_EQ(sharp.rfind("rank,logit,label\n1,", 0), 0u);
  EXPECT_NE(sharp.find(",test-pairs\n"), std::string::npos);
}

TEST_F(PipelineTest, SelfTrainWritesEveryRound) {
  gen(sub("data"));
  const Result r = invoke({"self-train", "--config", config, "--data", sub("data"), "--rounds", "2", "--steps", "5",
                           "--out", sub("st")});
  ASSERT_EQ(r.status, 0) << r.err;
  for (int round = 0; round <= 2; ++round) {
    EXPECT_EQ(load_checkpoint(sub("st/checkpoint-r" + std::to_string(round) + ".bin")).round,
              static_cast<std::size_t>(round));
    for (int m = 0; m < 2; ++m) {
      const std::string tag = "-r" + std::to_string(round) + "-m" + std::to_string(m);
      EXPECT_TRUE(fs::exists(sub("st/metrics" + tag + ".csv"))) << tag;
      EXPECT_TRUE(fs::exists(sub("st/checkpoint" + tag + ".bin"))) << tag;
    }
  }
  EXPECT_EQ(slurp(sub("st/metrics.csv")), slurp(sub("st/metrics-r2-m0.csv")));
}

TEST_F(PipelineTest, SweepEmitsTheFullGrid) {
  gen(sub("data"));
  ASSERT_EQ(teacher(sub("data"), sub("t0"), {"--steps", "5"}).status, 0);
  const Result r = invoke({"sweep", "--config", config, "--data", sub("data"), "--teachers",
                           sub("t0/checkpoint-r0.bin"), "--steps", "3", "--out", sub("sweep")});
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream grid(slurp(sub("sweep/grid.csv")));
  std::string line;
  std::getline(grid, line);
  EXPECT_EQ(line, "grid,shuffle,p,lambda,tau_s,tau_t,dev_spearman,test_spearman");
  int p = 0, lambda = 0, temperature = 0;
  while (std::getline(grid, line)) {
    p += line.rfind("p,group-p,", 0) == 0;
    lambda += line.rfind("lambda,", 0) == 0;
    temperature += line.rfind("temperature,", 0) == 0;
  }
  EXPECT_EQ(p, 5);
  EXPECT_EQ(lambda, 5);
  EXPECT_EQ(temperature, 9);
  EXPECT_NE(slurp(sub("sweep/manifest.txt")).find("\np-grid=0.05,0.08,0.1,0.12,0.15\n"), std::string::npos);
}

TEST_F(PipelineTest, FailuresExitNonZeroWithMessages) {
  spit(sub("bad.cfg"), "steps=10\nlearning-rate=0.1\n");
  Result r = invoke({"gen-data", "--config", sub("bad.cfg"), "--out", sub("x")});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(sub("x/manifest.txt")));

  r = invoke({"gen-data", "--config", sub("missing.cfg"), "--out", sub("x")});
  EXPECT_EQ(r.status, 1);

  r = invoke({"train-teacher", "--config", config, "--data", sub("nowhere"), "--out", sub("y")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("nowhere"), std::string::npos);
  // The resolved config is recorded before the run fails.
  EXPECT_TRUE(fs::exists(sub("y/manifest.txt")));

  r = invoke({"gen-data", "--config", config, "--lr", "fast", "--out", sub("z")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("lr"), std::string::npos);

  r = invoke({"distill", "--config", config, "--data", sub("data"), "--out", sub("w")});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("--teachers"), std::string::npos);

  gen(sub("data"));
  spit(sub("data/dev.tsv"), "9\tw1\tw2\n");
  r = teacher(sub("data"), sub("v"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("dev.tsv:1:"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace dlab::cli
