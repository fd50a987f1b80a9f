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

#include "distillab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "distillab/diagnostics.hpp"
#include "distillab/error.hpp"

namespace dlab::cli {

namespace fs = std::filesystem;

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", "1", "master seed (DLAB_SEED overrides the config file)"},
      {"threads", "1", "worker threads for teacher inference"},
      {"topics", "16", "generator: latent topics"},
      {"vocab", "2000", "vocabulary size"},
      {"train-sentences", "10000", "generator: training sentences"},
      {"test-sentences", "1000", "generator: held-out sentences"},
      {"dev-pairs", "1000", "generator: dev pairs"},
      {"test-pairs", "1000", "generator: test pairs"},
      {"min-length", "16", "generator: shortest sentence"},
      {"max-length", "32", "generator: longest sentence"},
      {"topic-concentration", "0.15", "generator: Dirichlet concentration"},
      {"background-rate", "0.2", "generator: share of topic-free tokens"},
      {"background-words", "200", "generator: topic-free vocabulary size"},
      {"zipf-exponent", "1.0", "generator: rank-frequency decay inside a topic"},
      {"max-seq-len", "32", "truncate loaded sentences to this many tokens"},
      {"steps", "epoch", "optimizer steps, or 'epoch' for one pass over the corpus"},
      {"lr", "0.001", "Adam learning rate"},
      {"beta1", "0.9", "Adam beta1"},
      {"beta2", "0.999", "Adam beta2"},
      {"epsilon", "1e-8", "Adam epsilon"},
      {"eval-interval", "125", "steps between dev evaluations"},
      {"batch-size", "64", "sentences per batch"},
      {"tau", "0.05", "contrastive temperature"},
      {"tau-s", "0.02", "student distillation temperature"},
      {"tau-t", "0.01", "teacher distillation temperature"},
      {"lambda", "1", "distillation weight"},
      {"shuffle", "none", "teacher logit shuffle: none | group-p | rank-interval"},
      {"p", "0.1", "group-p interval width"},
      {"lo", "1", "rank-interval first rank"},
      {"hi", "12", "rank-interval last rank"},
      {"ensemble-size", "4", "teachers per self-training round"},
      {"rounds", "1", "self-training distillation rounds"},
      {"dropout", "0.1", "encoder dropout rate"},
      {"teacher-dropout", "false", "sample teacher logits with dropout"},
      {"token-dim", "32", "token embedding width"},
      {"hidden-dim", "64", "hidden layer width"},
      {"output-dim", "32", "projection head width"},
      {"top-k", "12", "positions compared by cross-teacher Spearman"},
  };
  return keys;
}

namespace {

bool is_config_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const KeySpec& k) { return key == k.key; });
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Settings parse_config(const std::string& text) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_no, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!is_config_key(key)) {
      throw ParseError(line_no, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

Settings layer_settings(const Settings& file, const std::optional<std::string>& env_seed,
                        const Settings& flags) {
  Settings out;
  for (const auto& k : config_keys()) out[k.key] = k.default_value;
  for (const auto& [k, v] : file) out[k] = v;
  if (env_seed) out["seed"] = *env_seed;
  for (const auto& [k, v] : flags) out[k] = v;
  return out;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw InputError("invalid value '" + value + "' for " + key + ": expected " + expected);
}

std::uint64_t as_u64(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    bad_value(key, v, "a nonnegative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    bad_value(key, v, "an integer below 2^64");
  }
}

std::size_t as_size(const Settings& s, const std::string& key) { return static_cast<std::size_t>(as_u64(s, key)); }

double as_double(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool as_bool(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

}  // namespace

ResolvedConfig resolve(const Settings& s) {
  ResolvedConfig r;
  auto& g = r.generator;
  g.topics = as_size(s, "topics");
  g.vocab = as_size(s, "vocab");
  g.train_sentences = as_size(s, "train-sentences");
  g.test_sentences = as_size(s, "test-sentences");
  g.dev_pairs = as_size(s, "dev-pairs");
  g.test_pairs = as_size(s, "test-pairs");
  g.min_length = as_size(s, "min-length");
  g.max_length = as_size(s, "max-length");
  g.topic_concentration = as_double(s, "topic-concentration");
  g.background_rate = as_double(s, "background-rate");
  g.background_words = as_size(s, "background-words");
  g.zipf_exponent = as_double(s, "zipf-exponent");
  g.seed = as_u64(s, "seed");

  auto& t = r.train;
  if (s.at("steps") != "epoch") t.steps = as_size(s, "steps");
  t.learning_rate = as_double(s, "lr");
  t.adam = {as_double(s, "beta1"), as_double(s, "beta2"), as_double(s, "epsilon")};
  t.eval_interval = as_size(s, "eval-interval");
  t.distill.batch_size = as_size(s, "batch-size");
  t.distill.tau = as_double(s, "tau");
  t.distill.tau_s = as_double(s, "tau-s");
  t.distill.tau_t = as_double(s, "tau-t");
  t.distill.lambda = as_double(s, "lambda");
  t.distill.p = as_double(s, "p");
  t.seed = g.seed;
  const std::string& shuffle = s.at("shuffle");
  if (shuffle == "none") {
    t.shuffle = NoShuffle{};
  } else if (shuffle == "group-p") {
    t.shuffle = GroupPShuffle{t.distill.p};
  } else if (shuffle == "rank-interval") {
    t.shuffle = RankIntervalShuffle{as_size(s, "lo"), as_size(s, "hi")};
  } else {
    bad_value("shuffle", shuffle, "none, group-p or rank-interval");
  }
  t.ensemble_size = as_size(s, "ensemble-size");
  t.dims = {as_size(s, "token-dim"), as_size(s, "hidden-dim"), as_size(s, "output-dim")};
  t.dropout = as_double(s, "dropout");
  t.teacher_dropout = as_bool(s, "teacher-dropout");
  t.threads = as_size(s, "threads");

  r.max_seq_len = as_size(s, "max-seq-len");
  r.rounds = as_size(s, "rounds");
  r.top_k = as_size(s, "top-k");
  t.distill.rounds = r.rounds;
  if (r.max_seq_len < 1) throw InputError("max-seq-len must be at least 1");
  try {
    g.validate();
    t.validate();
  } catch (const ParameterError& e) {
    throw InputError(std::string("invalid configuration: ") + e.what());
  }
  return r;
}

std::string usage() {
  return "usage: distillab <command> [flags]\n"
         "\n"
         "commands:\n"
         "  gen-data       write synthetic train/test corpora and dev/test pair files\n"
         "  train-teacher  contrastive training of one teacher\n"
         "  distill        train a student against teacher checkpoints (--teachers)\n"
         "  self-train     teachers plus --rounds of ensemble distillation\n"
         "  evaluate       Spearman of a checkpoint on a pair file\n"
         "  diagnose       variance diagnostics for a checkpoint and optional teachers\n"
         "  sweep          grid over p, lambda and the distillation temperatures\n"
         "\n"
         "Every config key is also a flag (--tau-s 0.02). Run 'distillab <command> --help'\n"
         "for the full list. Settings apply in order: defaults, --config file, DLAB_SEED,\n"
         "flags.\n";
}

namespace {

// Paths and other per-invocation inputs that are not config keys.
struct Paths {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string pairs;
  std::vector<std::string> teachers;
  std::string p_grid = "0.05,0.08,0.1,0.12,0.15";
  std::string lambda_grid = "0.1,0.2,0.5,1,2";
  std::string temperature_grid = "0.05,0.02,0.01";
};

struct Invocation {
  std::string command;
  ResolvedConfig cfg;
  Settings settings;
  Paths paths;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path require_out(const Paths& paths) {
  if (paths.out.empty()) throw InputError("--out is required");
  fs::create_directories(paths.out);
  return paths.out;
}

void write_manifest(const fs::path& dir, const Invocation& inv) {
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
  out << "command=" << inv.command << '\n';
  for (const auto& [k, v] : inv.settings) out << k << '=' << v << '\n';
  const Paths& p = inv.paths;
  if (!p.config.empty()) out << "config=" << p.config << '\n';
  if (!p.data.empty()) out << "data=" << p.data << '\n';
  if (!p.checkpoint.empty()) out << "checkpoint=" << p.checkpoint << '\n';
  if (!p.pairs.empty()) out << "pairs=" << p.pairs << '\n';
  for (std::size_t i = 0; i < p.teachers.size(); ++i) out << "teacher." << i << '=' << p.teachers[i] << '\n';
  if (inv.command == "sweep") {
    out << "p-grid=" << p.p_grid << "\nlambda-grid=" << p.lambda_grid
        << "\ntemperature-grid=" << p.temperature_grid << '\n';
  }
  if (!out) throw IoError("failed writing manifest");
}

struct DataDir {
  Corpus train;
  Corpus test;
  std::vector<ScoredPair> dev;
  std::vector<ScoredPair> test_pairs;
};

DataDir load_data(const Invocation& inv, bool need_test_corpus) {
  if (inv.paths.data.empty()) throw InputError("--data is required (a directory written by gen-data)");
  const fs::path dir = inv.paths.data;
  const std::size_t vocab = inv.cfg.generator.vocab;
  const std::size_t len = inv.cfg.max_seq_len;
  DataDir d;
  d.train = load_corpus((dir / "train.txt").string(), vocab, len, Split::train);
  d.dev = load_sts((dir / "dev.tsv").string(), vocab, len);
  d.test_pairs = load_sts((dir / "test.tsv").string(), vocab, len);
  if (need_test_corpus) d.test = load_corpus((dir / "test.txt").string(), vocab, len, Split::test);
  return d;
}

TeacherEnsemble load_teachers(const Paths& paths, std::size_t* max_round = nullptr) {
  if (paths.teachers.empty()) throw InputError("--teachers needs at least one checkpoint");
  TeacherEnsemble ensemble;
  std::size_t round = 0;
  for (const auto& path : paths.teachers) {
    Checkpoint c = load_checkpoint(path);
    round = std::max(round, c.round);
    ensemble.members.push_back(std::move(c.params));
  }
  if (max_round) *max_round = round;
  return ensemble;
}

std::string round_file(std::size_t round) { return "checkpoint-r" + std::to_string(round) + ".bin"; }

int cmd_gen_data(const Invocation& inv, std::ostream& out) {
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  const SyntheticData data = generate_corpus(inv.cfg.generator);
  write_corpus((dir / "train.txt").string(), data.train);
  write_corpus((dir / "test.txt").string(), data.test);
  write_sts((dir / "dev.tsv").string(), data.dev);
  write_sts((dir / "test.tsv").string(), data.test_pairs);
  out << "wrote " << data.train.size() << " train, " << data.test.size() << " test sentences, "
      << data.dev.size() << " dev and " << data.test_pairs.size() << " test pairs to " << dir.string() << '\n';
  return 0;
}

void finish_run(const fs::path& dir, const TrainResult& run, std::size_t round, std::ostream& out) {
  write_metrics_csv((dir / "metrics.csv").string(), run.metrics);
  Checkpoint best = run.best;
  best.round = round;
  save_checkpoint((dir / round_file(round)).string(), best);
  out << "best dev Spearman " << best.dev_score << " at step " << best.step << "; wrote "
      << (dir / round_file(round)).string() << '\n';
}

int cmd_train_teacher(const Invocation& inv, std::ostream& out) {
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  const DataDir data = load_data(inv, false);
  finish_run(dir, train_teacher(data.train, data.dev, inv.cfg.train), 0, out);
  return 0;
}

int cmd_distill(const Invocation& inv, std::ostream& out) {
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  std::size_t teacher_round = 0;
  const TeacherEnsemble teachers = load_teachers(inv.paths, &teacher_round);
  const DataDir data = load_data(inv, false);
  finish_run(dir, distill_student(data.train, data.dev, teachers, inv.cfg.train), teacher_round + 1, out);
  return 0;
}

int cmd_self_train(const Invocation& inv, std::ostream& out) {
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  const DataDir data = load_data(inv, false);
  const SelfTrainResult result = self_train(data.train, data.dev, inv.cfg.train, inv.cfg.rounds);
  for (std::size_t r = 0; r < result.rounds.size(); ++r) {
    for (std::size_t m = 0; m < result.rounds[r].size(); ++m) {
      const TrainResult& run = result.rounds[r][m];
      const std::string tag = "-r" + std::to_string(r) + "-m" + std::to_string(m);
      write_metrics_csv((dir / ("metrics" + tag + ".csv")).string(), run.metrics);
      save_checkpoint((dir / ("checkpoint" + tag + ".bin")).string(), run.best);
    }
    save_checkpoint((dir / round_file(r)).string(), result.rounds[r].front().best);
    out << "round " << r << ": member 0 dev Spearman " << result.rounds[r].front().best.dev_score << '\n';
  }
  write_metrics_csv((dir / "metrics.csv").string(), result.rounds.back().front().metrics);
  return 0;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_evaluate(const Invocation& inv, std::ostream& out) {
  if (inv.paths.checkpoint.empty()) throw InputError("--checkpoint is required");
  if (inv.paths.pairs.empty()) throw InputError("--pairs is required");
  std::optional<fs::path> dir;
  if (!inv.paths.out.empty()) {
    dir = require_out(inv.paths);
    write_manifest(*dir, inv);
  }
  const Checkpoint ckpt = load_checkpoint(inv.paths.checkpoint);
  const auto pairs = load_sts(inv.paths.pairs, ckpt.params.vocab(), inv.cfg.max_seq_len);
  std::vector<ReportRow> rows{{"sts_spearman", stem(inv.paths.pairs), sts_spearman(ckpt.params, pairs)}};
  if (!inv.paths.teachers.empty()) {
    rows.push_back({"ensemble_spearman", stem(inv.paths.pairs), ensemble_eval(load_teachers(inv.paths), pairs)});
  }
  for (const auto& r : rows) out << r.name << ' ' << r.split << ' ' << r.value << '\n';
  if (dir) write_report_csv((*dir / "report.csv").string(), rows);
  return 0;
}

// Several reshuffled passes over a corpus, at most `limit` batches per pass.
std::vector<SentenceBatch> probe_batches(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                                         std::size_t passes, std::size_t limit) {
  std::vector<SentenceBatch> out;
  for (std::size_t e = 0; e < passes; ++e) {
    auto batches = batch_iter(corpus, n, seed, e);
    if (batches.size() > limit) batches.resize(limit);
    out.insert(out.end(), batches.begin(), batches.end());
  }
  return out;
}

int cmd_diagnose(const Invocation& inv, std::ostream& out) {
  if (inv.paths.checkpoint.empty()) throw InputError("--checkpoint is required");
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  const DataDir data = load_data(inv, true);
  const Checkpoint ckpt = load_checkpoint(inv.paths.checkpoint);
  const std::size_t n = inv.cfg.train.distill.batch_size;
  const std::uint64_t probe_seed = derive_seed(inv.cfg.train.seed, 0x70726f6265ULL);
  const auto test_batches = probe_batches(data.test, n, probe_seed, 10, data.test.size() / n);
  const auto train_batches = probe_batches(data.train, n, probe_seed, 10, data.test.size() / n);

  DiagnosticsReport report = diagnose_model(ckpt.params, train_batches, data.test_pairs);
  if (!inv.paths.teachers.empty()) {
    const TeacherEnsemble teachers = load_teachers(inv.paths);
    report.loss_gaps.push_back(
        {"checkpoint", loss_gap_report(ckpt.params, teachers, train_batches, test_batches, inv.cfg.train.distill)});
    if (teachers.size() >= 2) {
      const TeacherSpread spread = cross_teacher_spread(teachers, train_batches);
      report.differential_entropy.push_back({"first_order", differential_entropy(spread.first_order_std)});
      report.differential_entropy.push_back({"second_order", differential_entropy(spread.second_order_std)});
      report.cross_teacher_spearman = cross_teacher_spearman(teachers, train_batches, inv.cfg.top_k);
    }
  }
  report.validate();
  write_report_csv((dir / "report.csv").string(), report.rows());
  write_sharpness_csv((dir / "sharpness.csv").string(), report.curves);
  out << "kl first-order " << report.kl_first << ", second-order " << report.kl_second << "; wrote "
      << (dir / "report.csv").string() << '\n';
  return 0;
}

std::vector<double> parse_grid(const std::string& text, const char* name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Settings tmp{{name, trim(item)}};
    out.push_back(as_double(tmp, name));
  }
  if (out.empty()) throw InputError(std::string(name) + " grid is empty");
  return out;
}

int cmd_sweep(const Invocation& inv, std::ostream& out) {
  const fs::path dir = require_out(inv.paths);
  write_manifest(dir, inv);
  const TeacherEnsemble teachers = load_teachers(inv.paths);
  const DataDir data = load_data(inv, false);
  const auto ps = parse_grid(inv.paths.p_grid, "p-grid");
  const auto lambdas = parse_grid(inv.paths.lambda_grid, "lambda-grid");
  const auto temps = parse_grid(inv.paths.temperature_grid, "temperature-grid");

  struct Cell {
    std::string grid;
    TrainConfig cfg;
  };
  std::vector<Cell> cells;
  for (double p : ps) {
    TrainConfig c = inv.cfg.train;
    c.distill.p = p;
    c.shuffle = GroupPShuffle{p};
    cells.push_back({"p", c});
  }
  for (double l : lambdas) {
    TrainConfig c = inv.cfg.train;
    c.distill.lambda = l;
    cells.push_back({"lambda", c});
  }
  for (double ts : temps) {
    for (double tt : temps) {
      TrainConfig c = inv.cfg.train;
      c.distill.tau_s = ts;
      c.distill.tau_t = tt;
      cells.push_back({"temperature", c});
    }
  }
  std::ofstream grid(dir / "grid.csv");
  if (!grid) throw IoError("cannot write grid.csv");
  grid << "grid,shuffle,p,lambda,tau_s,tau_t,dev_spearman,test_spearman\n";
  for (const auto& cell : cells) {
    const TrainResult run = distill_student(data.train, data.dev, teachers, cell.cfg);
    const double test = sts_spearman(run.best.params, data.test_pairs);
    const char* shuffle = std::holds_alternative<GroupPShuffle>(cell.cfg.shuffle)   ? "group-p"
                          : std::holds_alternative<RankIntervalShuffle>(cell.cfg.shuffle) ? "rank-interval"
                                                                                         : "none";
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", cell.grid.c_str(), shuffle,
                  cell.cfg.distill.p, cell.cfg.distill.lambda, cell.cfg.distill.tau_s, cell.cfg.distill.tau_t,
                  run.best.dev_score, test);
    grid << line;
    out << line;
  }
  if (!grid) throw IoError("failed writing grid.csv");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    out << usage();
    return 2;
  }
  CLI::App app{"Contrastive teachers, distilled students and variance diagnostics", "distillab"};
  app.require_subcommand(1);

  Paths paths;
  Settings flags;
  std::map<std::string, std::string> flag_storage;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gen-data", "write synthetic corpora and pair files"},
      {"train-teacher", "contrastive training of one teacher"},
      {"distill", "distill a student from teacher checkpoints"},
      {"self-train", "teachers followed by rounds of ensemble distillation"},
      {"evaluate", "Spearman of a checkpoint on a pair file"},
      {"diagnose", "variance diagnostics"},
      {"sweep", "hyperparameter grid over p, lambda and temperatures"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", paths.config, "key=value settings file");
    sub->add_option("--out", paths.out, "output directory");
    const std::string command = name;
    if (command != "gen-data") sub->add_option("--data", paths.data, "directory written by gen-data");
    if (command == "evaluate" || command == "diagnose") {
      sub->add_option("--checkpoint", paths.checkpoint, "encoder checkpoint");
    }
    if (command == "evaluate") sub->add_option("--pairs", paths.pairs, "TSV pair file");
    if (command == "distill" || command == "evaluate" || command == "diagnose" || command == "sweep") {
      sub->add_option("--teachers", paths.teachers, "teacher checkpoints")->delimiter(',');
    }
    if (command == "sweep") {
      sub->add_option("--p-grid", paths.p_grid, "comma-separated p values");
      sub->add_option("--lambda-grid", paths.lambda_grid, "comma-separated lambda values");
      sub->add_option("--temperature-grid", paths.temperature_grid, "values tried for both tau-s and tau-t");
    }
    for (const auto& key : config_keys()) {
      sub->add_option(std::string("--") + key.key, flag_storage[key.key], key.help);
    }
    subs.push_back(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << usage();
    return 2;
  }

  Invocation inv;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) inv.command = commands[i].first;
  }
  CLI::App* sub = app.get_subcommand(inv.command);
  for (const auto& key : config_keys()) {
    if (sub->count(std::string("--") + key.key) > 0) flags[key.key] = flag_storage[key.key];
  }
  inv.paths = paths;

  Settings file;
  try {
    if (!paths.config.empty()) file = parse_config(read_text(paths.config));
  } catch (const ParseError& e) {
    err << "error: " << paths.config << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    std::optional<std::string> env_seed;
    if (const char* s = std::getenv("DLAB_SEED"); s != nullptr && *s != '\0') env_seed = s;
    inv.settings = layer_settings(file, env_seed, flags);
    inv.cfg = resolve(inv.settings);

    if (inv.command == "gen-data") return cmd_gen_data(inv, out);
    if (inv.command == "train-teacher") return cmd_train_teacher(inv, out);
    if (inv.command == "distill") return cmd_distill(inv, out);
    if (inv.command == "self-train") return cmd_self_train(inv, out);
    if (inv.command == "evaluate") return cmd_evaluate(inv, out);
    if (inv.command == "diagnose") return cmd_diagnose(inv, out);
    return cmd_sweep(inv, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dlab::cli
