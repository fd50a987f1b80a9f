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
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distillab/encoder.hpp"

namespace dlab {

using Sentence = std::vector<std::uint32_t>;

enum class Split { train, dev, test };
const char* split_name(Split split);

struct Corpus {
  std::vector<Sentence> sentences;
  std::size_t vocab = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return sentences.size(); }
};

/// STS-style pair with a gold similarity in [0, 5].
struct ScoredPair {
  Sentence a;
  Sentence b;
  double gold = 0.0;
};

inline constexpr std::size_t kDefaultMaxSeqLen = 32;

struct GeneratorConfig {
  std::size_t topics = 16;
  std::size_t vocab = 2000;
  std::size_t train_sentences = 10000;
  std::size_t test_sentences = 1000;
  std::size_t dev_pairs = 1000;
  std::size_t test_pairs = 1000;
  std::size_t min_length = 16;
  std::size_t max_length = 32;
  double topic_concentration = 0.15;  // symmetric Dirichlet parameter
  double background_rate = 0.2;      // share of tokens drawn from topic-free words
  std::size_t background_words = 200;
  double zipf_exponent = 1.0;        // rank-frequency decay inside each topic
  std::uint64_t seed = 1;

  void validate() const;
};

struct LatentPair {
  std::vector<double> a;
  std::vector<double> b;
};

struct SyntheticData {
  Corpus train;
  Corpus test;
  std::vector<ScoredPair> dev;
  std::vector<ScoredPair> test_pairs;
  std::vector<LatentPair> dev_latent;   // topic mixtures behind each dev pair
  std::vector<LatentPair> test_latent;
};

/// Topic-model corpus: every sentence draws a Dirichlet topic mixture and
/// samples tokens from topic-specific Zipfian vocabularies plus shared
/// background words. Pair gold = 5 * cosine of the two latent mixtures; pairs
/// are stratified so each unit-width score bucket gets an equal share.
SyntheticData generate_corpus(const GeneratorConfig& cfg);

/// 5 * cosine of two nonnegative mixtures.
double gold_score(std::span<const double> a, std::span<const double> b);

/// FNV-1a hash of a token into `vocab` buckets.
std::uint32_t hash_token(std::string_view token, std::size_t vocab);

/// One sentence per line; blank lines skipped; sentences truncated to max_len.
/// Tokens spelled w<id> with id < vocab keep that id; any other token is hashed.
Corpus load_corpus(const std::string& path, std::size_t vocab,
                   std::size_t max_len = kDefaultMaxSeqLen, Split split = Split::train);

/// TSV rows "score<TAB>sentence1<TAB>sentence2"; ParseError names the line.
std::vector<ScoredPair> load_sts(const std::string& path, std::size_t vocab,
                                 std::size_t max_len = kDefaultMaxSeqLen);

void write_corpus(const std::string& path, const Corpus& corpus);
void write_sts(const std::string& path, const std::vector<ScoredPair>& pairs);

/// Seeded shuffle of the corpus for `epoch`, cut into floor(|corpus| / n)
/// batches of exactly n sentences.
std::vector<SentenceBatch> batch_iter(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                                      std::size_t epoch);

/// Batches of n sentences built from whole pairs (a, b adjacent), pairs in a
/// seeded order; trailing pairs that do not fill a batch are dropped.
std::vector<SentenceBatch> pair_batches(const std::vector<ScoredPair>& pairs, std::size_t n,
                                        std::uint64_t seed);

}  // namespace dlab
