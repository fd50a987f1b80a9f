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

#include "distillab/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "distillab/error.hpp"
#include "distillab/rng.hpp"

namespace dlab {

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

void GeneratorConfig::validate() const {
  if (topics < 2) throw ParameterError("generator needs at least 2 topics");
  if (vocab < topics) throw ParameterError("generator vocab must be at least the topic count");
  if (background_words >= vocab || vocab - background_words < topics) {
    throw ParameterError("background words leave too few topic words");
  }
  if (min_length < 1 || min_length > max_length) {
    throw ParameterError("sentence length range must satisfy 1 <= min <= max");
  }
  if (!(zipf_exponent >= 0.0)) throw ParameterError("zipf exponent must be nonnegative");
  if (!(topic_concentration > 0.0)) throw ParameterError("topic concentration must be positive");
  if (!(background_rate >= 0.0 && background_rate < 1.0)) {
    throw ParameterError("background rate must lie in [0, 1)");
  }
}

double gold_score(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (!(na > 0.0) || !(nb > 0.0)) throw ParameterError("latent mixtures must be nonzero");
  return std::clamp(5.0 * dot(a, b) / (na * nb), 0.0, 5.0);
}

namespace {

// Categorical sampler over fixed weights (inverse CDF by binary search).
class Categorical {
 public:
  explicit Categorical(std::vector<double> weights) : cdf_(std::move(weights)) {
    double total = 0.0;
    for (double& w : cdf_) {
      total += w;
      w = total;
    }
    for (double& w : cdf_) w /= total;
  }
  std::size_t sample(RngStream& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = std::pow(static_cast<double>(r + 1), -exponent);
  return w;
}

class TopicModel {
 public:
  TopicModel(const GeneratorConfig& cfg, RngStream& rng) : cfg_(cfg), background_(zipf_weights(cfg.background_words, 1.0)) {
    std::vector<std::uint32_t> words(cfg.vocab - cfg.background_words);
    std::iota(words.begin(), words.end(), static_cast<std::uint32_t>(cfg.background_words));
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.below(i)]);
    const std::size_t per_topic = words.size() / cfg.topics;
    for (std::size_t k = 0; k < cfg.topics; ++k) {
      const auto first = words.begin() + static_cast<std::ptrdiff_t>(k * per_topic);
      const auto last = k + 1 == cfg.topics ? words.end() : first + static_cast<std::ptrdiff_t>(per_topic);
      topic_words_.emplace_back(first, last);
      topic_dists_.emplace_back(zipf_weights(topic_words_.back().size(), cfg.zipf_exponent));
    }
  }

  std::vector<double> draw_mixture(RngStream& rng) const {
    std::vector<double> theta(cfg_.topics);
    for (;;) {
      double total = 0.0;
      for (double& t : theta) {
        t = rng.gamma(cfg_.topic_concentration);
        total += t;
      }
      if (total > 0.0) {
        for (double& t : theta) t /= total;
        return theta;
      }
    }
  }

  Sentence draw_sentence(const std::vector<double>& theta, RngStream& rng) const {
    const Categorical topic(theta);
    const std::size_t length =
        cfg_.min_length + static_cast<std::size_t>(rng.below(cfg_.max_length - cfg_.min_length + 1));
    Sentence s(length);
    for (auto& tok : s) {
      if (rng.uniform() < cfg_.background_rate) {
        tok = static_cast<std::uint32_t>(background_.sample(rng));
      } else {
        const std::size_t k = topic.sample(rng);
        tok = topic_words_[k][topic_dists_[k].sample(rng)];
      }
    }
    return s;
  }

 private:
  const GeneratorConfig& cfg_;
  Categorical background_;
  std::vector<std::vector<std::uint32_t>> topic_words_;
  std::vector<Categorical> topic_dists_;
};

std::string sentence_key(const Sentence& s) {
  return std::string(reinterpret_cast<const char*>(s.data()), s.size() * sizeof(std::uint32_t));
}

constexpr std::size_t kBuckets = 5;
constexpr int kPairAttempts = 1000;

class Generator {
 public:
  Generator(const GeneratorConfig& cfg)
      : cfg_(cfg), rng_(RngStream(cfg.seed).split(StreamTag::data)), model_(cfg, rng_) {}

  Sentence unique_sentence(const std::vector<double>& theta) {
    for (;;) {
      Sentence s = model_.draw_sentence(theta, rng_);
      if (seen_.insert(sentence_key(s)).second) return s;
    }
  }

  Corpus corpus(std::size_t count, Split split) {
    Corpus c{{}, cfg_.vocab, split};
    c.sentences.reserve(count);
    for (std::size_t i = 0; i < count; ++i) c.sentences.push_back(unique_sentence(model_.draw_mixture(rng_)));
    return c;
  }

  void pairs(std::size_t count, std::vector<ScoredPair>& out, std::vector<LatentPair>& latent) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t bucket = i % kBuckets;
      LatentPair lp = latent_pair(bucket);
      ScoredPair pair{unique_sentence(lp.a), unique_sentence(lp.b), gold_score(lp.a, lp.b)};
      out.push_back(std::move(pair));
      latent.push_back(std::move(lp));
    }
    // Interleave buckets randomly.
    for (std::size_t i = out.size(); i > 1; --i) {
      const std::size_t j = rng_.below(i);
      std::swap(out[i - 1], out[j]);
      std::swap(latent[i - 1], latent[j]);
    }
  }

 private:
  // Blends a fresh mixture toward `a` until the cosine hits a target drawn
  // uniformly inside the requested score bucket.
  LatentPair latent_pair(std::size_t bucket) {
    for (int attempt = 0; attempt < kPairAttempts; ++attempt) {
      auto a = model_.draw_mixture(rng_);
      const double target = (static_cast<double>(bucket) + rng_.uniform()) / 5.0;
      auto other = model_.draw_mixture(rng_);
      auto cosine_at = [&](double alpha) {
        std::vector<double> b(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) b[k] = alpha * a[k] + (1.0 - alpha) * other[k];
        return std::pair{gold_score(a, b) / 5.0, b};
      };
      if (cosine_at(0.0).first > target) continue;
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cosine_at(mid).first < target ? lo : hi) = mid;
      }
      auto b = cosine_at(hi).second;
      const double total = std::accumulate(b.begin(), b.end(), 0.0);
      for (double& v : b) v /= total;
      return {std::move(a), std::move(b)};
    }
    throw GenerationError("could not reach score bucket " + std::to_string(bucket) +
                          " after " + std::to_string(kPairAttempts) +
                          " attempts; try more topics or a smaller topic concentration");
  }

  const GeneratorConfig& cfg_;
  RngStream rng_;
  TopicModel model_;
  std::unordered_set<std::string> seen_;
};

void check_bucket_coverage(const std::vector<ScoredPair>& pairs, const char* name) {
  if (pairs.size() < kBuckets) {
    throw GenerationError(std::string(name) + " needs at least " + std::to_string(kBuckets) +
                          " pairs to cover every score bucket; increase the pair count");
  }
  std::array<std::size_t, kBuckets> counts{};
  for (const auto& p : pairs) counts[std::min<std::size_t>(static_cast<std::size_t>(p.gold), kBuckets - 1)]++;
  for (std::size_t b = 0; b < kBuckets; ++b) {
    if (counts[b] * 10 < pairs.size()) {
      throw GenerationError(std::string(name) + " score bucket " + std::to_string(b) +
                            " holds fewer than 10% of pairs; increase the pair count");
    }
  }
}

}  // namespace

SyntheticData generate_corpus(const GeneratorConfig& cfg) {
  cfg.validate();
  Generator gen(cfg);
  SyntheticData data;
  data.train = gen.corpus(cfg.train_sentences, Split::train);
  data.test = gen.corpus(cfg.test_sentences, Split::test);
  gen.pairs(cfg.dev_pairs, data.dev, data.dev_latent);
  gen.pairs(cfg.test_pairs, data.test_pairs, data.test_latent);
  check_bucket_coverage(data.dev, "dev split");
  return data;
}

std::uint32_t hash_token(std::string_view token, std::size_t vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::uint32_t>(h % vocab);
}

namespace {

// "w<id>" with id < vocab is the generator's own spelling and maps back to id.
std::uint32_t token_id(const std::string& w, std::size_t vocab) {
  if (w.size() > 1 && w.size() <= 10 && w[0] == 'w' &&
      std::all_of(w.begin() + 1, w.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const std::uint64_t id = std::stoull(w.substr(1));
    if (id < vocab) return static_cast<std::uint32_t>(id);
  }
  return hash_token(w, vocab);
}

Sentence tokenize(const std::string& text, std::size_t vocab, std::size_t max_len) {
  Sentence s;
  std::istringstream words(text);
  std::string w;
  while (s.size() < max_len && words >> w) s.push_back(token_id(w, vocab));
  return s;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

void require_vocab(std::size_t vocab) {
  if (vocab == 0) throw ParameterError("vocab size must be positive");
}

}  // namespace

Corpus load_corpus(const std::string& path, std::size_t vocab, std::size_t max_len, Split split) {
  require_vocab(vocab);
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus file " + path);
  Corpus corpus{{}, vocab, split};
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (is_blank(line)) continue;
    corpus.sentences.push_back(tokenize(line, vocab, max_len));
  }
  if (in.bad()) throw IoError("error while reading " + path);
  if (corpus.sentences.empty()) throw InputError("corpus file " + path + " contains no sentences");
  return corpus;
}

std::vector<ScoredPair> load_sts(const std::string& path, std::size_t vocab, std::size_t max_len) {
  require_vocab(vocab);
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pair file " + path);
  std::vector<ScoredPair> pairs;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    line = strip_cr(line);
    if (is_blank(line)) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                                    std::to_string(fields.size()));
    }
    char* end = nullptr;
    const double score = std::strtod(fields[0].c_str(), &end);
    if (end == fields[0].c_str() || *end != '\0' || !std::isfinite(score)) {
      throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": bad score '" + fields[0] + "'");
    }
    if (score < 0.0 || score > 5.0) {
      throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": score " + fields[0] +
                                    " outside [0, 5]");
    }
    ScoredPair pair{tokenize(fields[1], vocab, max_len), tokenize(fields[2], vocab, max_len), score};
    if (pair.a.empty() || pair.b.empty()) {
      throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": empty sentence");
    }
    pairs.push_back(std::move(pair));
  }
  if (in.bad()) throw IoError("error while reading " + path);
  return pairs;
}

namespace {

void write_sentence(std::ostream& out, const Sentence& s) {
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " w" : "w") << s[i];
}

}  // namespace

void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& s : corpus.sentences) {
    write_sentence(out, s);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_sts(const std::string& path, const std::vector<ScoredPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[32];
  for (const auto& p : pairs) {
    std::snprintf(buf, sizeof buf, "%.6f", p.gold);
    out << buf << '\t';
    write_sentence(out, p.a);
    out << '\t';
    write_sentence(out, p.b);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::vector<SentenceBatch> batch_iter(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                                      std::size_t epoch) {
  if (n < 2) throw InputError("batch size must be at least 2, got " + std::to_string(n));
  if (n > corpus.size()) {
    throw InputError("batch size " + std::to_string(n) + " exceeds corpus size " +
                     std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream(seed).split(StreamTag::batching).split(epoch);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<SentenceBatch> batches(corpus.size() / n);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    batches[b].sentences.reserve(n);
    for (std::size_t k = 0; k < n; ++k) batches[b].sentences.push_back(corpus.sentences[order[b * n + k]]);
  }
  return batches;
}

std::vector<SentenceBatch> pair_batches(const std::vector<ScoredPair>& pairs, std::size_t n,
                                        std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InputError("pair batches need an even batch size of at least 2");
  if (n / 2 > pairs.size()) throw InputError("not enough pairs for one batch");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng = RngStream(seed).split(StreamTag::batching).split(0xB0A7);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t per_batch = n / 2;
  std::vector<SentenceBatch> batches(pairs.size() / per_batch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    for (std::size_t k = 0; k < per_batch; ++k) {
      const auto& p = pairs[order[b * per_batch + k]];
      batches[b].sentences.push_back(p.a);
      batches[b].sentences.push_back(p.b);
    }
  }
  return batches;
}

}  // namespace dlab
