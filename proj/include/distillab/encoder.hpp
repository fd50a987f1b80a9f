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
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "distillab/autodiff.hpp"
#include "distillab/matrix.hpp"

namespace dlab {

/// Widths of the three learned layers: token embeddings, tanh hidden layer,
/// and projection head output.
struct LayerDims {
  std::size_t token = 32;
  std::size_t hidden = 64;
  std::size_t output = 32;

  friend bool operator==(const LayerDims&, const LayerDims&) = default;
};

/// Bag-of-tokens sentence encoder: mean-pooled token embeddings, one tanh
/// hidden layer, and a linear projection head used only while training.
struct EncoderParams {
  Matrix token_embedding;  // V x token
  Matrix hidden_weight;    // token x hidden
  Matrix hidden_bias;      // 1 x hidden
  Matrix head_weight;      // hidden x output
  Matrix head_bias;        // 1 x output
  double dropout = 0.1;

  std::size_t vocab() const noexcept { return token_embedding.rows(); }
  LayerDims dims() const noexcept {
    return {token_embedding.cols(), hidden_weight.cols(), head_weight.cols()};
  }

  static constexpr std::size_t kTensorCount = 5;
  static const std::array<const char*, kTensorCount>& tensor_names();
  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;

  /// Throws ShapeError / ParameterError if the tensors disagree.
  void validate() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct SentenceBatch {
  std::vector<std::vector<std::uint32_t>> sentences;

  std::size_t size() const noexcept { return sentences.size(); }
};

/// One stochastic view of a batch: unit-norm rows.
struct EmbeddingBatch {
  Matrix view;
  std::uint64_t dropout_seed = 0;
};

EncoderParams init_params(std::size_t vocab, LayerDims dims, double dropout, std::uint64_t seed);

/// train: dropout + projection head (one contrastive view).
/// deterministic_head: projection head, no dropout (teacher logits).
/// eval: no dropout, projection head removed.
enum class EncodeMode { train, deterministic_head, eval };

EmbeddingBatch encode(const EncoderParams& params, const SentenceBatch& batch,
                      std::uint64_t dropout_seed, bool train_mode);
EmbeddingBatch encode(const EncoderParams& params, const SentenceBatch& batch, EncodeMode mode,
                      std::uint64_t dropout_seed = 0);

/// Two train-mode views with independent dropout streams split from `seed`.
std::pair<EmbeddingBatch, EmbeddingBatch> encode_pair(const EncoderParams& params,
                                                      const SentenceBatch& batch,
                                                      std::uint64_t seed);

/// Dropout seeds encode_pair uses for its first and second view.
std::pair<std::uint64_t, std::uint64_t> view_seeds(std::uint64_t seed);

/// N x V matrix whose row i averages the one-hot tokens of sentence i.
/// Throws InputError naming the sentence and position of an out-of-vocabulary id.
Matrix pooling_matrix(const SentenceBatch& batch, std::size_t vocab);

// Graph-mode encoding, used by training and gradient checks.

struct ParamVars {
  ad::Var token_embedding;
  ad::Var hidden_weight;
  ad::Var hidden_bias;
  ad::Var head_weight;
  ad::Var head_bias;

  std::array<ad::Var, EncoderParams::kTensorCount> all() const {
    return {token_embedding, hidden_weight, hidden_bias, head_weight, head_bias};
  }
};

ParamVars bind_params(ad::Graph& graph, const EncoderParams& params, bool requires_grad = true);

ad::Var encode_graph(ad::Graph& graph, const ParamVars& vars, const EncoderParams& params,
                     const SentenceBatch& batch, EncodeMode mode, std::uint64_t dropout_seed);

// Checkpoint file: a plain-text manifest (format tag, metadata lines, one
// "tensor <name> <rows> <cols>" line per tensor, "end") followed by the binary
// matrix serializations in manifest order. Doubles in the manifest are written
// as hex floats so they round-trip exactly.

using CheckpointMetadata = std::map<std::string, std::string>;

void write_encoder(std::ostream& out, const EncoderParams& params,
                   const CheckpointMetadata& metadata = {});
EncoderParams read_encoder(std::istream& in, CheckpointMetadata* metadata = nullptr);

void save_encoder(const std::string& path, const EncoderParams& params,
                  const CheckpointMetadata& metadata = {});
EncoderParams load_encoder(const std::string& path, CheckpointMetadata* metadata = nullptr);

std::string format_exact(double v);
double parse_exact(const std::string& text);

}  // namespace dlab
