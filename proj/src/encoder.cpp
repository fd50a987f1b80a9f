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

#include "distillab/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "distillab/error.hpp"
#include "distillab/rng.hpp"

namespace dlab {

namespace {

constexpr const char* kCheckpointTag = "DLAB-CHECKPOINT 1";

void fill_uniform(Matrix& m, double bound, RngStream& rng) {
  for (double& v : m.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, RngStream& rng) {
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace

const std::array<const char*, EncoderParams::kTensorCount>& EncoderParams::tensor_names() {
  static const std::array<const char*, kTensorCount> names = {
      "token_embedding", "hidden_weight", "hidden_bias", "head_weight", "head_bias"};
  return names;
}

std::array<Matrix*, EncoderParams::kTensorCount> EncoderParams::tensors() {
  return {&token_embedding, &hidden_weight, &hidden_bias, &head_weight, &head_bias};
}

std::array<const Matrix*, EncoderParams::kTensorCount> EncoderParams::tensors() const {
  return {&token_embedding, &hidden_weight, &hidden_bias, &head_weight, &head_bias};
}

void EncoderParams::validate() const {
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(dropout));
  }
  const auto d = dims();
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(std::string(name) + " is " + m.shape_string() + ", expected " +
                       std::to_string(r) + "x" + std::to_string(c));
    }
  };
  expect(hidden_weight, d.token, d.hidden, "hidden_weight");
  expect(hidden_bias, 1, d.hidden, "hidden_bias");
  expect(head_weight, d.hidden, d.output, "head_weight");
  expect(head_bias, 1, d.output, "head_bias");
}

EncoderParams init_params(std::size_t vocab, LayerDims dims, double dropout, std::uint64_t seed) {
  if (vocab == 0 || dims.token == 0 || dims.hidden == 0 || dims.output == 0) {
    throw ParameterError("encoder dimensions must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(dropout));
  }
  RngStream rng = RngStream(seed).split(StreamTag::init);
  EncoderParams p{Matrix(vocab, dims.token),      Matrix(dims.token, dims.hidden),
                  Matrix(1, dims.hidden),         Matrix(dims.hidden, dims.output),
                  Matrix(1, dims.output),         dropout};
  // Embedding rows act like a layer fed by the token dimension itself.
  fill_uniform(p.token_embedding, 1.0 / std::sqrt(static_cast<double>(dims.token)), rng);
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(dims.token));
  fill_uniform(p.hidden_weight, hidden_bound, rng);
  fill_uniform(p.hidden_bias, hidden_bound, rng);
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  fill_uniform(p.head_weight, head_bound, rng);
  fill_uniform(p.head_bias, head_bound, rng);
  return p;
}

Matrix pooling_matrix(const SentenceBatch& batch, std::size_t vocab) {
  if (batch.size() == 0) throw InputError("empty sentence batch");
  Matrix pool(batch.size(), vocab);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& sentence = batch.sentences[i];
    if (sentence.empty()) throw InputError("sentence " + std::to_string(i) + " is empty");
    const double w = 1.0 / static_cast<double>(sentence.size());
    for (std::size_t t = 0; t < sentence.size(); ++t) {
      if (sentence[t] >= vocab) {
        throw InputError("token id " + std::to_string(sentence[t]) + " at sentence " +
                         std::to_string(i) + ", position " + std::to_string(t) +
                         " is outside the vocabulary of " + std::to_string(vocab));
      }
      pool(i, sentence[t]) += w;
    }
  }
  return pool;
}

ParamVars bind_params(ad::Graph& graph, const EncoderParams& params, bool requires_grad) {
  return {graph.input(params.token_embedding, requires_grad),
          graph.input(params.hidden_weight, requires_grad),
          graph.input(params.hidden_bias, requires_grad),
          graph.input(params.head_weight, requires_grad),
          graph.input(params.head_bias, requires_grad)};
}

ad::Var encode_graph(ad::Graph& graph, const ParamVars& vars, const EncoderParams& params,
                     const SentenceBatch& batch, EncodeMode mode, std::uint64_t dropout_seed) {
  const std::size_t n = batch.size();
  const auto dims = params.dims();
  ad::Var pooled = ad::matmul(graph.constant(pooling_matrix(batch, params.vocab())),
                              vars.token_embedding);
  const bool use_dropout = mode == EncodeMode::train && params.dropout > 0.0;
  RngStream rng = RngStream(dropout_seed).split(StreamTag::dropout);
  if (use_dropout) {
    pooled = ad::dropout_mask_apply(pooled, dropout_mask(n, dims.token, params.dropout, rng));
  }
  ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(pooled, vars.hidden_weight), vars.hidden_bias));
  if (mode == EncodeMode::eval) return ad::l2_normalize_rows(hidden);
  if (use_dropout) {
    hidden = ad::dropout_mask_apply(hidden, dropout_mask(n, dims.hidden, params.dropout, rng));
  }
  ad::Var projected = ad::add_row(ad::matmul(hidden, vars.head_weight), vars.head_bias);
  return ad::l2_normalize_rows(projected);
}

EmbeddingBatch encode(const EncoderParams& params, const SentenceBatch& batch, EncodeMode mode,
                      std::uint64_t dropout_seed) {
  ad::Graph graph;
  const ParamVars vars = bind_params(graph, params, false);
  ad::Var out = encode_graph(graph, vars, params, batch, mode, dropout_seed);
  return {out.value(), dropout_seed};
}

EmbeddingBatch encode(const EncoderParams& params, const SentenceBatch& batch,
                      std::uint64_t dropout_seed, bool train_mode) {
  return encode(params, batch, train_mode ? EncodeMode::train : EncodeMode::eval, dropout_seed);
}

std::pair<std::uint64_t, std::uint64_t> view_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 1), derive_seed(seed, 2)};
}

std::pair<EmbeddingBatch, EmbeddingBatch> encode_pair(const EncoderParams& params,
                                                      const SentenceBatch& batch,
                                                      std::uint64_t seed) {
  const auto [s1, s2] = view_seeds(seed);
  return {encode(params, batch, EncodeMode::train, s1), encode(params, batch, EncodeMode::train, s2)};
}

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_exact(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw IoError("bad numeric field '" + text + "'");
  return v;
}

void write_encoder(std::ostream& out, const EncoderParams& params,
                   const CheckpointMetadata& metadata) {
  params.validate();
  const auto d = params.dims();
  out << kCheckpointTag << '\n';
  out << "dropout " << format_exact(params.dropout) << '\n';
  out << "dims " << params.vocab() << ' ' << d.token << ' ' << d.hidden << ' ' << d.output << '\n';
  for (const auto& [key, value] : metadata) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw IoError("checkpoint metadata must be single-line without spaces in keys");
    }
    out << "meta " << key << ' ' << value << '\n';
  }
  const auto names = EncoderParams::tensor_names();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << "tensor " << names[i] << ' ' << tensors[i]->rows() << ' ' << tensors[i]->cols() << '\n';
  }
  out << "end\n";
  for (const Matrix* m : tensors) write_matrix(out, *m);
  if (!out) throw IoError("failed writing checkpoint");
}

EncoderParams read_encoder(std::istream& in, CheckpointMetadata* metadata) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointTag) throw IoError("not a checkpoint file");
  EncoderParams params;
  bool saw_dropout = false;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> manifest;
  std::size_t vocab = 0;
  LayerDims dims{};
  while (std::getline(in, line) && line != "end") {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "dropout") {
      std::string v;
      fields >> v;
      params.dropout = parse_exact(v);
      saw_dropout = true;
    } else if (kind == "dims") {
      fields >> vocab >> dims.token >> dims.hidden >> dims.output;
    } else if (kind == "meta") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields >> std::ws, value);
      if (metadata) (*metadata)[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t r = 0, c = 0;
      fields >> name >> r >> c;
      manifest.push_back({name, {r, c}});
    } else {
      throw IoError("unknown checkpoint manifest line: " + line);
    }
    if (!fields && !fields.eof()) throw IoError("malformed checkpoint manifest line: " + line);
  }
  if (line != "end" || !saw_dropout) throw IoError("truncated checkpoint manifest");
  const auto names = EncoderParams::tensor_names();
  if (manifest.size() != names.size()) throw IoError("checkpoint tensor count mismatch");
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (manifest[i].first != names[i]) {
      throw IoError("checkpoint tensor " + manifest[i].first + " where " + names[i] + " expected");
    }
    Matrix m = read_matrix(in);
    if (m.rows() != manifest[i].second.first || m.cols() != manifest[i].second.second) {
      throw IoError("checkpoint tensor " + manifest[i].first + " disagrees with its manifest");
    }
    *tensors[i] = std::move(m);
  }
  params.validate();
  if (params.vocab() != vocab || !(params.dims() == dims)) {
    throw IoError("checkpoint dims line disagrees with tensors");
  }
  return params;
}

void save_encoder(const std::string& path, const EncoderParams& params,
                  const CheckpointMetadata& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_encoder(out, params, metadata);
}

EncoderParams load_encoder(const std::string& path, CheckpointMetadata* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return read_encoder(in, metadata);
}

}  // namespace dlab
