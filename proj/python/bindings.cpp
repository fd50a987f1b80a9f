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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "distillab/cli.hpp"
#include "distillab/diagnostics.hpp"
#include "distillab/error.hpp"
#include "distillab/logit_transform.hpp"
#include "distillab/objectives.hpp"
#include "distillab/training.hpp"

namespace py = pybind11;
using namespace dlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

LogitMatrix logits_from(const Array& a) { return {from_numpy(a), LogitSource::student, 0}; }

SentenceBatch batch_from(const std::vector<std::vector<std::uint32_t>>& sentences) { return {sentences}; }

ShuffleMode shuffle_from(const std::string& mode, double p, std::size_t lo, std::size_t hi) {
  if (mode == "none") return NoShuffle{};
  if (mode == "group-p") return GroupPShuffle{p};
  if (mode == "rank-interval") return RankIntervalShuffle{lo, hi};
  throw InputError("unknown shuffle mode '" + mode + "'");
}

}  // namespace

PYBIND11_MODULE(_distillab, m) {
  m.doc() = "Contrastive sentence encoder, logit distillation and diagnostics.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<EnsembleError>(m, "EnsembleError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<DiagnosticError>(m, "DiagnosticError", base.ptr());
  py::register_exception<GenerationError>(m, "GenerationError", base.ptr());

  py::class_<GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init<>())
      .def_readwrite("topics", &GeneratorConfig::topics)
      .def_readwrite("vocab", &GeneratorConfig::vocab)
      .def_readwrite("train_sentences", &GeneratorConfig::train_sentences)
      .def_readwrite("test_sentences", &GeneratorConfig::test_sentences)
      .def_readwrite("dev_pairs", &GeneratorConfig::dev_pairs)
      .def_readwrite("test_pairs", &GeneratorConfig::test_pairs)
      .def_readwrite("min_length", &GeneratorConfig::min_length)
      .def_readwrite("max_length", &GeneratorConfig::max_length)
      .def_readwrite("topic_concentration", &GeneratorConfig::topic_concentration)
      .def_readwrite("background_rate", &GeneratorConfig::background_rate)
      .def_readwrite("background_words", &GeneratorConfig::background_words)
      .def_readwrite("zipf_exponent", &GeneratorConfig::zipf_exponent)
      .def_readwrite("seed", &GeneratorConfig::seed);

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("sentences", &Corpus::sentences)
      .def_readonly("vocab", &Corpus::vocab)
      .def("__len__", &Corpus::size);

  py::class_<ScoredPair>(m, "ScoredPair")
      .def(py::init([](Sentence a, Sentence b, double gold) { return ScoredPair{std::move(a), std::move(b), gold}; }),
           py::arg("a"), py::arg("b"), py::arg("gold"))
      .def_readonly("a", &ScoredPair::a)
      .def_readonly("b", &ScoredPair::b)
      .def_readonly("gold", &ScoredPair::gold);

  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("train", &SyntheticData::train)
      .def_readonly("test", &SyntheticData::test)
      .def_readonly("dev", &SyntheticData::dev)
      .def_readonly("test_pairs", &SyntheticData::test_pairs);

  m.def("generate_corpus", &generate_corpus, py::arg("config") = GeneratorConfig{});
  m.def("batch_iter", [](const Corpus& c, std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::vector<std::vector<std::uint32_t>>> out;
    for (auto& b : batch_iter(c, n, seed, epoch)) out.push_back(std::move(b.sentences));
    return out;
  }, py::arg("corpus"), py::arg("batch_size"), py::arg("seed"), py::arg("epoch") = 0);

  py::class_<LayerDims>(m, "LayerDims")
      .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("token") = 32, py::arg("hidden") = 64,
           py::arg("output") = 32)
      .def_readwrite("token", &LayerDims::token)
      .def_readwrite("hidden", &LayerDims::hidden)
      .def_readwrite("output", &LayerDims::output);

  py::class_<EncoderParams>(m, "EncoderParams")
      .def_property_readonly("vocab", &EncoderParams::vocab)
      .def_property_readonly("dims", &EncoderParams::dims)
      .def_readonly("dropout", &EncoderParams::dropout)
      .def("tensors", [](const EncoderParams& p) {
        py::dict out;
        const auto names = EncoderParams::tensor_names();
        const auto tensors = p.tensors();
        for (std::size_t k = 0; k < tensors.size(); ++k) out[names[k]] = to_numpy(*tensors[k]);
        return out;
      })
      .def("__eq__", [](const EncoderParams& a, const EncoderParams& b) { return a == b; });

  m.def("init_params", &init_params, py::arg("vocab"), py::arg("dims") = LayerDims{}, py::arg("dropout") = 0.1,
        py::arg("seed") = 1);
  m.def("encode", [](const EncoderParams& p, const std::vector<std::vector<std::uint32_t>>& sentences,
                     const std::string& mode, std::uint64_t seed) {
    const EncodeMode em = mode == "train"                ? EncodeMode::train
                          : mode == "deterministic_head" ? EncodeMode::deterministic_head
                          : mode == "eval"               ? EncodeMode::eval
                                                         : throw InputError("unknown encode mode '" + mode + "'");
    return to_numpy(encode(p, batch_from(sentences), em, seed).view);
  }, py::arg("params"), py::arg("sentences"), py::arg("mode") = "eval", py::arg("dropout_seed") = 0);

  m.def("similarity_logits", [](const Array& a, const Array& b) {
    return to_numpy(similarity_logits(EmbeddingBatch{from_numpy(a)}, EmbeddingBatch{from_numpy(b)}).values);
  }, py::arg("view1"), py::arg("view2"));
  m.def("contrastive_loss", [](const Array& l, double tau) { return contrastive_loss(logits_from(l), tau); },
        py::arg("logits"), py::arg("tau") = 0.05);
  m.def("distill_loss", [](const Array& s, const Array& t, double tau_s, double tau_t) {
    return distill_loss(logits_from(s), logits_from(t), tau_s, tau_t);
  }, py::arg("student"), py::arg("teacher"), py::arg("tau_s") = 0.02, py::arg("tau_t") = 0.01);
  m.def("combined_loss", &combined_loss, py::arg("cl"), py::arg("distill"), py::arg("lambda_") = 1.0);

  m.def("group_ids", [](const std::vector<double>& row, double p) { return group_by_cumulative({row, 0}, p).group; },
        py::arg("row"), py::arg("p"));
  m.def("group_p_shuffle", [](const std::vector<double>& row, double p, std::uint64_t seed) {
    RngStream rng(seed);
    return group_p_shuffle({row, 0}, p, rng).values;
  }, py::arg("row"), py::arg("p") = 0.1, py::arg("seed") = 0);
  m.def("teacher_logits", [](const EncoderParams& t, const std::vector<std::vector<std::uint32_t>>& sentences) {
    return to_numpy(teacher_logits(t, batch_from(sentences)).values);
  }, py::arg("teacher"), py::arg("sentences"));
  m.def("average_teachers", [](const std::vector<EncoderParams>& members,
                               const std::vector<std::vector<std::uint32_t>>& sentences, std::size_t threads) {
    return to_numpy(average_teachers(TeacherEnsemble{members}, batch_from(sentences), threads).values);
  }, py::arg("members"), py::arg("sentences"), py::arg("threads") = 1);

  py::class_<TrainResult>(m, "TrainResult")
      .def_property_readonly("params", [](const TrainResult& r) { return r.best.params; })
      .def_property_readonly("dev_score", [](const TrainResult& r) { return r.best.dev_score; })
      .def_property_readonly("best_step", [](const TrainResult& r) { return r.best.step; })
      .def_readonly("final_params", &TrainResult::final_params)
      .def_property_readonly("metrics_csv", [](const TrainResult& r) { return metrics_csv(r.metrics); });

  auto make_config = [](std::size_t steps, std::uint64_t seed, std::size_t batch_size, std::size_t eval_interval,
                        const LayerDims& dims, double lambda, const std::string& shuffle, double p,
                        std::size_t threads) {
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.distill.batch_size = batch_size;
    cfg.eval_interval = eval_interval;
    cfg.dims = dims;
    cfg.distill.lambda = lambda;
    cfg.distill.p = p;
    cfg.shuffle = shuffle_from(shuffle, p, 1, 12);
    cfg.threads = threads;
    return cfg;
  };
  m.def("train_teacher", [make_config](const Corpus& c, const std::vector<ScoredPair>& dev, std::size_t steps,
                                       std::uint64_t seed, std::size_t batch_size, std::size_t eval_interval,
                                       const LayerDims& dims) {
    py::gil_scoped_release release;
    return train_teacher(c, dev, make_config(steps, seed, batch_size, eval_interval, dims, 1.0, "none", 0.1, 1));
  }, py::arg("corpus"), py::arg("dev"), py::arg("steps"), py::arg("seed") = 1, py::arg("batch_size") = 64,
        py::arg("eval_interval") = 125, py::arg("dims") = LayerDims{});
  m.def("distill_student", [make_config](const Corpus& c, const std::vector<ScoredPair>& dev,
                                         const std::vector<EncoderParams>& teachers, std::size_t steps,
                                         std::uint64_t seed, std::size_t batch_size, std::size_t eval_interval,
                                         const LayerDims& dims, double lambda, const std::string& shuffle, double p,
                                         std::size_t threads) {
    py::gil_scoped_release release;
    return distill_student(c, dev, TeacherEnsemble{teachers},
                           make_config(steps, seed, batch_size, eval_interval, dims, lambda, shuffle, p, threads));
  }, py::arg("corpus"), py::arg("dev"), py::arg("teachers"), py::arg("steps"), py::arg("seed") = 1,
        py::arg("batch_size") = 64, py::arg("eval_interval") = 125, py::arg("dims") = LayerDims{},
        py::arg("lambda_") = 1.0, py::arg("shuffle") = "group-p", py::arg("p") = 0.1, py::arg("threads") = 1);

  m.def("save_checkpoint", [](const std::string& path, const EncoderParams& p, std::size_t round) {
    save_checkpoint(path, Checkpoint{p, round, 0.0, 0});
  }, py::arg("path"), py::arg("params"), py::arg("round") = 0);
  m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path).params; }, py::arg("path"));

  m.def("sts_spearman", &sts_spearman, py::arg("model"), py::arg("pairs"));
  m.def("ensemble_eval", [](const std::vector<EncoderParams>& members, const std::vector<ScoredPair>& pairs) {
    return ensemble_eval(TeacherEnsemble{members}, pairs);
  }, py::arg("members"), py::arg("pairs"));
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
        py::arg("x"), py::arg("y"));
  m.def("differential_entropy", &differential_entropy, py::arg("std"));
  m.def("gaussian_kl", [](double mean_a, double std_a, double mean_b, double std_b) {
    return gaussian_kl({mean_a, std_a}, {mean_b, std_b});
  }, py::arg("mean_a"), py::arg("std_a"), py::arg("mean_b"), py::arg("std_b"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int status;
    {
      py::gil_scoped_release release;
      status = cli::run(args, out, err);
    }
    return py::make_tuple(status, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line tool in-process; returns (status, stdout, stderr).");
}
