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

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "distillab/autodiff.hpp"
#include "distillab/error.hpp"
#include "distillab/gradcheck.hpp"
#include "distillab/matrix.hpp"
#include "distillab/rng.hpp"
#include "test_support.hpp"

namespace dlab {
namespace {

using testing::random_matrix;

// ---------------------------------------------------------------- Matrix

TEST(MatrixTest, RejectsEmptyShapes) {
  EXPECT_THROW(Matrix(0, 3), ShapeError);
  EXPECT_THROW(Matrix(2, 0), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST(MatrixTest, MatmulMatchesHandComputation) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, Matrix(3, 1)), ShapeError);
}

TEST(MatrixTest, TransposedProductsAgreeWithExplicitTranspose) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_matrix(1 + trial % 4, 3, gen);
    const Matrix b = random_matrix(2 + trial % 3, 3, gen);
    const Matrix nt = matmul_nt(a, b);
    const Matrix ref = matmul(a, transpose(b));
    for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.values()[i], ref.values()[i], 1e-14);
    const Matrix c = random_matrix(3, 1 + trial % 5, gen);
    const Matrix tn = matmul_tn(transpose(a), c);
    const Matrix ref2 = matmul(a, c);
    for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.values()[i], ref2.values()[i], 1e-14);
  }
}

TEST(MatrixTest, NormalizeRowsGivesUnitRowsAndNamesDegenerateRow) {
  const Matrix m = Matrix::from_rows({{3, 4}, {0, 2}});
  const Matrix n = l2_normalize_rows(m);
  EXPECT_DOUBLE_EQ(n(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(n(1, 1), 1.0);
  try {
    l2_normalize_rows(Matrix::from_rows({{1, 0}, {0, 0}}));
    FAIL() << "expected DegenerateEmbeddingError";
  } catch (const DegenerateEmbeddingError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
}

TEST(SoftmaxTest, HandExamples) {
  const auto half = softmax(std::vector<double>{0.0, 0.0}, 1.0);
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  const auto p = softmax(std::vector<double>{std::log(2.0), 0.0}, 1.0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, RejectsBadTemperatureAndNonFiniteInput) {
  EXPECT_THROW(softmax(std::vector<double>{1.0}, 0.0), ParameterError);
  EXPECT_THROW(softmax(std::vector<double>{1.0}, -1.0), ParameterError);
  EXPECT_THROW(softmax(std::vector<double>{NAN, 1.0}, 1.0), NumericError);
}

TEST(SoftmaxTest, SumsToOneForLargeInputsAndIsShiftInvariant) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> temp(0.01, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = testing::random_vector(1 + trial % 9, gen, -1e3, 1e3);
    const double t = temp(gen);
    const auto p = softmax(v, t);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double x : p) EXPECT_GE(x, 0.0);
    auto shifted = v;
    for (double& x : shifted) x += 37.5;
    const auto q = softmax(shifted, t);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(MatrixIoTest, RoundTripIsBitExact) {
  std::mt19937_64 gen(9);
  const Matrix m = random_matrix(3, 5, gen, -1e10, 1e10);
  std::stringstream buf;
  write_matrix(buf, m);
  EXPECT_EQ(read_matrix(buf), m);
}

TEST(MatrixIoTest, LayoutIsMagicVersionShapeThenLittleEndianDoubles) {
  std::stringstream buf;
  write_matrix(buf, Matrix::from_rows({{1.0, -2.0}}));
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 8u + 2u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "DLAB");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kMatrixFormatVersion);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);   // rows
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 2);  // cols
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[24 + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24 + 6]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[32 + 7]), 0xC0);  // -2.0
}

TEST(MatrixIoTest, RejectsBadMagicVersionAndTruncation) {
  std::stringstream good;
  write_matrix(good, Matrix(2, 2, 1.5));
  const std::string bytes = good.str();

  std::stringstream magic("XLAB" + bytes.substr(4));
  EXPECT_THROW(read_matrix(magic), IoError);

  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  std::stringstream version(wrong_version);
  EXPECT_THROW(read_matrix(version), IoError);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_matrix(truncated), IoError);
}

// ---------------------------------------------------------------- RNG

TEST(PhiloxTest, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStreamTest, SameSeedAndStreamReplay) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStreamTest, SplittingDoesNotDisturbParent) {
  RngStream a(42), b(42);
  (void)a.split(3).next_u64();
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(RngStream(42).split(1).next_u64(), RngStream(42).split(2).next_u64());
}

TEST(RngStreamTest, DrawsStayInRange) {
  RngStream r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  EXPECT_THROW(r.below(0), ParameterError);
}

TEST(RngStreamTest, NormalAndGammaMomentsAreRoughlyRight) {
  RngStream r(2);
  const int n = 20000;
  double s = 0.0, ss = 0.0, g = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
    g += r.gamma(0.3);
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(ss / n, 1.0, 0.04);
  EXPECT_NEAR(g / n, 0.3, 0.03);
}

TEST(RngStreamTest, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(5, a, b));
  EXPECT_EQ(seen.size(), 400u);
}

// ---------------------------------------------------------------- autodiff

TEST(AutodiffTest, SquareHasGradientSix) {
  ad::Graph g;
  ad::Var x = g.input(Matrix(1, 1, 3.0));
  ad::Var y = ad::weighted_sum(ad::matmul(x, x), Matrix(1, 1, 1.0));
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)(0, 0), 6.0);
}

TEST(AutodiffTest, BackwardNeedsScalarRoot) {
  ad::Graph g;
  ad::Var x = g.input(Matrix(2, 2, 1.0));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(AutodiffTest, InjectedCycleIsAContractError) {
  ad::Graph g;
  ad::Var x = g.input(Matrix(1, 1, 1.0));
  ad::Var a = ad::scale(x, 2.0);
  ad::Var b = ad::scale(a, 3.0);
  ad::Var root = ad::sum(b);
  g.debug_set_parents(a.id, {b.id});
  EXPECT_THROW(g.backward(root), ContractError);
}

TEST(AutodiffTest, LogOfNonPositiveIsNumericError) {
  ad::Graph g;
  ad::Var x = g.input(Matrix::from_rows({{1.0, 0.0}}));
  EXPECT_THROW(ad::log(x), NumericError);
}

TEST(AutodiffTest, GradOfUntouchedNodeIsAContractError) {
  ad::Graph g;
  ad::Var x = g.input(Matrix(1, 1, 1.0));
  ad::Var unused = g.input(Matrix(1, 1, 1.0));
  g.backward(ad::sum(x));
  EXPECT_THROW(g.grad(unused), ContractError);
}

TEST(AutodiffTest, RepeatedBackwardIsDeterministic) {
  std::mt19937_64 gen(3);
  ad::Graph g;
  ad::Var x = g.input(random_matrix(3, 3, gen));
  ad::Var loss = ad::weighted_sum(ad::log(ad::softmax_rows(x, 0.5)), random_matrix(3, 3, gen));
  g.backward(loss);
  const Matrix first = g.grad(x);
  g.backward(loss);
  EXPECT_EQ(g.grad(x), first);
}

// One objective per differentiable op: the op's output contracted with fixed
// random weights, so every output entry contributes to the gradient.
struct OpCase {
  const char* name;
  std::size_t inputs;
  std::function<ad::Var(std::vector<ad::Var>&, std::mt19937_64&)> build;
  std::function<std::vector<Matrix>(std::mt19937_64&)> make_inputs;
};

double check_op(const OpCase& op, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<Matrix> params = op.make_inputs(gen);
  const std::uint64_t build_seed = gen();
  Objective f = [&](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    std::mt19937_64 local(build_seed);
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (const auto& m : p) vars.push_back(g.input(m));
    ad::Var out = op.build(vars, local);
    ad::Var loss = ad::weighted_sum(out, random_matrix(out.value().rows(), out.value().cols(), local));
    if (grads) {
      g.backward(loss);
      grads->clear();
      for (auto v : vars) grads->push_back(g.grad(v));
    }
    return loss.value()(0, 0);
  };
  return finite_diff_check(f, params, 1e-6);
}

class OpGradientTest : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases() {
  auto shape = [](std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    return [=](std::mt19937_64& g) { return std::vector<Matrix>{random_matrix(r, c, g, lo, hi)}; };
  };
  return {
      {"matmul", 2, [](auto& v, auto&) { return ad::matmul(v[0], v[1]); },
       [](auto& g) { return std::vector<Matrix>{random_matrix(3, 4, g), random_matrix(4, 2, g)}; }},
      {"transpose", 1, [](auto& v, auto&) { return ad::transpose(v[0]); }, shape(3, 2)},
      {"row_normalize", 1, [](auto& v, auto&) { return ad::l2_normalize_rows(v[0]); }, shape(3, 4)},
      {"softmax", 1, [](auto& v, auto&) { return ad::softmax_rows(v[0], 0.7); }, shape(3, 4)},
      {"log", 1, [](auto& v, auto&) { return ad::log(v[0]); }, shape(2, 3, 0.5, 2.0)},
      {"sum", 1, [](auto& v, auto&) { return ad::scale(ad::sum(v[0]), 1.0); }, shape(2, 3)},
      {"scale", 1, [](auto& v, auto&) { return ad::scale(v[0], -2.5); }, shape(2, 3)},
      {"add", 2, [](auto& v, auto&) { return ad::add(v[0], v[1]); },
       [](auto& g) { return std::vector<Matrix>{random_matrix(2, 3, g), random_matrix(2, 3, g)}; }},
      {"add_row", 2, [](auto& v, auto&) { return ad::add_row(v[0], v[1]); },
       [](auto& g) { return std::vector<Matrix>{random_matrix(3, 4, g), random_matrix(1, 4, g)}; }},
      {"tanh", 1, [](auto& v, auto&) { return ad::tanh(v[0]); }, shape(3, 3, -2.0, 2.0)},
      {"dropout_mask_apply", 1,
       [](auto& v, auto& g) {
         Matrix mask = random_matrix(3, 3, g, 0.0, 1.0);
         for (double& m : mask.values()) m = m < 0.3 ? 0.0 : 1.0 / 0.7;
         return ad::dropout_mask_apply(v[0], mask);
       },
       shape(3, 3)},
      {"drop_diagonal", 1, [](auto& v, auto&) { return ad::drop_diagonal(v[0]); }, shape(4, 4)},
  };
}

TEST_P(OpGradientTest, MatchesFiniteDifferencesOnRandomInstances) {
  const OpCase op = op_cases()[static_cast<std::size_t>(GetParam())];
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, check_op(op, seed));
  EXPECT_LE(worst, 1e-4) << op.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradientTest, ::testing::Range(0, 12),
                         [](const ::testing::TestParamInfo<int>& info) {
                           return std::string(op_cases()[static_cast<std::size_t>(info.param)].name);
                         });

// ---------------------------------------------------------------- gradcheck

TEST(FiniteDiffCheckTest, QuadraticMatchesTightly) {
  Objective f = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    double v = 0.0;
    Matrix g(p[0].rows(), p[0].cols());
    for (std::size_t i = 0; i < p[0].size(); ++i) {
      const double x = p[0].values()[i];
      v += 1.5 * x * x;
      g.values()[i] = 3.0 * x;
    }
    if (grads) *grads = {g};
    return v;
  };
  std::mt19937_64 gen(1);
  EXPECT_LE(finite_diff_check(f, {random_matrix(3, 3, gen)}, 1e-5), 1e-7);
}

TEST(FiniteDiffCheckTest, NegatedGradientScoresTwo) {
  Objective f = [](std::span<const Matrix> p, std::vector<Matrix>* grads) {
    const double x = p[0](0, 0);
    if (grads) *grads = {Matrix(1, 1, -2.0 * x)};
    return x * x;
  };
  EXPECT_NEAR(finite_diff_check(f, {Matrix(1, 1, 0.7)}, 1e-5), 2.0, 1e-6);
}

TEST(FiniteDiffCheckTest, NonFiniteObjectiveIsNumericError) {
  Objective f = [](std::span<const Matrix>, std::vector<Matrix>* grads) {
    if (grads) *grads = {Matrix(1, 1)};
    return std::numeric_limits<double>::infinity();
  };
  EXPECT_THROW(finite_diff_check(f, {Matrix(1, 1)}, 1e-5), NumericError);
  EXPECT_THROW(finite_diff_check(f, {Matrix(1, 1)}, 0.0), ParameterError);
}

}  // namespace
}  // namespace dlab
