#include "recert/autodiff.hpp"
#include "recert/error.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace recert;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::mt19937_64& rng, int rows, int cols, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Tensor t(rows, cols);
  for (Eigen::Index k = 0; k < t.size(); ++k) t(k) = u(rng);
  return t;
}

// Keeps values away from kinks of abs/relu/max so that central
// differences are valid.
Tensor away_from_zero(std::mt19937_64& rng, int rows, int cols) {
  Tensor t = random_tensor(rng, rows, cols);
  for (Eigen::Index k = 0; k < t.size(); ++k) t(k) += t(k) >= 0 ? 0.2 : -0.2;
  return t;
}

}  // namespace

TEST(Autodiff, BackwardRequiresScalarLoss) {
  Tape tape;
  Tensor w = Tensor::Ones(2, 2);
  const Var x = tape.parameter(w);
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape tape;
  const Var a = tape.constant(Tensor::Ones(2, 2));
  const Var b = tape.constant(Tensor::Ones(2, 3));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::matmul(b, a), ShapeError);
}

TEST(Autodiff, UnusedParameterHasZeroGradient) {
  Tape tape;
  Tensor a_value = Tensor::Constant(1, 1, 3.0);
  Tensor b_value = Tensor::Constant(2, 2, 1.0);
  const Var a = tape.parameter(a_value);
  const Var b = tape.parameter(b_value);
  tape.backward(ad::mul(a, a));
  EXPECT_DOUBLE_EQ(tape.grad(a)(0, 0), 6.0);
  EXPECT_EQ(tape.grad(b), Tensor::Zero(2, 2));
}

TEST(Autodiff, TiesSplitGradientEvenly) {
  Tape tape;
  Tensor a_value = Tensor::Constant(1, 1, 2.0);
  Tensor b_value = Tensor::Constant(1, 1, 2.0);
  const Var a = tape.parameter(a_value);
  const Var b = tape.parameter(b_value);
  tape.backward(ad::maximum(a, b));
  EXPECT_DOUBLE_EQ(tape.grad(a)(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(tape.grad(b)(0, 0), 0.5);
}

TEST(Autodiff, KinksUseZeroSubgradient) {
  Tape tape;
  Tensor z = Tensor::Zero(1, 1);
  const Var x = tape.parameter(z);
  tape.backward(ad::relu(x) + ad::abs(x));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 0.0);
}

TEST(Autodiff, SigmoidAndSoftplusStayFiniteForLargeInputs) {
  Tape tape;
  Tensor v(1, 4);
  v << -800.0, -40.0, 40.0, 800.0;
  const Var x = tape.parameter(v);
  const Var s = ad::sigmoid(x);
  const Var p = ad::softplus(x);
  EXPECT_TRUE(s.value().allFinite());
  EXPECT_TRUE(p.value().allFinite());
  EXPECT_DOUBLE_EQ(p.value()(0, 3), 800.0);
  tape.backward(ad::sum(s) + ad::sum(p));
  EXPECT_TRUE(tape.grad(x).allFinite());
}

TEST(Autodiff, SegmentReductionRejectsEmptyGroup) {
  Tape tape;
  const Var a = tape.constant(Tensor::Ones(1, 3));
  const std::vector<int> segments{0, 0, 2};
  EXPECT_THROW(ad::segment_max(a, segments, 3), Error);
}

TEST(Autodiff, SegmentMaxPicksPerGroup) {
  Tape tape;
  Tensor v(2, 4);
  v << 1, 5, 2, 0,
       7, 3, 3, 9;
  const Var a = tape.constant(v);
  const std::vector<int> segments{0, 0, 1, 1};
  const Var m = ad::segment_max(a, segments, 2);
  Tensor expect(2, 2);
  expect << 5, 2,
            7, 9;
  EXPECT_EQ(m.value(), expect);
}

struct OpCase {
  const char* name;
  ad::ScalarFn fn;
  std::vector<std::pair<int, int>> shapes;
};

class AutodiffFiniteDiff : public ::testing::TestWithParam<int> {};

TEST_P(AutodiffFiniteDiff, AnalyticMatchesCentralDifferences) {
  std::mt19937_64 rng(100 + GetParam());
  const std::vector<int> cols{0, 2, 1, 2};
  const std::vector<int> ids{3, 0, 2};
  const std::vector<int> segments{1, 0, 1};
  const std::vector<OpCase> cases{
      {"mul_add_sub", [](Tape&, auto p) { return ad::sum(ad::mul(p[0], p[1]) - p[0] + p[1]); },
       {{3, 2}, {3, 2}}},
      {"matmul", [](Tape&, auto p) { return ad::sum(ad::matmul(p[0], p[1])); }, {{2, 3}, {3, 4}}},
      {"sigmoid_exp_log1p",
       [](Tape&, auto p) { return ad::sum(ad::log1p(ad::exp(ad::sigmoid(p[0])))); }, {{3, 3}}},
      {"softplus_scale", [](Tape&, auto p) { return ad::sum(ad::softplus(2.5 * p[0])); }, {{4, 1}}},
      {"relu_abs", [](Tape&, auto p) { return ad::sum(ad::relu(p[0]) + ad::abs(p[1])); },
       {{3, 2}, {3, 2}}},
      {"max_min",
       [](Tape&, auto p) {
         return ad::sum(ad::mul(ad::maximum(p[0], p[1]), ad::minimum(p[0], p[1])));
       },
       {{2, 3}, {2, 3}}},
      {"columns",
       [](Tape&, auto p) { return ad::dot(ad::mul_col(p[0], p[1]), ad::add_col(p[0], p[1])); },
       {{3, 4}, {3, 1}}},
      {"gather_embed",
       [cols, ids](Tape&, auto p) {
         return ad::sum(ad::exp(ad::gather_cols(p[0], cols))) + ad::sum(ad::embed_rows(p[1], ids));
       },
       {{2, 3}, {4, 2}}},
      {"concat",
       [](Tape&, auto p) {
         const std::vector<Var> h{p[0], p[1]};
         const std::vector<Var> v{p[0], p[2]};
         return ad::sum(ad::sigmoid(ad::hcat(h))) + ad::sum(ad::exp(ad::vcat(v)));
       },
       {{2, 2}, {2, 1}, {1, 2}}},
      {"segments",
       [segments](Tape&, auto p) {
         return ad::sum(ad::segment_max(p[0], segments, 2)) -
                ad::sum(ad::exp(ad::segment_min(p[0], segments, 2)));
       },
       {{2, 3}}},
      {"softmax_pick_reduce",
       [](Tape&, auto p) {
         const Var s = ad::softmax_rows(p[0]);
         return ad::pick(s, 1, 2) + ad::reduce_max(ad::mul(s, p[1]));
       },
       {{2, 4}, {2, 4}}},
  };
  for (const OpCase& c : cases) {
    std::vector<Tensor> params;
    for (auto [r, k] : c.shapes) params.push_back(away_from_zero(rng, r, k));
    EXPECT_LT(ad::finite_diff_check(c.fn, params, 1e-6), 1e-6) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, AutodiffFiniteDiff, ::testing::Range(0, 5));
