#include "recert/attention.hpp"
#include "recert/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace recert;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = u(rng);
  return m;
}

// Textbook softmax without max subtraction, written out directly.
Eigen::VectorXd naive_attention(const Eigen::VectorXd& q, const Eigen::MatrixXd& k,
                                const Eigen::MatrixXd& v) {
  Eigen::VectorXd num = Eigen::VectorXd::Zero(v.rows());
  double den = 0.0;
  for (Eigen::Index i = 0; i < k.cols(); ++i) {
    const double w = std::exp(q.dot(k.col(i)));
    num += w * v.col(i);
    den += w;
  }
  return num / den;
}

}  // namespace

TEST(Attention, EmptySequenceIsRejected) {
  const Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
  const Eigen::MatrixXd k(2, 0);
  const Eigen::MatrixXd v(2, 0);
  EXPECT_THROW(attention_softmax<double>(q, k, v), ShapeError);
  EXPECT_THROW(attention_recurrence<double>(q, k, v), ShapeError);
}

TEST(Attention, SingleTokenReturnsItsValue) {
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(2, 0.3);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Constant(2, 1, -1.0);
  Eigen::MatrixXd v(2, 1);
  v << 4.0, -2.0;
  EXPECT_EQ(attention_recurrence<double>(q, k, v), v.col(0));
}

TEST(Attention, TwoTokensMatchHandComputedWeights) {
  // Scores 0 and log 3 give weights 1/4 and 3/4.
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::MatrixXd k(1, 2);
  k << 0.0, std::log(3.0);
  Eigen::MatrixXd v(1, 2);
  v << 8.0, 4.0;
  EXPECT_NEAR(attention_recurrence<double>(q, k, v)(0), 5.0, 1e-14);
  EXPECT_NEAR(attention_softmax<double>(q, k, v)(0), 5.0, 1e-14);
}

TEST(Attention, RecurrenceMatchesNaiveSoftmax) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 16);
    const int d = 1 + static_cast<int>(rng() % 8);
    const Eigen::VectorXd q = random_matrix(rng, d, 1, 1.5);
    const Eigen::MatrixXd k = random_matrix(rng, d, n, 1.5);
    const Eigen::MatrixXd v = random_matrix(rng, d, n, 3.0);
    const Eigen::VectorXd expect = naive_attention(q, k, v);
    EXPECT_LT((attention_recurrence<double>(q, k, v) - expect).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((attention_softmax<double>(q, k, v) - expect).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Attention, GateWeightsSumToOneUpToRounding) {
  for (double z : {-700.0, -30.0, -1.0, 0.0, 0.5, 30.0, 700.0}) {
    EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST(Attention, LogDenominatorInvariantHoldsEveryStep) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const Eigen::VectorXd q = random_matrix(rng, 3, 1, 2.0);
    const Eigen::MatrixXd k = random_matrix(rng, 3, n, 2.0);
    const Eigen::MatrixXd v = random_matrix(rng, 2, n, 1.0);
    std::vector<double> g;
    attention_recurrence<double>(q, k, v, 1.0, &g);
    ASSERT_EQ(g.size(), static_cast<std::size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += std::exp(q.dot(k.col(i)));
      EXPECT_NEAR(std::exp(g[static_cast<std::size_t>(i)]) / total, 1.0, 1e-12);
    }
  }
}

TEST(Attention, HugeScoresStayFinite) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 10);
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 1.0);
    const Eigen::MatrixXd k = random_matrix(rng, 1, n, 1e4);
    const Eigen::MatrixXd v = random_matrix(rng, 3, n, 1.0);
    const Eigen::VectorXd r = attention_recurrence<double>(q, k, v);
    ASSERT_TRUE(r.allFinite());
    const Eigen::VectorXd s = attention_softmax<double>(q, k, v);
    EXPECT_LT((r - s).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Attention, ScaleMultipliesScores) {
  std::mt19937_64 rng(5);
  const Eigen::VectorXd q = random_matrix(rng, 4, 1, 1.0);
  const Eigen::MatrixXd k = random_matrix(rng, 4, 5, 1.0);
  const Eigen::MatrixXd v = random_matrix(rng, 2, 5, 1.0);
  const Eigen::VectorXd a = attention_recurrence<double>(q, k, v, 0.5);
  const Eigen::VectorXd b = attention_recurrence<double>(Eigen::VectorXd(q * 0.5), k, v);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AbstractAttention, StepContainsSampledConcreteSteps) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](const Interval<double>& i) { return i.lo + u(rng) * (i.hi - i.lo); };
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::VectorXd f0 = random_matrix(rng, 3, 1, 2.0);
    const Eigen::VectorXd v0 = random_matrix(rng, 3, 1, 2.0);
    const double radius = 0.5 * u(rng);
    AbstractHeadState<double> s{
        Box<double>(Eigen::VectorXd(f0.array() - radius), Eigen::VectorXd(f0.array() + radius)),
        Interval<double>(-0.4, 0.7)};
    const Box<double> v(Eigen::VectorXd(v0.array() - 0.1), Eigen::VectorXd(v0.array() + 0.1));
    const Interval<double> qk(-1.0, 0.3);
    StepRewritings<double> forms;
    const AbstractHeadState<double> out = abstract_step(s, qk, v, &forms);
    for (Eigen::Index d = 0; d < 3; ++d) {
      EXPECT_LE(out.f[d].width(), forms.take_form[d].width());
      EXPECT_LE(out.f[d].width(), forms.keep_form[d].width());
    }
    for (int draw = 0; draw < 20; ++draw) {
      RecurrenceState<double> c{Eigen::VectorXd(3), pick(s.g)};
      Eigen::VectorXd vv(3);
      for (Eigen::Index d = 0; d < 3; ++d) {
        c.f(d) = pick(s.f[d]);
        vv(d) = pick(v[d]);
      }
      const RecurrenceState<double> next = recurrence_step(c, pick(qk), vv);
      EXPECT_TRUE(contains(out.f, next.f));
      EXPECT_TRUE(out.g.contains(next.g));
    }
  }
}
