#include "recert/error.hpp"
#include "recert/model.hpp"
#include "reference.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace recert;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 7;
  c.d_model = 6;
  c.n_heads = 2;
  c.d_hidden = 5;
  c.max_positions = 10;
  c.n_classes = 3;
  return c;
}

std::string serialized(const ModelParams& p, std::span<const std::string> vocab = {}) {
  std::ostringstream out;
  write_model(out, p, vocab);
  return out.str();
}

ModelFile parse(const std::string& text) {
  std::istringstream in(text);
  return read_model(in);
}

// Direct per-head softmax attention from the weights, used as an oracle.
Eigen::VectorXd oracle_forward(const ModelParams& p, const std::vector<TokenId>& ids) {
  const int n = static_cast<int>(ids.size());
  const int dh = p.config.d_head();
  Eigen::MatrixXd e(p.config.d_model, n);
  for (int i = 0; i < n; ++i) {
    e.col(i) = p.token_table.row(ids[static_cast<std::size_t>(i)]).transpose() +
               p.pos_table.row(i).transpose();
  }
  Eigen::VectorXd state(p.config.d_model);
  for (int h = 0; h < p.config.n_heads; ++h) {
    const HeadProjections& w = p.heads[static_cast<std::size_t>(h)];
    const Eigen::VectorXd q = w.w_q * e.col(n - 1);
    const Eigen::MatrixXd k = w.w_k * e;
    const Eigen::MatrixXd v = w.w_v * e;
    Eigen::VectorXd s = (k.transpose() * q) * p.config.score_scale();
    s = (s.array() - s.maxCoeff()).exp();
    state.segment(h * dh, dh) = v * s / s.sum();
  }
  const Eigen::VectorXd hidden = (p.w1 * (p.w_o * state) + p.b1).cwiseMax(0.0);
  return p.w2 * hidden + p.b2;
}

}  // namespace

TEST(Model, ConfigRejectsIndivisibleHeads) {
  ModelConfig c = small_config();
  c.d_model = 7;
  EXPECT_THROW(c.validate(), ShapeError);
}

TEST(Model, InitIsSeededAndBiasesStartAtZero) {
  const ModelParams a = init_params(small_config(), 42);
  const ModelParams b = init_params(small_config(), 42);
  const ModelParams c = init_params(small_config(), 43);
  EXPECT_EQ(serialized(a), serialized(b));
  EXPECT_NE(serialized(a), serialized(c));
  EXPECT_TRUE(a.b1.isZero());
  EXPECT_TRUE(a.b2.isZero());
}

TEST(Model, EmbeddingPositionOutOfRangeThrows) {
  const ModelParams p = init_params(small_config(), 1);
  EXPECT_THROW(embedding(p, 1, 0), PositionRangeError);
  EXPECT_THROW(embedding(p, 1, 11), PositionRangeError);
  const std::vector<TokenId> too_long(11, 1);
  EXPECT_THROW(forward_concrete(p, too_long), PositionRangeError);
}

TEST(Model, ForwardMatchesDirectSoftmaxOracle) {
  std::mt19937_64 rng(2);
  for (bool scaled : {false, true}) {
    ModelConfig c = small_config();
    c.attention_scaling = scaled;
    const ModelParams p = init_params(c, 9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<TokenId> ids(1 + rng() % 10);
      for (auto& t : ids) t = static_cast<TokenId>(rng() % 7);
      const Eigen::VectorXd expect = oracle_forward(p, ids);
      for (AttentionMode mode : {AttentionMode::softmax, AttentionMode::recurrent}) {
        EXPECT_LT((forward_concrete(p, ids, mode) - expect).cwiseAbs().maxCoeff(), 1e-12);
        ad::Tape tape;
        const ModelVars vars = bind(tape, p, false);
        const Eigen::VectorXd graph = forward_graph(vars, ids, mode).value();
        EXPECT_LT((graph - expect).cwiseAbs().maxCoeff(), 1e-12);
      }
    }
  }
}

TEST(Model, ForwardGraphGradientMatchesFiniteDifferences) {
  ModelParams p = init_params(small_config(), 5);
  const std::vector<TokenId> ids{1, 4, 2, 6};
  for (AttentionMode mode : {AttentionMode::softmax, AttentionMode::recurrent}) {
    ad::Tape tape;
    const ModelVars vars = bind(tape, p, true);
    const ad::Var logits = forward_graph(vars, ids, mode);
    tape.backward(ad::sum(ad::sigmoid(logits)));
    std::vector<double> flat;
    for (const ad::Var& leaf : vars.leaves) {
      const ad::Tensor g = tape.grad(leaf);
      flat.insert(flat.end(), g.data(), g.data() + g.size());
    }
    const Eigen::VectorXd analytic =
        Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
    const Eigen::VectorXd numeric = reference::numeric_gradient(p, [&](const ModelParams& q) {
      const Eigen::VectorXd l = forward_concrete(q, ids, mode);
      return (1.0 / (1.0 + (-l.array()).exp())).sum();
    });
    EXPECT_LT((analytic - numeric).norm() / numeric.norm(), 1e-6);
  }
}

TEST(Model, AbstractReadoutContainsSampledStates) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ModelParams p = init_params(small_config(), 3);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(6, -0.5);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(6, 0.8);
  const Box<double> box(lo, hi);
  const Box<double> out = readout_abstract(p, box);
  for (int draw = 0; draw < 500; ++draw) {
    Eigen::VectorXd s(6);
    for (Eigen::Index k = 0; k < 6; ++k) s(k) = lo(k) + u(rng) * (hi(k) - lo(k));
    EXPECT_TRUE(contains(out, readout(p, s)));
  }
}

TEST(ModelFile, RoundTripIsBitExact) {
  const ModelParams p = init_params(small_config(), 17);
  const std::vector<std::string> vocab{"<unk>", "a", "b", "c", "d", "e", "f"};
  const std::string text = serialized(p, vocab);
  const ModelFile back = parse(text);
  EXPECT_EQ(back.params.config, p.config);
  EXPECT_EQ(back.vocabulary, vocab);
  const auto x = p.named_tensors();
  const auto y = back.params.named_tensors();
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k].first, y[k].first);
    EXPECT_EQ(*x[k].second, *y[k].second) << x[k].first;
  }
  EXPECT_EQ(serialized(back.params, back.vocabulary), text);
}

TEST(ModelFile, SaveAndLoadThroughDisk) {
  const ModelParams p = init_params(small_config(), 18);
  const auto path = std::filesystem::temp_directory_path() / "recert_model_roundtrip.txt";
  save_model(path, p);
  const ModelFile back = load_model(path);
  EXPECT_EQ(serialized(back.params), serialized(p));
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), IoError);
}

TEST(ModelFile, VersionMismatchIsReported) {
  std::string text = serialized(init_params(small_config(), 1));
  text.replace(text.find("recert-model 1"), 14, "recert-model 2");
  EXPECT_THROW(parse(text), VersionMismatch);
}

TEST(ModelFile, TruncationIsMalformed) {
  const std::string text = serialized(init_params(small_config(), 1));
  EXPECT_THROW(parse(text.substr(0, text.size() / 2)), MalformedFile);
  EXPECT_THROW(parse("garbage"), MalformedFile);
}

TEST(ModelFile, ShapeMismatchIsReported) {
  std::string text = serialized(init_params(small_config(), 1));
  text.replace(text.find("d_hidden 5"), 10, "d_hidden 4");
  EXPECT_THROW(parse(text), ShapeError);
}
