#include "recert/certify.hpp"
#include "recert/cli.hpp"
#include "recert/train.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace recert {
namespace {

using Rng = std::mt19937_64;

std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << x;
  return s.str();
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

SelftestCheck check_equivalence(Rng& rng) {
  std::uniform_int_distribution<int> len(1, 16);
  std::uniform_int_distribution<int> width(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = len(rng);
    const int d = width(rng);
    const Eigen::VectorXd q = random_matrix(rng, d, 1, 2.0);
    const Eigen::MatrixXd k = random_matrix(rng, d, n, 2.0);
    const Eigen::MatrixXd v = random_matrix(rng, d, n, 2.0);
    const Eigen::VectorXd a = attention_softmax<double>(q, k, v);
    const Eigen::VectorXd b = attention_recurrence<double>(q, k, v);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  return {"softmax-recurrence", worst <= 1e-5, "max_abs_diff=" + sci(worst)};
}

SelftestCheck check_denominator(Rng& rng) {
  std::uniform_int_distribution<int> len(1, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    const Eigen::VectorXd q = random_matrix(rng, 4, 1, 1.5);
    const Eigen::MatrixXd k = random_matrix(rng, 4, n, 1.5);
    const Eigen::MatrixXd v = random_matrix(rng, 3, n, 1.0);
    std::vector<double> g;
    attention_recurrence<double>(q, k, v, 1.0, &g);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      total += std::exp(q.dot(k.col(i)));
      worst = std::max(worst, std::abs(std::exp(g[static_cast<std::size_t>(i)]) - total) / total);
    }
  }
  return {"log-denominator", worst <= 1e-9, "max_rel_err=" + sci(worst)};
}

struct FuzzCase {
  Vocabulary vocab;
  PerturbationSpace space;
  ModelParams params;
  TokenSeq x;
  int label = 0;
};

FuzzCase random_case(Rng& rng) {
  constexpr int kWords = 8;
  std::vector<std::string> words{Vocabulary::kUnknownToken};
  for (int w = 0; w < kWords; ++w) words.push_back("w" + std::to_string(w));
  SynonymTable table;
  std::uniform_int_distribution<int> word(1, kWords);
  std::uniform_int_distribution<int> alts(0, 2);
  for (int w = 1; w <= kWords; ++w) {
    const int count = alts(rng);
    for (int a = 0; a < count; ++a) {
      const int other = word(rng);
      if (other != w) table[words[static_cast<std::size_t>(w)]].push_back(words[static_cast<std::size_t>(other)]);
    }
  }
  ModelConfig config;
  config.vocab_size = kWords + 1;
  config.d_model = 8;
  config.n_heads = 2;
  config.d_hidden = 8;
  config.max_positions = 16;
  FuzzCase c{Vocabulary(words),
             PerturbationSpace({SpaceItem{make_duplicate(), 1},
                                SpaceItem{make_substitute("SubSyn", table), 1}}),
             init_params(config, rng()),
             {},
             0};
  // Larger weights than the default init so that verdicts vary.
  for (auto& [name, tensor] : c.params.named_tensors()) *tensor *= 2.0;
  std::uniform_int_distribution<int> len(1, 6);
  const int n = len(rng);
  for (int i = 0; i < n; ++i) c.x.push_back(words[static_cast<std::size_t>(word(rng))]);
  c.label = static_cast<int>(rng() % 2);
  return c;
}

SelftestCheck check_soundness(Rng& rng) {
  int violations = 0;
  int certified = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const FuzzCase c = random_case(rng);
    const CertResult r = certify(c.space, c.x, c.label, c.params, c.vocab);
    for (const PerturbedString& z : enumerate_space(c.space, c.x)) {
      const Eigen::VectorXd logits = forward_concrete(c.params, c.vocab.encode(z.tokens));
      const BranchReport* branch = r.branch(static_cast<int>(z.tokens.size()));
      if (branch == nullptr || !contains(branch->logits, logits)) ++violations;
      if (r.verdict == Verdict::certified && loss_margin(logits, c.label) >= 0.0) ++violations;
    }
    certified += r.verdict == Verdict::certified ? 1 : 0;
  }
  return {"soundness-fuzz", violations == 0,
          "violations=" + std::to_string(violations) + " certified=" + std::to_string(certified)};
}

double certified_loss_value(const ModelParams& params, const CertPlan& plan,
                            const std::vector<TokenId>& ids, int label, double kappa) {
  ad::Tape tape;
  const ModelVars vars = bind(tape, params, false);
  return certified_loss_graph(vars, plan, ids, label, kappa).scalar();
}

SelftestCheck check_gradients(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    FuzzCase c = random_case(rng);
    const std::vector<TokenId> ids = c.vocab.encode(c.x);
    const CertPlan plan =
        plan_certification(build_graph(c.space, c.x, c.vocab), c.params.config.max_positions);
    ad::Tape tape;
    const ModelVars vars = bind(tape, c.params, true);
    tape.backward(certified_loss_graph(vars, plan, ids, c.label, 0.75));
    auto tensors = c.params.named_tensors();
    Eigen::VectorXd analytic(static_cast<Eigen::Index>(tensors.size()) * 4);
    Eigen::VectorXd numeric(analytic.size());
    Eigen::Index at = 0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const Tensor grad = tape.grad(vars.leaves[t]);
      Tensor& value = *tensors[t].second;
      for (int probe = 0; probe < 4; ++probe) {
        const Eigen::Index k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(value.size()));
        const double saved = value.data()[k];
        constexpr double h = 1e-6;
        value.data()[k] = saved + h;
        const double up = certified_loss_value(c.params, plan, ids, c.label, 0.75);
        value.data()[k] = saved - h;
        const double down = certified_loss_value(c.params, plan, ids, c.label, 0.75);
        value.data()[k] = saved;
        analytic(at) = grad.data()[k];
        numeric(at) = (up - down) / (2 * h);
        ++at;
      }
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    worst = std::max(worst, (analytic - numeric).norm() / scale);
  }
  return {"certified-gradient", worst <= 1e-4, "max_rel_err=" + sci(worst)};
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::ostream& out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SelftestCheck> checks;
  checks.push_back(check_equivalence(rng));
  checks.push_back(check_denominator(rng));
  checks.push_back(check_soundness(rng));
  checks.push_back(check_gradients(rng));
  for (const SelftestCheck& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ' ' << c.detail << '\n';
  }
  return checks;
}

}  // namespace recert
