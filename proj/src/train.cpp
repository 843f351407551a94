#include "recert/train.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace recert {

double loss_margin(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) throw ShapeError("loss_margin: label out of range");
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    if (c != label) worst = std::max(worst, logits(c) - logits(label));
  }
  return worst;
}

ad::Var loss_margin_graph(const ad::Var& logits, int label) {
  if (label < 0 || label >= logits.rows()) throw ShapeError("loss_margin: label out of range");
  const ad::Var truth = ad::pick(logits, label, 0);
  std::vector<ad::Var> gaps;
  for (Eigen::Index c = 0; c < logits.rows(); ++c) {
    if (c != label) gaps.push_back(ad::pick(logits, c, 0) - truth);
  }
  return ad::reduce_max(ad::hcat(gaps));
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::normal: return "normal";
    case TrainMode::augment: return "augment";
    case TrainMode::worst_of_k: return "worst_of_k";
    case TrainMode::certified: return "certified";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& text) {
  for (TrainMode m : {TrainMode::normal, TrainMode::augment, TrainMode::worst_of_k,
                      TrainMode::certified}) {
    if (to_string(m) == text) return m;
  }
  throw Error("unknown training mode '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw Error("kappa must lie in [0, 1]");
  if (epochs < 1 || batch_size < 1 || k < 1) throw Error("epochs, batch size and k must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning rate must be positive");
  }
  if (budget_ramp.empty()) return;
  if (static_cast<int>(budget_ramp.size()) != epochs) {
    throw Error("budget ramp needs one fraction per epoch");
  }
  for (std::size_t e = 0; e < budget_ramp.size(); ++e) {
    if (budget_ramp[e] < 0.0 || budget_ramp[e] > 1.0) throw Error("ramp fraction outside [0, 1]");
    if (e > 0 && budget_ramp[e] < budget_ramp[e - 1]) throw Error("budget ramp must not decrease");
  }
  const std::size_t full_by = epochs >= 2 ? budget_ramp.size() - 2 : 0;
  if (budget_ramp[full_by] != 1.0) throw Error("budget ramp must reach 1.0 before the last epoch");
}

double TrainConfig::ramp_fraction(int epoch) const {
  if (!budget_ramp.empty()) return budget_ramp.at(static_cast<std::size_t>(epoch));
  const int half = std::max(1, epochs / 2);
  return std::min(1.0, static_cast<double>(epoch + 1) / half);
}

std::vector<int> TrainConfig::active_budgets(const PerturbationSpace& space, int epoch) const {
  const double fraction = ramp_fraction(epoch);
  std::vector<int> out;
  for (int b : space.budgets()) out.push_back(static_cast<int>(std::floor(fraction * b + 1e-9)));
  return out;
}

ad::Var certified_loss_graph(const ModelVars& vars, const CertPlan& plan,
                             std::span<const TokenId> tokens, int label, double kappa) {
  std::vector<ad::Var> terms;
  if (kappa < 1.0) {
    const ad::Var logits = forward_graph(vars, tokens, AttentionMode::softmax);
    terms.push_back(ad::scale(ad::softplus(loss_margin_graph(logits, label)), 1.0 - kappa));
  }
  if (kappa > 0.0) {
    const CertGraph g = certify_graph(vars, plan, label);
    terms.push_back(ad::scale(ad::softplus(g.worst_margin_upper), kappa));
  }
  return terms.size() == 1 ? terms.front() : terms[0] + terms[1];
}

namespace {

// Draws members of S(x): uniformly from the enumeration when it fits under
// the cap, otherwise by a random walk over rewrite choices.
class MemberSampler {
 public:
  MemberSampler(const PerturbationSpace& space, const TokenSeq& x, const Vocabulary& vocab,
                std::size_t cap)
      : graph_(build_graph(space, x, vocab)) {
    try {
      for (const PerturbedString& z : enumerate_space(space, x, cap)) {
        members_.push_back(vocab.encode(z.tokens));
      }
    } catch (const EnumerationLimit&) {
      members_.clear();
    }
  }

  std::vector<TokenId> draw(std::mt19937_64& rng) const {
    if (!members_.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, members_.size() - 1);
      return members_[pick(rng)];
    }
    std::vector<int> left = graph_.budgets;
    std::vector<TokenId> out;
    for (const auto& choices : graph_.choices) {
      std::vector<const Emission*> usable;
      for (const Emission& e : choices) {
        if (e.item < 0 || left[static_cast<std::size_t>(e.item)] > 0) usable.push_back(&e);
      }
      std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
      const Emission& e = *usable[pick(rng)];
      if (e.item >= 0) --left[static_cast<std::size_t>(e.item)];
      out.insert(out.end(), e.tokens.begin(), e.tokens.end());
    }
    return out.empty() ? graph_.original : out;
  }

 private:
  ExampleGraph graph_;
  std::vector<std::vector<TokenId>> members_;
};

}  // namespace

ModelParams train(ModelParams params, const Dataset& data, const PerturbationSpace& space,
                  const Vocabulary& vocab, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.examples.empty()) throw Error("train: empty dataset");
  const std::size_t n = data.examples.size();

  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(n);
  for (const Example& e : data.examples) encoded.push_back(vocab.encode(e.tokens));

  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 sample_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::optional<MemberSampler>> samplers(n);
  auto sampler = [&](std::size_t idx) -> const MemberSampler& {
    if (!samplers[idx]) {
      samplers[idx].emplace(space, data.examples[idx].tokens, vocab, config.enumeration_cap);
    }
    return *samplers[idx];
  };

  std::vector<int> plan_budgets;
  std::vector<std::optional<CertPlan>> plans(n);

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochReport report;
    report.epoch = epoch;
    if (config.mode == TrainMode::certified) {
      report.budgets = config.active_budgets(space, epoch);
      if (report.budgets != plan_budgets) {
        plan_budgets = report.budgets;
        std::fill(plans.begin(), plans.end(), std::nullopt);
      }
    } else {
      report.budgets = space.budgets();
    }
    const PerturbationSpace active = space.with_budgets(report.budgets);

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      ad::Tape tape;
      const ModelVars vars = bind(tape, params, true);
      std::vector<ad::Var> losses;
      for (std::size_t at = start; at < stop; ++at) {
        const std::size_t idx = order[at];
        const int label = data.examples[idx].label;
        switch (config.mode) {
          case TrainMode::normal: {
            const ad::Var logits = forward_graph(vars, encoded[idx], AttentionMode::softmax);
            losses.push_back(ad::softplus(loss_margin_graph(logits, label)));
            break;
          }
          case TrainMode::augment: {
            const std::vector<TokenId> z = sampler(idx).draw(sample_rng);
            const ad::Var logits = forward_graph(vars, z, AttentionMode::softmax);
            losses.push_back(ad::softplus(loss_margin_graph(logits, label)));
            break;
          }
          case TrainMode::worst_of_k: {
            std::vector<TokenId> worst;
            double worst_loss = -std::numeric_limits<double>::infinity();
            for (int draw = 0; draw < config.k; ++draw) {
              std::vector<TokenId> z = sampler(idx).draw(sample_rng);
              const double l =
                  loss_margin(forward_concrete(params, z, AttentionMode::softmax), label);
              if (l > worst_loss) {
                worst_loss = l;
                worst = std::move(z);
              }
            }
            const ad::Var logits = forward_graph(vars, worst, AttentionMode::softmax);
            losses.push_back(ad::softplus(loss_margin_graph(logits, label)));
            break;
          }
          case TrainMode::certified: {
            if (!plans[idx]) {
              plans[idx] = plan_certification(build_graph(active, data.examples[idx].tokens, vocab),
                                              params.config.max_positions);
            }
            losses.push_back(
                certified_loss_graph(vars, *plans[idx], encoded[idx], label, config.kappa));
            break;
          }
        }
      }
      const ad::Var batch_loss =
          ad::scale(ad::sum(ad::hcat(losses)), 1.0 / static_cast<double>(losses.size()));
      const double value = batch_loss.scalar();
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged: non-finite loss in epoch " +
                              std::to_string(epoch));
      }
      loss_sum += value * static_cast<double>(losses.size());
      tape.backward(batch_loss);
      std::vector<Tensor> grads;
      grads.reserve(vars.leaves.size());
      for (const ad::Var& leaf : vars.leaves) grads.push_back(tape.grad(leaf));
      auto tensors = params.named_tensors();
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        *tensors[k].second -= config.learning_rate * grads[k];
      }
    }
    report.mean_loss = loss_sum / static_cast<double>(n);
    if (on_epoch) on_epoch(report);
  }
  return params;
}

}  // namespace recert
