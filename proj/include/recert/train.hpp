#pragma once

#include "recert/certify.hpp"
#include "recert/dataset.hpp"
#include "recert/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace recert {

/// max_{c != y} logit_c - logit_y. Negative iff the prediction is y; ties
/// count as wrong.
double loss_margin(const Eigen::VectorXd& logits, int label);
ad::Var loss_margin_graph(const ad::Var& logits, int label);

enum class TrainMode { normal, augment, worst_of_k, certified };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct TrainConfig {
  TrainMode mode = TrainMode::normal;
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 0.1;
  std::uint64_t seed = 1;
  /// Weight of the certified bound in (1 - kappa) L(x) + kappa L_cert.
  double kappa = 0.75;
  /// Fraction of every budget active in each epoch. Empty: linear ramp
  /// that reaches 1.0 after the first half of training.
  std::vector<double> budget_ramp;
  /// Samples per step for worst_of_k.
  int k = 8;
  std::size_t enumeration_cap = 10'000;

  /// Throws Error on kappa outside [0, 1] or a malformed ramp.
  void validate() const;
  double ramp_fraction(int epoch) const;
  std::vector<int> active_budgets(const PerturbationSpace& space, int epoch) const;
};

struct EpochReport {
  int epoch = 0;
  double mean_loss = 0.0;
  std::vector<int> budgets;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Plain minibatch SGD on the surrogate softplus(margin). Modes:
///  normal      the clean input only
///  augment     one uniform draw from S(x) per step
///  worst_of_k  the highest-loss of k uniform draws from S(x); a loss-based
///              stand-in for gradient-guided token flipping
///  certified   (1 - kappa) L(x) + kappa softplus(certified margin bound)
/// Throws DivergenceError if the loss becomes non-finite.
ModelParams train(ModelParams initial, const Dataset& data, const PerturbationSpace& space,
                  const Vocabulary& vocab, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// (1 - kappa) softplus(margin(x)) + kappa softplus(bound from `plan`).
/// Terms with a zero weight are not built.
ad::Var certified_loss_graph(const ModelVars& vars, const CertPlan& plan,
                             std::span<const TokenId> tokens, int label, double kappa);

// ---------------------------------------------------------------------------
// Evaluation

enum class Metric { normal, certified, exhaustive };

std::string to_string(Metric metric);
Metric parse_metric(const std::string& text);

struct ExampleOutcome {
  bool normal_correct = false;
  std::optional<CertResult> cert;
  std::optional<bool> exhaustive_correct;
  std::optional<std::size_t> space_size;
  /// Set when enumeration or certification failed for this example.
  std::string error;
};

struct Metrics {
  std::size_t total = 0;
  std::optional<double> normal_acc;
  std::optional<double> certified_acc;
  std::optional<double> exhaustive_acc;
  std::size_t normal_correct = 0;
  std::size_t certified = 0;
  std::size_t exhaustive_correct = 0;
  std::size_t failures = 0;
};

struct EvalOptions {
  std::vector<Metric> metrics{Metric::normal, Metric::certified, Metric::exhaustive};
  std::size_t enumeration_cap = kDefaultEnumerationCap;
  /// Worker threads; results are always in input order.
  unsigned threads = 1;
};

std::vector<ExampleOutcome> evaluate_examples(const Dataset& data, const PerturbationSpace& space,
                                              const ModelParams& params, const Vocabulary& vocab,
                                              const EvalOptions& options = {});
Metrics summarize(std::span<const ExampleOutcome> outcomes, std::span<const Metric> metrics);

/// Normal: argmax on x (recurrent form). Certified: fraction certified.
/// Exhaustive: fraction where every member of S(x) is classified correctly;
/// an example whose S(x) exceeds the enumeration cap counts as incorrect.
Metrics evaluate(const Dataset& data, const PerturbationSpace& space, const ModelParams& params,
                 const Vocabulary& vocab, const EvalOptions& options = {});

}  // namespace recert
