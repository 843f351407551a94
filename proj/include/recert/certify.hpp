#pragma once

// Certification by abstract interpretation of the attention recurrence over
// a dynamic program on perturbed prefixes.
//
// A DP key (i, j, b) stands for every perturbed prefix of length i that was
// derived from the first j original tokens with remaining budgets b. Its
// abstract state is one (f-box, g-interval) pair per head, so the state size
// does not depend on the prefix length. The query of the final position is
// unknown while scanning left to right, so the DP runs once per achievable
// final length l with an interval hull of every possible final query.

#include "recert/attention.hpp"
#include "recert/model.hpp"
#include "recert/perturbation.hpp"
#include "recert/vocabulary.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace recert {

/// One way of rewriting an original token: the copy (item == -1) or a
/// transformation rewrite that spends one unit of items[item]'s budget.
struct Emission {
  std::vector<TokenId> tokens;
  int item = -1;
};

/// Structural view of S(x) used by the dynamic program.
struct ExampleGraph {
  std::vector<TokenId> original;
  std::vector<int> budgets;
  /// choices[j][0] is always the copy of original[j].
  std::vector<std::vector<Emission>> choices;

  int length() const { return static_cast<int>(original.size()); }
};

using TokenLookup = std::function<TokenId(const std::string&)>;

ExampleGraph build_graph(const PerturbationSpace& space, const TokenSeq& x,
                         const TokenLookup& lookup);
ExampleGraph build_graph(const PerturbationSpace& space, const TokenSeq& x,
                         const Vocabulary& vocab);

/// e_{i,j}: the token of original position j moved to position i (1-based).
Eigen::VectorXd embed_pair(const ModelParams& params, std::span<const TokenId> x, int i, int j);

/// Every length achievable by a non-empty member of S(x), ascending.
std::vector<int> final_length_range(const ExampleGraph& graph);
std::vector<int> final_length_range(const PerturbationSpace& space, const TokenSeq& x);

/// Tokens that can occupy the last position of a length-`length` member.
std::vector<TokenId> final_tokens(const ExampleGraph& graph, int length);

/// Hull of W_q (t + p_length) over final_tokens(); heads stacked row-wise.
Box<double> final_query_hull(const ExampleGraph& graph, int length, const ModelParams& params);

// ---------------------------------------------------------------------------
// Plans: the parameter-independent part of the DP.

/// A batch of recurrence steps; column c emits tokens[c] at positions[c],
/// continuing from column from[c] of the previous stage.
struct EmissionBatch {
  std::vector<int> from;
  std::vector<TokenId> tokens;
  std::vector<int> positions;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Transition from original prefix j to j + 1.
///
/// Stage 0 is the state of the non-empty keys at layer j. Stage 1 holds
/// first_step (continuing stage-0 columns) followed by first_init (rewrites
/// out of the empty prefix, which start the recurrence). Stage s >= 2 is
/// later_steps[s - 2], continuing stage s - 1. merge_from[s] / merge_to[s]
/// route finished stage-s columns into the destination keys, which join
/// everything they receive.
struct LayerPlan {
  int source_columns = 0;
  int dest_columns = 0;
  EmissionBatch first_step;
  EmissionBatch first_init;
  std::vector<EmissionBatch> later_steps;
  std::vector<std::vector<int>> merge_from;
  std::vector<std::vector<int>> merge_to;
};

struct BranchPlan {
  int length = 0;
  std::vector<LayerPlan> layers;
  std::vector<TokenId> final_tokens;
  /// Live DP keys across all layers (after pruning).
  int key_count = 0;
};

struct CertPlan {
  int input_length = 0;
  std::vector<BranchPlan> branches;
};

/// Builds one pruned branch per achievable final length. Throws
/// PositionRangeError if a length exceeds `max_positions`.
CertPlan plan_certification(const ExampleGraph& graph, int max_positions);

// ---------------------------------------------------------------------------
// Execution on a tape.

/// A batch of abstract states, one column per DP key; heads stacked in rows.
struct StateBatch {
  ad::Var f_lo;  // d_model x m
  ad::Var f_hi;
  ad::Var g_lo;  // n_heads x m
  ad::Var g_hi;
};

/// Widths of the two single rewritings versus their meet.
struct MeetStats {
  long long steps = 0;              // one per (column, emission)
  long long dims = 0;               // one per (column, emission, row)
  long long wider_than_single = 0;  // meet wider than a single rewriting
  long long strictly_narrower_steps = 0;
};

struct BranchGraph {
  int length = 0;
  StateBatch terminal;  // one column
  BoxVar logits;
  ad::Var margin_upper;  // 1x1
};

struct CertGraph {
  std::vector<BranchGraph> branches;
  ad::Var worst_margin_upper;  // 1x1
};

CertGraph certify_graph(const ModelVars& vars, const CertPlan& plan, int label,
                        MeetStats* stats = nullptr);

/// Runs one branch and returns its terminal state (one column).
StateBatch propagate_graph(const ModelVars& vars, const BranchPlan& branch,
                           MeetStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Value-level API.

enum class Verdict { certified, unknown };

struct BranchReport {
  int length = 0;
  int key_count = 0;
  double max_f_width = 0.0;
  std::vector<AbstractHeadState<double>> terminal;
  Box<double> logits;
  double margin_upper = 0.0;
};

struct CertResult {
  Verdict verdict = Verdict::unknown;
  /// Upper bound of max_{c != y} logit_c - logit_y over S(x).
  double worst_margin_upper = 0.0;
  std::vector<BranchReport> branches;

  const BranchReport* branch(int length) const;
};

/// Abstract per-head state after the whole input, for final length `length`.
std::vector<AbstractHeadState<double>> propagate(const ExampleGraph& graph, int length,
                                                 const ModelParams& params,
                                                 MeetStats* stats = nullptr);

CertResult certify(const ExampleGraph& graph, int label, const ModelParams& params,
                   MeetStats* stats = nullptr);
CertResult certify(const PerturbationSpace& space, const TokenSeq& x, int label,
                   const ModelParams& params, const Vocabulary& vocab,
                   MeetStats* stats = nullptr);

/// Number of doubles a DP key carries (f and g, both endpoints, all heads).
int state_doubles_per_key(const ModelConfig& config);

}  // namespace recert
