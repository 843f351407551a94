#include "recert/certify.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace recert {
namespace {

// A DP key inside one layer j: emitted length i and encoded remaining budgets.
using LayerKey = std::pair<int, int>;

class BudgetCode {
 public:
  explicit BudgetCode(const std::vector<int>& budgets) : budgets_(budgets) {
    int r = 1;
    for (int b : budgets) {
      radix_.push_back(r);
      r *= b + 1;
    }
    full_ = 0;
    for (std::size_t k = 0; k < budgets.size(); ++k) full_ += budgets[k] * radix_[k];
  }

  int full() const { return full_; }
  int remaining(int code, int item) const {
    const auto k = static_cast<std::size_t>(item);
    return (code / radix_[k]) % (budgets_[k] + 1);
  }
  /// Destination code after taking `e`, or -1 when its budget is exhausted.
  int spend(int code, const Emission& e) const {
    if (e.item < 0) return code;
    if (remaining(code, e.item) == 0) return -1;
    return code - radix_[static_cast<std::size_t>(e.item)];
  }

 private:
  std::vector<int> budgets_;
  std::vector<int> radix_;
  int full_ = 0;
};

std::vector<std::set<LayerKey>> forward_reachable(const ExampleGraph& g, const BudgetCode& code) {
  const int n = g.length();
  std::vector<std::set<LayerKey>> layers(static_cast<std::size_t>(n) + 1);
  layers[0].insert({0, code.full()});
  for (int j = 0; j < n; ++j) {
    for (const auto& [i, c] : layers[static_cast<std::size_t>(j)]) {
      for (const Emission& e : g.choices[static_cast<std::size_t>(j)]) {
        const int next = code.spend(c, e);
        if (next < 0) continue;
        layers[static_cast<std::size_t>(j) + 1].insert({i + static_cast<int>(e.tokens.size()), next});
      }
    }
  }
  return layers;
}

// Keys of `fwd` that can still reach final length `length` at layer n.
std::vector<std::set<LayerKey>> live_keys(const ExampleGraph& g, const BudgetCode& code,
                                          const std::vector<std::set<LayerKey>>& fwd, int length) {
  const int n = g.length();
  std::vector<std::set<LayerKey>> alive(fwd.size());
  for (const LayerKey& k : fwd[static_cast<std::size_t>(n)]) {
    if (k.first == length) alive[static_cast<std::size_t>(n)].insert(k);
  }
  for (int j = n - 1; j >= 0; --j) {
    const auto& next = alive[static_cast<std::size_t>(j) + 1];
    for (const auto& [i, c] : fwd[static_cast<std::size_t>(j)]) {
      for (const Emission& e : g.choices[static_cast<std::size_t>(j)]) {
        const int nc = code.spend(c, e);
        if (nc >= 0 && next.count({i + static_cast<int>(e.tokens.size()), nc}) > 0) {
          alive[static_cast<std::size_t>(j)].insert({i, c});
          break;
        }
      }
    }
  }
  return alive;
}

struct PendingEdge {
  int src_col;  // -1: empty prefix
  int dest_col;
  int i;
  const Emission* emission;
};

LayerPlan plan_layer(const ExampleGraph& g, const BudgetCode& code, int j,
                     const std::set<LayerKey>& src, const std::set<LayerKey>& dest) {
  std::map<LayerKey, int> src_col;
  std::map<LayerKey, int> dest_col;
  for (const LayerKey& k : src) {
    if (k.first > 0) src_col.emplace(k, static_cast<int>(src_col.size()));
  }
  for (const LayerKey& k : dest) {
    if (k.first > 0) dest_col.emplace(k, static_cast<int>(dest_col.size()));
  }

  LayerPlan plan;
  plan.source_columns = static_cast<int>(src_col.size());
  plan.dest_columns = static_cast<int>(dest_col.size());

  std::vector<PendingEdge> edges;
  std::size_t longest = 0;
  for (const LayerKey& k : src) {
    for (const Emission& e : g.choices[static_cast<std::size_t>(j)]) {
      const int nc = code.spend(k.second, e);
      if (nc < 0) continue;
      const LayerKey to{k.first + static_cast<int>(e.tokens.size()), nc};
      if (dest.count(to) == 0) continue;
      const int from = k.first > 0 ? src_col.at(k) : -1;
      const int target = to.first > 0 ? dest_col.at(to) : -1;
      edges.push_back({from, target, k.first, &e});
      longest = std::max(longest, e.tokens.size());
    }
  }

  plan.merge_from.assign(longest + 1, {});
  plan.merge_to.assign(longest + 1, {});

  // Stage 1: continuing edges first, then edges that start the recurrence.
  std::vector<int> order;  // edge indices in current stage column order
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const PendingEdge& p = edges[k];
      if (p.emission->tokens.empty() || (p.src_col >= 0) != (pass == 0)) continue;
      EmissionBatch& batch = pass == 0 ? plan.first_step : plan.first_init;
      batch.from.push_back(p.src_col);
      batch.tokens.push_back(p.emission->tokens.front());
      batch.positions.push_back(p.i + 1);
      order.push_back(static_cast<int>(k));
    }
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const PendingEdge& p = edges[k];
    if (p.emission->tokens.empty() && p.src_col >= 0) {
      plan.merge_from[0].push_back(p.src_col);
      plan.merge_to[0].push_back(p.dest_col);
    }
  }
  for (std::size_t s = 1; s <= longest; ++s) {
    std::vector<int> next_order;
    EmissionBatch next;
    for (std::size_t col = 0; col < order.size(); ++col) {
      const PendingEdge& p = edges[static_cast<std::size_t>(order[col])];
      const std::size_t r = p.emission->tokens.size();
      if (r == s) {
        plan.merge_from[s].push_back(static_cast<int>(col));
        plan.merge_to[s].push_back(p.dest_col);
      } else {
        next.from.push_back(static_cast<int>(col));
        next.tokens.push_back(p.emission->tokens[s]);
        next.positions.push_back(p.i + static_cast<int>(s) + 1);
        next_order.push_back(order[col]);
      }
    }
    if (!next.empty()) plan.later_steps.push_back(std::move(next));
    order = std::move(next_order);
  }
  return plan;
}

}  // namespace

ExampleGraph build_graph(const PerturbationSpace& space, const TokenSeq& x,
                         const TokenLookup& lookup) {
  if (x.empty()) throw Error("build_graph: empty input");
  ExampleGraph g;
  g.budgets = space.budgets();
  for (const std::string& token : x) {
    g.original.push_back(lookup(token));
    std::vector<Emission> choices{{{g.original.back()}, -1}};
    for (std::size_t k = 0; k < space.size(); ++k) {
      for (const TokenSeq& seq : space.items()[k].transformation.replace(token)) {
        Emission e;
        e.item = static_cast<int>(k);
        for (const std::string& t : seq) e.tokens.push_back(lookup(t));
        choices.push_back(std::move(e));
      }
    }
    g.choices.push_back(std::move(choices));
  }
  return g;
}

ExampleGraph build_graph(const PerturbationSpace& space, const TokenSeq& x,
                         const Vocabulary& vocab) {
  return build_graph(space, x, [&vocab](const std::string& t) { return vocab.id(t); });
}

Eigen::VectorXd embed_pair(const ModelParams& params, std::span<const TokenId> x, int i, int j) {
  if (j < 1 || j > static_cast<int>(x.size())) throw ShapeError("embed_pair: j out of range");
  return embedding(params, x[static_cast<std::size_t>(j) - 1], i);
}

std::vector<int> final_length_range(const ExampleGraph& graph) {
  const BudgetCode code(graph.budgets);
  const auto fwd = forward_reachable(graph, code);
  std::set<int> lengths;
  for (const LayerKey& k : fwd.back()) {
    if (k.first > 0) lengths.insert(k.first);
  }
  return {lengths.begin(), lengths.end()};
}

std::vector<int> final_length_range(const PerturbationSpace& space, const TokenSeq& x) {
  return final_length_range(build_graph(space, x, [](const std::string&) { return 0; }));
}

std::vector<TokenId> final_tokens(const ExampleGraph& graph, int length) {
  const BudgetCode code(graph.budgets);
  const auto fwd = forward_reachable(graph, code);
  const auto alive = live_keys(graph, code, fwd, length);
  std::set<TokenId> out;
  for (int j = 0; j < graph.length(); ++j) {
    for (const auto& [i, c] : alive[static_cast<std::size_t>(j)]) {
      for (const Emission& e : graph.choices[static_cast<std::size_t>(j)]) {
        const int nc = code.spend(c, e);
        if (nc < 0 || e.tokens.empty()) continue;
        const LayerKey to{i + static_cast<int>(e.tokens.size()), nc};
        if (to.first == length && alive[static_cast<std::size_t>(j) + 1].count(to) > 0) {
          out.insert(e.tokens.back());
        }
      }
    }
  }
  return {out.begin(), out.end()};
}

Box<double> final_query_hull(const ExampleGraph& graph, int length, const ModelParams& params) {
  const std::vector<TokenId> candidates = final_tokens(graph, length);
  if (candidates.empty()) throw Error("final_query_hull: length not achievable");
  const Tensor wq = params.stacked_query();
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  for (TokenId t : candidates) {
    const Eigen::VectorXd q = wq * embedding(params, t, length);
    if (lo.size() == 0) {
      lo = q;
      hi = q;
    } else {
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
    }
  }
  return Box<double>(lo, hi);
}

CertPlan plan_certification(const ExampleGraph& graph, int max_positions) {
  const BudgetCode code(graph.budgets);
  const auto fwd = forward_reachable(graph, code);
  CertPlan plan;
  plan.input_length = graph.length();
  for (int length : final_length_range(graph)) {
    if (length > max_positions) {
      throw PositionRangeError("perturbed length " + std::to_string(length) +
                               " exceeds max_positions " + std::to_string(max_positions));
    }
    const auto alive = live_keys(graph, code, fwd, length);
    BranchPlan branch;
    branch.length = length;
    for (const auto& layer : alive) branch.key_count += static_cast<int>(layer.size());
    for (int j = 0; j < graph.length(); ++j) {
      branch.layers.push_back(plan_layer(graph, code, j, alive[static_cast<std::size_t>(j)],
                                         alive[static_cast<std::size_t>(j) + 1]));
    }
    branch.final_tokens = final_tokens(graph, length);
    plan.branches.push_back(std::move(branch));
  }
  return plan;
}

}  // namespace recert
