#include "recert/certify.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recert {
namespace {

using ad::Var;

struct IntervalVar {
  Var lo;
  Var hi;
};

// Hull of the four endpoint products of two interval batches.
IntervalVar mul_hull(const IntervalVar& a, const IntervalVar& b) {
  const Var p1 = ad::mul(a.lo, b.lo);
  const Var p2 = ad::mul(a.lo, b.hi);
  const Var p3 = ad::mul(a.hi, b.lo);
  const Var p4 = ad::mul(a.hi, b.hi);
  return {ad::minimum(ad::minimum(p1, p2), ad::minimum(p3, p4)),
          ad::maximum(ad::maximum(p1, p2), ad::maximum(p3, p4))};
}

std::vector<int> zero_based(std::span<const int> positions) {
  std::vector<int> out(positions.begin(), positions.end());
  for (int& p : out) --p;
  return out;
}

class BranchRunner {
 public:
  BranchRunner(const ModelVars& vars, const BranchPlan& branch, MeetStats* stats)
      : vars_(vars), branch_(branch), stats_(stats), tape_(vars.token_table.tape()) {
    const ModelParams& params = *vars.params;
    scale_ = params.config.score_scale();
    // Final-query hull over every token that can end a length-l string.
    const std::vector<int> last(branch.final_tokens.size(), branch.length - 1);
    const Var emb = ad::embed_rows(vars.token_table, branch.final_tokens) +
                    ad::embed_rows(vars.pos_table, last);
    const Var queries = ad::matmul(vars.w_q, emb);
    const std::vector<int> one_group(branch.final_tokens.size(), 0);
    query_ = {ad::segment_min(queries, one_group, 1), ad::segment_max(queries, one_group, 1)};
  }

  StateBatch run() {
    std::optional<StateBatch> state;
    for (const LayerPlan& layer : branch_.layers) state = advance(layer, state);
    if (!state) throw Error("propagate: no state reached the final length");
    const std::vector<int> one_group(static_cast<std::size_t>(state->f_lo.cols()), 0);
    return join(*state, one_group, 1);
  }

 private:
  struct PointEmission {
    Var keys;    // d_model x m
    Var values;  // d_model x m
    IntervalVar qk;  // n_heads x m
  };

  PointEmission emit(const EmissionBatch& batch) {
    const std::vector<int> rows = zero_based(batch.positions);
    const Var emb = ad::embed_rows(vars_.token_table, batch.tokens) +
                    ad::embed_rows(vars_.pos_table, rows);
    PointEmission out;
    out.keys = ad::matmul(vars_.w_k, emb);
    out.values = ad::matmul(vars_.w_v, emb);
    const Var at_lo = ad::mul_col(out.keys, query_.lo);
    const Var at_hi = ad::mul_col(out.keys, query_.hi);
    out.qk = {ad::matmul(vars_.head_sum, ad::minimum(at_lo, at_hi)),
              ad::matmul(vars_.head_sum, ad::maximum(at_lo, at_hi))};
    if (scale_ != 1.0) out.qk = {ad::scale(out.qk.lo, scale_), ad::scale(out.qk.hi, scale_)};
    return out;
  }

  StateBatch start(const EmissionBatch& batch) {
    const PointEmission e = emit(batch);
    return {e.values, e.values, e.qk.lo, e.qk.hi};
  }

  Var expand(const Var& per_head) { return ad::matmul(vars_.head_expand, per_head); }

  StateBatch step(const StateBatch& s, const EmissionBatch& batch) {
    const PointEmission e = emit(batch);
    const Var& v = e.values;
    const IntervalVar take{expand(ad::sigmoid(e.qk.lo - s.g_hi)),
                           expand(ad::sigmoid(e.qk.hi - s.g_lo))};
    const IntervalVar keep{expand(ad::sigmoid(s.g_lo - e.qk.hi)),
                           expand(ad::sigmoid(s.g_hi - e.qk.lo))};

    // (v - f) take + f
    const IntervalVar pa = mul_hull({v - s.f_hi, v - s.f_lo}, take);
    const IntervalVar a{pa.lo + s.f_lo, pa.hi + s.f_hi};
    // v + (f - v) keep
    const IntervalVar pb = mul_hull({s.f_lo - v, s.f_hi - v}, keep);
    const IntervalVar b{v + pb.lo, v + pb.hi};

    Var lo = ad::maximum(a.lo, b.lo);
    Var hi = ad::minimum(a.hi, b.hi);
    if (collapse_crossings(lo.value(), hi.value())) {
      const Var mid = ad::scale(lo + hi, 0.5);
      lo = ad::minimum(lo, mid);
      hi = ad::maximum(hi, mid);
    }
    if (stats_ != nullptr) record(a, b, lo, hi);
    return {lo, hi, logaddexp_graph(s.g_lo, e.qk.lo), logaddexp_graph(s.g_hi, e.qk.hi)};
  }

  // True if some lo > hi within slack; throws if a crossing exceeds it.
  static bool collapse_crossings(const Tensor& lo, const Tensor& hi) {
    bool crossed = false;
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
      if (lo(k) <= hi(k)) continue;
      if (lo(k) - hi(k) > slack_for(std::max(std::abs(lo(k)), std::abs(hi(k))))) {
        throw SoundnessViolation("abstract attention step produced an empty interval");
      }
      crossed = true;
    }
    return crossed;
  }

  void record(const IntervalVar& a, const IntervalVar& b, const Var& lo, const Var& hi) {
    const Tensor wa = a.hi.value() - a.lo.value();
    const Tensor wb = b.hi.value() - b.lo.value();
    const Tensor wm = hi.value() - lo.value();
    for (Eigen::Index c = 0; c < wm.cols(); ++c) {
      bool strict = false;
      for (Eigen::Index r = 0; r < wm.rows(); ++r) {
        const double single = std::min(wa(r, c), wb(r, c));
        if (wm(r, c) > single) ++stats_->wider_than_single;
        if (wm(r, c) < single) strict = true;
        ++stats_->dims;
      }
      ++stats_->steps;
      if (strict) ++stats_->strictly_narrower_steps;
    }
  }

  static StateBatch gather(const StateBatch& s, std::span<const int> cols) {
    return {ad::gather_cols(s.f_lo, cols), ad::gather_cols(s.f_hi, cols),
            ad::gather_cols(s.g_lo, cols), ad::gather_cols(s.g_hi, cols)};
  }

  static StateBatch join(const StateBatch& s, std::span<const int> groups, Eigen::Index count) {
    return {ad::segment_min(s.f_lo, groups, count), ad::segment_max(s.f_hi, groups, count),
            ad::segment_min(s.g_lo, groups, count), ad::segment_max(s.g_hi, groups, count)};
  }

  static StateBatch concat(const std::vector<StateBatch>& parts) {
    if (parts.size() == 1) return parts.front();
    std::vector<Var> fl, fh, gl, gh;
    for (const StateBatch& p : parts) {
      fl.push_back(p.f_lo);
      fh.push_back(p.f_hi);
      gl.push_back(p.g_lo);
      gh.push_back(p.g_hi);
    }
    return {ad::hcat(fl), ad::hcat(fh), ad::hcat(gl), ad::hcat(gh)};
  }

  std::optional<StateBatch> advance(const LayerPlan& layer, const std::optional<StateBatch>& src) {
    std::vector<std::optional<StateBatch>> stages;
    stages.push_back(src);

    std::vector<StateBatch> first;
    if (!layer.first_step.empty()) first.push_back(step(gather(*src, layer.first_step.from), layer.first_step));
    if (!layer.first_init.empty()) first.push_back(start(layer.first_init));
    if (!first.empty()) stages.emplace_back(concat(first));
    for (const EmissionBatch& batch : layer.later_steps) {
      stages.emplace_back(step(gather(*stages.back(), batch.from), batch));
    }

    if (layer.dest_columns == 0) return std::nullopt;
    std::vector<StateBatch> parts;
    std::vector<int> groups;
    for (std::size_t s = 0; s < layer.merge_from.size(); ++s) {
      if (layer.merge_from[s].empty()) continue;
      parts.push_back(gather(*stages[s], layer.merge_from[s]));
      groups.insert(groups.end(), layer.merge_to[s].begin(), layer.merge_to[s].end());
    }
    return join(concat(parts), groups, layer.dest_columns);
  }

  const ModelVars& vars_;
  const BranchPlan& branch_;
  MeetStats* stats_;
  ad::Tape& tape_;
  double scale_ = 1.0;
  IntervalVar query_;
};

std::vector<AbstractHeadState<double>> split_heads(const StateBatch& s, const ModelConfig& c) {
  std::vector<AbstractHeadState<double>> out;
  const int dh = c.d_head();
  for (int h = 0; h < c.n_heads; ++h) {
    Box<double> f(s.f_lo.value().col(0).segment(h * dh, dh),
                  s.f_hi.value().col(0).segment(h * dh, dh));
    out.push_back({std::move(f), Interval<double>(s.g_lo.value()(h, 0), s.g_hi.value()(h, 0))});
  }
  return out;
}

}  // namespace

StateBatch propagate_graph(const ModelVars& vars, const BranchPlan& branch, MeetStats* stats) {
  return BranchRunner(vars, branch, stats).run();
}

CertGraph certify_graph(const ModelVars& vars, const CertPlan& plan, int label, MeetStats* stats) {
  const ModelConfig& c = vars.params->config;
  if (label < 0 || label >= c.n_classes) throw ShapeError("certify: label out of range");
  if (plan.branches.empty()) throw Error("certify: perturbation space has no non-empty member");
  CertGraph out;
  std::vector<Var> margins;
  for (const BranchPlan& branch : plan.branches) {
    BranchGraph bg;
    bg.length = branch.length;
    bg.terminal = propagate_graph(vars, branch, stats);
    bg.logits = readout_abstract_graph(vars, {bg.terminal.f_lo, bg.terminal.f_hi});
    std::vector<Var> wrong;
    const Var true_lo = ad::pick(bg.logits.lo, label, 0);
    for (int k = 0; k < c.n_classes; ++k) {
      if (k != label) wrong.push_back(ad::pick(bg.logits.hi, k, 0) - true_lo);
    }
    bg.margin_upper = ad::reduce_max(ad::hcat(wrong));
    margins.push_back(bg.margin_upper);
    out.branches.push_back(std::move(bg));
  }
  out.worst_margin_upper = ad::reduce_max(ad::hcat(margins));
  return out;
}

const BranchReport* CertResult::branch(int length) const {
  for (const BranchReport& b : branches) {
    if (b.length == length) return &b;
  }
  return nullptr;
}

std::vector<AbstractHeadState<double>> propagate(const ExampleGraph& graph, int length,
                                                 const ModelParams& params, MeetStats* stats) {
  const CertPlan plan = plan_certification(graph, params.config.max_positions);
  for (const BranchPlan& branch : plan.branches) {
    if (branch.length != length) continue;
    ad::Tape tape;
    const ModelVars vars = bind(tape, params, false);
    return split_heads(propagate_graph(vars, branch, stats), params.config);
  }
  throw Error("propagate: length " + std::to_string(length) + " is not achievable");
}

CertResult certify(const ExampleGraph& graph, int label, const ModelParams& params,
                   MeetStats* stats) {
  const CertPlan plan = plan_certification(graph, params.config.max_positions);
  ad::Tape tape;
  const ModelVars vars = bind(tape, params, false);
  const CertGraph g = certify_graph(vars, plan, label, stats);
  CertResult result;
  result.worst_margin_upper = g.worst_margin_upper.scalar();
  result.verdict = result.worst_margin_upper < 0.0 ? Verdict::certified : Verdict::unknown;
  for (std::size_t k = 0; k < g.branches.size(); ++k) {
    const BranchGraph& bg = g.branches[k];
    BranchReport r;
    r.length = bg.length;
    r.key_count = plan.branches[k].key_count;
    r.terminal = split_heads(bg.terminal, params.config);
    r.max_f_width = (bg.terminal.f_hi.value() - bg.terminal.f_lo.value()).maxCoeff();
    r.logits = Box<double>(bg.logits.lo.value().col(0), bg.logits.hi.value().col(0));
    r.margin_upper = bg.margin_upper.scalar();
    result.branches.push_back(std::move(r));
  }
  return result;
}

CertResult certify(const PerturbationSpace& space, const TokenSeq& x, int label,
                   const ModelParams& params, const Vocabulary& vocab, MeetStats* stats) {
  return certify(build_graph(space, x, vocab), label, params, stats);
}

int state_doubles_per_key(const ModelConfig& config) {
  return 2 * config.d_model + 2 * config.n_heads;
}

}  // namespace recert
