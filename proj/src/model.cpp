#include "recert/model.hpp"

#include <cmath>
#include <random>

namespace recert {
namespace {

Tensor stack_rows(const std::vector<HeadProjections>& heads, Tensor HeadProjections::*member) {
  const Eigen::Index rows = static_cast<Eigen::Index>(heads.size()) * (heads.front().*member).rows();
  Tensor out(rows, (heads.front().*member).cols());
  Eigen::Index at = 0;
  for (const HeadProjections& h : heads) {
    const Tensor& m = h.*member;
    out.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  return out;
}

ModelParams shaped_zeros(const ModelConfig& c) {
  c.validate();
  ModelParams p;
  p.config = c;
  p.token_table = Tensor::Zero(c.vocab_size, c.d_model);
  p.pos_table = Tensor::Zero(c.max_positions, c.d_model);
  p.heads.resize(static_cast<std::size_t>(c.n_heads));
  for (HeadProjections& h : p.heads) {
    h.w_q = Tensor::Zero(c.d_head(), c.d_model);
    h.w_k = Tensor::Zero(c.d_head(), c.d_model);
    h.w_v = Tensor::Zero(c.d_head(), c.d_model);
  }
  p.w_o = Tensor::Zero(c.d_model, c.d_model);
  p.w1 = Tensor::Zero(c.d_hidden, c.d_model);
  p.b1 = Tensor::Zero(c.d_hidden, 1);
  p.w2 = Tensor::Zero(c.n_classes, c.d_hidden);
  p.b2 = Tensor::Zero(c.n_classes, 1);
  return p;
}

Tensor head_indicator(const ModelConfig& c) {
  Tensor h = Tensor::Zero(c.n_heads, c.d_model);
  for (int k = 0; k < c.n_heads; ++k) h.block(k, k * c.d_head(), 1, c.d_head()).setOnes();
  return h;
}

void require_tokens(const ModelParams& params, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ShapeError("forward: empty input");
  if (static_cast<int>(tokens.size()) > params.config.max_positions) {
    throw PositionRangeError("forward: input of length " + std::to_string(tokens.size()) +
                             " exceeds max_positions " +
                             std::to_string(params.config.max_positions));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= params.config.vocab_size) throw ShapeError("forward: token id out of range");
  }
}

}  // namespace

double ModelConfig::score_scale() const {
  return attention_scaling ? 1.0 / std::sqrt(static_cast<double>(d_head())) : 1.0;
}

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || d_hidden <= 0 || max_positions <= 0 ||
      n_classes < 2) {
    throw ShapeError("model config: dimensions must be positive and n_classes >= 2");
  }
  if (d_model % n_heads != 0) {
    throw ShapeError("model config: d_model " + std::to_string(d_model) +
                     " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.vocab_size == b.vocab_size && a.d_model == b.d_model && a.n_heads == b.n_heads &&
         a.d_hidden == b.d_hidden && a.max_positions == b.max_positions &&
         a.n_classes == b.n_classes && a.attention_scaling == b.attention_scaling;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out{{"token_table", &token_table},
                                                   {"pos_table", &pos_table}};
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string prefix = "head" + std::to_string(h) + ".";
    out.emplace_back(prefix + "w_q", &heads[h].w_q);
    out.emplace_back(prefix + "w_k", &heads[h].w_k);
    out.emplace_back(prefix + "w_v", &heads[h].w_v);
  }
  out.emplace_back("w_o", &w_o);
  out.emplace_back("w1", &w1);
  out.emplace_back("b1", &b1);
  out.emplace_back("w2", &w2);
  out.emplace_back("b2", &b2);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
  return out;
}

Tensor ModelParams::stacked_query() const { return stack_rows(heads, &HeadProjections::w_q); }
Tensor ModelParams::stacked_key() const { return stack_rows(heads, &HeadProjections::w_k); }
Tensor ModelParams::stacked_value() const { return stack_rows(heads, &HeadProjections::w_v); }

ModelParams zero_params(const ModelConfig& config) { return shaped_zeros(config); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = shaped_zeros(config);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : p.named_tensors()) {
    if (name == "b1" || name == "b2") continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index k = 0; k < t->size(); ++k) (*t)(k) = dist(rng);
  }
  return p;
}

Eigen::VectorXd embedding(const ModelParams& params, TokenId token, int position) {
  if (position < 1 || position > params.config.max_positions) {
    throw PositionRangeError("position " + std::to_string(position) +
                             " outside the position table (max_positions " +
                             std::to_string(params.config.max_positions) + ")");
  }
  if (token < 0 || token >= params.config.vocab_size) throw ShapeError("token id out of range");
  return (params.token_table.row(token) + params.pos_table.row(position - 1)).transpose();
}

Eigen::VectorXd final_state(const ModelParams& params, std::span<const TokenId> tokens,
                            AttentionMode mode) {
  require_tokens(params, tokens);
  const ModelConfig& c = params.config;
  const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
  Tensor emb(c.d_model, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    emb.col(i) = embedding(params, tokens[static_cast<std::size_t>(i)], static_cast<int>(i) + 1);
  }
  Eigen::VectorXd out(c.d_model);
  for (int h = 0; h < c.n_heads; ++h) {
    const HeadProjections& hp = params.heads[static_cast<std::size_t>(h)];
    const Eigen::VectorXd q = hp.w_q * emb.col(n - 1);
    const Tensor keys = hp.w_k * emb;
    const Tensor values = hp.w_v * emb;
    out.segment(h * c.d_head(), c.d_head()) =
        mode == AttentionMode::softmax
            ? attention_softmax<double>(q, keys, values, c.score_scale())
            : attention_recurrence<double>(q, keys, values, c.score_scale());
  }
  return out;
}

Eigen::VectorXd readout(const ModelParams& params, const Eigen::VectorXd& state) {
  const Eigen::VectorXd merged = params.w_o * state;
  const Eigen::VectorXd hidden = (params.w1 * merged + params.b1.col(0)).cwiseMax(0.0);
  return params.w2 * hidden + params.b2.col(0);
}

Eigen::VectorXd forward_concrete(const ModelParams& params, std::span<const TokenId> tokens,
                                 AttentionMode mode) {
  return readout(params, final_state(params, tokens, mode));
}

Box<double> readout_abstract(const ModelParams& params, const Box<double>& state) {
  const Eigen::VectorXd no_bias = Eigen::VectorXd::Zero(params.config.d_model);
  const Box<double> merged = affine<double>(params.w_o, no_bias, state);
  const Box<double> hidden = relu(affine<double>(params.w1, params.b1.col(0), merged));
  return affine<double>(params.w2, params.b2.col(0), hidden);
}

Box<double> forward_abstract(const ModelParams& params,
                             std::span<const AbstractHeadState<double>> heads) {
  const ModelConfig& c = params.config;
  if (static_cast<int>(heads.size()) != c.n_heads) throw ShapeError("forward_abstract: head count");
  Eigen::VectorXd lo(c.d_model);
  Eigen::VectorXd hi(c.d_model);
  for (int h = 0; h < c.n_heads; ++h) {
    const Box<double>& f = heads[static_cast<std::size_t>(h)].f;
    if (f.size() != c.d_head()) throw ShapeError("forward_abstract: head width");
    lo.segment(h * c.d_head(), c.d_head()) = f.lo;
    hi.segment(h * c.d_head(), c.d_head()) = f.hi;
  }
  return readout_abstract(params, Box<double>(lo, hi));
}

// ---------------------------------------------------------------------------
// Tape bindings

ModelVars bind(ad::Tape& tape, const ModelParams& params, bool track) {
  ModelVars v;
  v.params = &params;
  auto leaf = [&](const Tensor& t) { return track ? tape.parameter(t) : tape.constant(t); };
  v.token_table = leaf(params.token_table);
  v.pos_table = leaf(params.pos_table);
  std::vector<ad::Var> q, k, val;
  v.leaves = {v.token_table, v.pos_table};
  for (const HeadProjections& h : params.heads) {
    q.push_back(leaf(h.w_q));
    k.push_back(leaf(h.w_k));
    val.push_back(leaf(h.w_v));
    v.leaves.push_back(q.back());
    v.leaves.push_back(k.back());
    v.leaves.push_back(val.back());
  }
  v.w_q = ad::vcat(q);
  v.w_k = ad::vcat(k);
  v.w_v = ad::vcat(val);
  v.w_o = leaf(params.w_o);
  v.w1 = leaf(params.w1);
  v.b1 = leaf(params.b1);
  v.w2 = leaf(params.w2);
  v.b2 = leaf(params.b2);
  for (const ad::Var& x : {v.w_o, v.w1, v.b1, v.w2, v.b2}) v.leaves.push_back(x);
  const Tensor indicator = head_indicator(params.config);
  v.head_sum = tape.constant(indicator);
  v.head_expand = tape.constant(indicator.transpose());
  return v;
}

ad::Var logaddexp_graph(const ad::Var& a, const ad::Var& b) {
  return ad::maximum(a, b) + ad::log1p(ad::exp(-ad::abs(a - b)));
}

ad::Var readout_graph(const ModelVars& vars, const ad::Var& state) {
  const ad::Var merged = ad::matmul(vars.w_o, state);
  const ad::Var hidden = ad::relu(ad::add_col(ad::matmul(vars.w1, merged), vars.b1));
  return ad::add_col(ad::matmul(vars.w2, hidden), vars.b2);
}

ad::Var forward_graph(const ModelVars& vars, std::span<const TokenId> tokens, AttentionMode mode) {
  const ModelParams& params = *vars.params;
  require_tokens(params, tokens);
  ad::Tape& tape = vars.token_table.tape();
  const int n = static_cast<int>(tokens.size());
  std::vector<int> positions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;
  const ad::Var emb =
      ad::embed_rows(vars.token_table, tokens) + ad::embed_rows(vars.pos_table, positions);
  const ad::Var keys = ad::matmul(vars.w_k, emb);
  const ad::Var values = ad::matmul(vars.w_v, emb);
  const int last = n - 1;
  const ad::Var query = ad::matmul(vars.w_q, ad::gather_cols(emb, std::span(&last, 1)));
  ad::Var scores = ad::matmul(vars.head_sum, ad::mul_col(keys, query));
  if (params.config.attention_scaling) scores = ad::scale(scores, params.config.score_scale());

  ad::Var state;
  if (mode == AttentionMode::softmax) {
    const ad::Var weights = ad::matmul(vars.head_expand, ad::softmax_rows(scores));
    state = ad::matmul(ad::mul(weights, values), tape.constant(Tensor::Ones(n, 1)));
  } else {
    const int first = 0;
    ad::Var f = ad::gather_cols(values, std::span(&first, 1));
    ad::Var g = ad::gather_cols(scores, std::span(&first, 1));
    for (int i = 1; i < n; ++i) {
      const ad::Var qk = ad::gather_cols(scores, std::span(&i, 1));
      const ad::Var v = ad::gather_cols(values, std::span(&i, 1));
      const ad::Var take = ad::matmul(vars.head_expand, ad::sigmoid(qk - g));
      const ad::Var keep = ad::matmul(vars.head_expand, ad::sigmoid(g - qk));
      f = ad::mul(v, take) + ad::mul(f, keep);
      g = logaddexp_graph(g, qk);
    }
    state = f;
  }
  return readout_graph(vars, state);
}

BoxVar affine_graph(const ad::Var& w, const ad::Var* bias, const BoxVar& x) {
  const ad::Var pos = ad::relu(w);
  const ad::Var negp = w - pos;
  ad::Var lo = ad::matmul(pos, x.lo) + ad::matmul(negp, x.hi);
  ad::Var hi = ad::matmul(pos, x.hi) + ad::matmul(negp, x.lo);
  if (bias != nullptr) {
    lo = ad::add_col(lo, *bias);
    hi = ad::add_col(hi, *bias);
  }
  return {lo, hi};
}

BoxVar readout_abstract_graph(const ModelVars& vars, const BoxVar& state) {
  const BoxVar merged = affine_graph(vars.w_o, nullptr, state);
  BoxVar hidden = affine_graph(vars.w1, &vars.b1, merged);
  hidden = {ad::relu(hidden.lo), ad::relu(hidden.hi)};
  return affine_graph(vars.w2, &vars.b2, hidden);
}

}  // namespace recert
