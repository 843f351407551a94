#pragma once

// Single-layer decoder-only classifier:
//
//   e_i = t_{token_i} + p_i
//   per head h: attention state of the final position (query from e_n)
//   s = concat_h(state_h)
//   logits = W_2 relu(W_1 W_o s + b_1) + b_2
//
// No residual connection and no layer normalization.

#include "recert/attention.hpp"
#include "recert/autodiff.hpp"
#include "recert/interval.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace recert {

using TokenId = int;
using Tensor = ad::Tensor;

enum class AttentionMode { softmax, recurrent };

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_heads = 2;
  int d_hidden = 32;
  int max_positions = 64;
  int n_classes = 2;
  bool attention_scaling = false;

  int d_head() const { return d_model / n_heads; }
  /// Multiplier applied to every q.k score.
  double score_scale() const;
  /// Throws ShapeError on inconsistent dimensions.
  void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

struct HeadProjections {
  Tensor w_q;  // d_head x d_model
  Tensor w_k;
  Tensor w_v;
};

struct ModelParams {
  ModelConfig config;
  Tensor token_table;  // vocab_size x d_model
  Tensor pos_table;    // max_positions x d_model, row i-1 is position i
  std::vector<HeadProjections> heads;
  Tensor w_o;  // d_model x d_model
  Tensor w1;   // d_hidden x d_model
  Tensor b1;   // d_hidden x 1
  Tensor w2;   // n_classes x d_hidden
  Tensor b2;   // n_classes x 1

  /// Every tensor in a fixed order, with a stable name.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

  /// Head projections stacked row-wise: (n_heads * d_head) x d_model.
  Tensor stacked_query() const;
  Tensor stacked_key() const;
  Tensor stacked_value() const;
};

/// Glorot-uniform weights from a seeded generator, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zero_params(const ModelConfig& config);

/// t_token + p_position, position 1-based.
Eigen::VectorXd embedding(const ModelParams& params, TokenId token, int position);

/// Per-head attention outputs of the final position, stacked.
Eigen::VectorXd final_state(const ModelParams& params, std::span<const TokenId> tokens,
                            AttentionMode mode);
Eigen::VectorXd readout(const ModelParams& params, const Eigen::VectorXd& state);
Eigen::VectorXd forward_concrete(const ModelParams& params, std::span<const TokenId> tokens,
                                 AttentionMode mode = AttentionMode::recurrent);

Box<double> readout_abstract(const ModelParams& params, const Box<double>& state);
/// Sound logit box from per-head abstract final states.
Box<double> forward_abstract(const ModelParams& params,
                             std::span<const AbstractHeadState<double>> heads);

// ---------------------------------------------------------------------------
// Tape bindings

struct BoxVar {
  ad::Var lo;
  ad::Var hi;
};

struct ModelVars {
  const ModelParams* params = nullptr;
  ad::Var token_table;
  ad::Var pos_table;
  ad::Var w_q;  // stacked heads
  ad::Var w_k;
  ad::Var w_v;
  ad::Var w_o;
  ad::Var w1;
  ad::Var b1;
  ad::Var w2;
  ad::Var b2;
  ad::Var head_sum;     // n_heads x d_model: sums each head's rows
  ad::Var head_expand;  // d_model x n_heads: copies a head scalar to its rows
  std::vector<ad::Var> leaves;  // same order as ModelParams::named_tensors()
};

/// Puts the parameters on a tape; `track` selects parameter vs constant leaves.
ModelVars bind(ad::Tape& tape, const ModelParams& params, bool track = true);

ad::Var logaddexp_graph(const ad::Var& a, const ad::Var& b);
ad::Var readout_graph(const ModelVars& vars, const ad::Var& state);
ad::Var forward_graph(const ModelVars& vars, std::span<const TokenId> tokens, AttentionMode mode);
BoxVar affine_graph(const ad::Var& w, const ad::Var* bias, const BoxVar& x);
BoxVar readout_abstract_graph(const ModelVars& vars, const BoxVar& state);

// ---------------------------------------------------------------------------
// Model files

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  ModelParams params;
  std::vector<std::string> vocabulary;  // token of id k at index k
};

/// Textual container; floats are written as hex bit patterns so a round
/// trip is bit-exact.
void save_model(const std::filesystem::path& path, const ModelParams& params,
                std::span<const std::string> vocabulary = {});
ModelFile load_model(const std::filesystem::path& path);

void write_model(std::ostream& out, const ModelParams& params,
                 std::span<const std::string> vocabulary = {});
ModelFile read_model(std::istream& in);

}  // namespace recert
