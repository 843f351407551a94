#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every primitive in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Vars are
// lightweight handles into the tape; they stay valid as long as the tape.

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace recert::ad {

using Tensor = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Gradient-tracked leaf that refers to `external` without copying it.
  /// `external` must outlive the tape and stay unchanged until backward().
  Var parameter(const Tensor& external);
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, std::span<const Var> parents, Backward backward);

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Runs the reverse sweep from a 1x1 loss. Throws ShapeError otherwise.
  void backward(const Var& loss);

  /// Gradient of the last backward() w.r.t. v; zeros if v was not on the path.
  Tensor grad(const Var& v) const;
  bool requires_grad(const Var& v) const;
  const Tensor& value(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Subgradient goes to the larger argument, 0.5/0.5 on exact ties.
Var maximum(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log1p(const Var& a);
/// d|x|/dx at 0 is 0.
Var abs(const Var& a);
Var softplus(const Var& a);

Var matmul(const Var& a, const Var& b);
Var sum(const Var& a);
Var dot(const Var& a, const Var& b);
/// Largest element as a 1x1; ties share the gradient equally.
Var reduce_max(const Var& a);
Var pick(const Var& a, Index row, Index col);

/// a (r x n) combined with a column c (r x 1) broadcast across columns.
Var add_col(const Var& a, const Var& col);
Var mul_col(const Var& a, const Var& col);

Var gather_cols(const Var& a, std::span<const int> cols);
/// Column j of the result is row ids[j] of `table`.
Var embed_rows(const Var& table, std::span<const int> ids);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);

/// Per-row max (min) over the columns assigned to each group.
/// segments[c] is the group of column c; every group must be non-empty.
Var segment_max(const Var& a, std::span<const int> segments, Index groups);
Var segment_min(const Var& a, std::span<const int> segments, Index groups);

/// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

/// Scalar function of a list of parameter leaves.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over all parameter coordinates of
/// |analytic - central difference| / max(1, |analytic|).
/// `params` are perturbed in place and restored before returning.
double finite_diff_check(const ScalarFn& f, std::span<Tensor> params, double step = 1e-5);

/// Analytic gradients of f at params, one tensor per parameter.
std::vector<Tensor> gradients(const ScalarFn& f, std::span<const Tensor> params);

}  // namespace recert::ad
