#include "recert/autodiff.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace recert::ad {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

void require_column(const Var& a, const Var& col, const char* op) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError(std::string(op) + ": expected a " + std::to_string(a.rows()) + "x1 column");
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shared body of maximum/minimum: `pick_a(a, b)` is true where a wins strictly.
template <typename Pick>
Var binary_extremum(const Var& a, const Var& b, Pick pick_a, const char* op) {
  require_same_shape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (Index k = 0; k < av.size(); ++k) out(k) = pick_a(av(k), bv(k)) ? av(k) : bv(k);
  return a.tape().record(std::move(out), {a, b}, [a, b, pick_a](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor ga(av.rows(), av.cols());
    Tensor gb(av.rows(), av.cols());
    for (Index k = 0; k < av.size(); ++k) {
      if (av(k) == bv(k)) {
        ga(k) = 0.5 * g(k);
        gb(k) = 0.5 * g(k);
      } else if (pick_a(av(k), bv(k))) {
        ga(k) = g(k);
        gb(k) = 0.0;
      } else {
        ga(k) = 0.0;
        gb(k) = g(k);
      }
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

template <typename Better>
Var segment_extremum(const Var& a, std::span<const int> segments, Index groups, Better better,
                     const char* op) {
  if (static_cast<Index>(segments.size()) != a.cols()) {
    throw ShapeError(std::string(op) + ": one segment id per column required");
  }
  const Tensor& av = a.value();
  Tensor out(av.rows(), groups);
  std::vector<bool> seen(static_cast<std::size_t>(groups), false);
  for (Index c = 0; c < av.cols(); ++c) {
    const int s = segments[static_cast<std::size_t>(c)];
    if (s < 0 || s >= groups) throw ShapeError(std::string(op) + ": segment id out of range");
    if (!seen[static_cast<std::size_t>(s)]) {
      out.col(s) = av.col(c);
      seen[static_cast<std::size_t>(s)] = true;
    } else {
      for (Index r = 0; r < av.rows(); ++r) {
        if (better(av(r, c), out(r, s))) out(r, s) = av(r, c);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ShapeError(std::string(op) + ": empty segment");
  }
  std::vector<int> seg(segments.begin(), segments.end());
  Tensor kept = out;
  return a.tape().record(
      std::move(out), {a},
      [a, seg = std::move(seg), ov = std::move(kept), groups](Tape& t, const Tensor& g) {
        const Tensor& av = a.value();
        Eigen::MatrixXi ties = Eigen::MatrixXi::Zero(av.rows(), groups);
        for (Index c = 0; c < av.cols(); ++c) {
          const int s = seg[static_cast<std::size_t>(c)];
          for (Index r = 0; r < av.rows(); ++r) ties(r, s) += av(r, c) == ov(r, s) ? 1 : 0;
        }
        Tensor ga = Tensor::Zero(av.rows(), av.cols());
        for (Index c = 0; c < av.cols(); ++c) {
          const int s = seg[static_cast<std::size_t>(c)];
          for (Index r = 0; r < av.rows(); ++r) {
            if (av(r, c) == ov(r, s)) ga(r, c) = g(r, s) / ties(r, s);
          }
        }
        t.accumulate(a, ga);
      });
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node is not 1x1");
  return v(0, 0);
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external != nullptr ? *n.external : n.owned;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const Tensor& external) {
  Node n;
  n.external = &external;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& p : parents) {
    if (nodes_[static_cast<std::size_t>(p.id())].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward(): loss must be a 1x1 node");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Tensor::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.size() == 0) {
    const Tensor& val = value(v.id());
    return Tensor::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

bool Tape::requires_grad(const Var& v) const {
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [a, b](Tape& t, const Tensor& g) {
                           t.accumulate(a, g.cwiseProduct(b.value()));
                           t.accumulate(b, g.cwiseProduct(a.value()));
                         });
}

Var maximum(const Var& a, const Var& b) {
  return binary_extremum(a, b, [](double x, double y) { return x > y; }, "maximum");
}

Var minimum(const Var& a, const Var& b) {
  return binary_extremum(a, b, [](double x, double y) { return x < y; }, "minimum");
}

Var scale(const Var& a, double s) {
  return a.tape().record(a.value() * s, {a}, [a, s](Tape& t, const Tensor& g) {
    t.accumulate(a, g * s);
  });
}

Var add_scalar(const Var& a, double s) {
  return a.tape().record(a.value().array() + s, {a},
                         [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value().unaryExpr(&stable_sigmoid);
  return a.tape().record(out, {a}, [a, out](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Var exp(const Var& a) {
  Tensor out = a.value().array().exp().matrix();
  return a.tape().record(out, {a}, [a, out](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseProduct(out));
  });
}

Var log1p(const Var& a) {
  Tensor out = a.value().unaryExpr([](double x) { return std::log1p(x); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseQuotient((1.0 + a.value().array()).matrix()));
  });
}

Var abs(const Var& a) {
  return a.tape().record(a.value().cwiseAbs(), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor sign = a.value().unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    t.accumulate(a, g.cwiseProduct(sign));
  });
}

Var softplus(const Var& a) {
  Tensor out = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, g.cwiseProduct(a.value().unaryExpr(&stable_sigmoid)));
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var sum(const Var& a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

Var reduce_max(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("reduce_max: empty input");
  const double m = a.value().maxCoeff();
  Tensor out(1, 1);
  out(0, 0) = m;
  return a.tape().record(std::move(out), {a}, [a, m](Tape& t, const Tensor& g) {
    const auto hits = (a.value().array() == m).cast<double>();
    t.accumulate(a, (hits * (g(0, 0) / hits.sum())).matrix());
  });
}

Var pick(const Var& a, Index row, Index col) {
  if (row < 0 || row >= a.rows() || col < 0 || col >= a.cols()) {
    throw ShapeError("pick: index out of range");
  }
  Tensor out(1, 1);
  out(0, 0) = a.value()(row, col);
  return a.tape().record(std::move(out), {a}, [a, row, col](Tape& t, const Tensor& g) {
    Tensor ga = Tensor::Zero(a.rows(), a.cols());
    ga(row, col) = g(0, 0);
    t.accumulate(a, ga);
  });
}

Var add_col(const Var& a, const Var& col) {
  require_column(a, col, "add_col");
  return a.tape().record(a.value().colwise() + col.value().col(0), {a, col},
                         [a, col](Tape& t, const Tensor& g) {
                           t.accumulate(a, g);
                           t.accumulate(col, g.rowwise().sum());
                         });
}

Var mul_col(const Var& a, const Var& col) {
  require_column(a, col, "mul_col");
  Tensor out = (a.value().array().colwise() * col.value().col(0).array()).matrix();
  return a.tape().record(std::move(out), {a, col}, [a, col](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      t.accumulate(a, (g.array().colwise() * col.value().col(0).array()).matrix());
    }
    if (t.requires_grad(col)) t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Indexing

Var gather_cols(const Var& a, std::span<const int> cols) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= av.cols()) throw ShapeError("gather_cols: index out of range");
    out.col(static_cast<Index>(k)) = av.col(cols[k]);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor ga = Tensor::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) ga.col(idx[k]) += g.col(static_cast<Index>(k));
    t.accumulate(a, ga);
  });
}

Var embed_rows(const Var& table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  Tensor out(tv.cols(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= tv.rows()) throw ShapeError("embed_rows: row out of range");
    out.col(static_cast<Index>(k)) = tv.row(ids[k]).transpose();
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table},
                             [table, idx = std::move(idx)](Tape& t, const Tensor& g) {
                               Tensor gt = Tensor::Zero(table.rows(), table.cols());
                               for (std::size_t k = 0; k < idx.size(); ++k) {
                                 gt.row(idx[k]) += g.col(static_cast<Index>(k)).transpose();
                               }
                               t.accumulate(table, gt);
                             });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hcat: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("hcat: row count mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [ps](Tape& t, const Tensor& g) {
    Index at = 0;
    for (const Var& p : ps) {
      t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vcat: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("vcat: column count mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [ps](Tape& t, const Tensor& g) {
    Index at = 0;
    for (const Var& p : ps) {
      t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var segment_max(const Var& a, std::span<const int> segments, Index groups) {
  return segment_extremum(a, segments, groups, [](double x, double y) { return x > y; },
                          "segment_max");
}

Var segment_min(const Var& a, std::span<const int> segments, Index groups) {
  return segment_extremum(a, segments, groups, [](double x, double y) { return x < y; },
                          "segment_min");
}

Var softmax_rows(const Var& a) {
  Tensor shifted = a.value().colwise() - a.value().rowwise().maxCoeff();
  Tensor e = shifted.array().exp().matrix();
  Tensor out = e.array().colwise() / e.rowwise().sum().array();
  return a.tape().record(out, {a}, [a, out](Tape& t, const Tensor& g) {
    const Eigen::VectorXd inner = g.cwiseProduct(out).rowwise().sum();
    t.accumulate(a, out.cwiseProduct((g.colwise() - inner)));
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

std::vector<Tensor> gradients(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.parameter(p));
  Var loss = f(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (const Var& leaf : leaves) grads.push_back(tape.grad(leaf));
  return grads;
}

double finite_diff_check(const ScalarFn& f, std::span<Tensor> params, double step) {
  const std::vector<Tensor> analytic = gradients(f, params);
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.constant(p));
    return f(tape, leaves).scalar();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    for (Index c = 0; c < p.size(); ++c) {
      const double saved = p(c);
      p(c) = saved + step;
      const double up = evaluate();
      p(c) = saved - step;
      const double down = evaluate();
      p(c) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k](c);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace recert::ad
