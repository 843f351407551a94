#pragma once

// Causal softmax attention for the final position, in two forms:
//
//   softmax form:    sum_i v_i exp(q k_i) / sum_j exp(q k_j)
//   recurrent form:  f_1 = v_1,  g_1 = q k_1
//                    f_i = v_i s(q k_i - g_{i-1}) + f_{i-1} s(g_{i-1} - q k_i)
//                    g_i = logaddexp(g_{i-1}, q k_i)
//
// where s is the logistic sigmoid. The two agree exactly in real arithmetic;
// e^{g_i} is the running softmax denominator. Keys and values are columns.

#include "recert/error.hpp"
#include "recert/interval.hpp"

#include <vector>

namespace recert {

template <typename T>
T logaddexp_stable(T a, T b) {
  return logaddexp(a, b);
}

template <typename T>
void require_attention_inputs(const Vec<T>& query, const Mat<T>& keys, const Mat<T>& values) {
  if (keys.cols() == 0) throw ShapeError("attention over an empty sequence");
  if (keys.cols() != values.cols()) throw ShapeError("attention: key/value counts differ");
  if (keys.rows() != query.size()) throw ShapeError("attention: query/key widths differ");
}

template <typename T>
Vec<T> attention_softmax(const Vec<T>& query, const Mat<T>& keys, const Mat<T>& values,
                         T scale = T(1)) {
  require_attention_inputs(query, keys, values);
  const Vec<T> scores = (keys.transpose() * query) * scale;
  const T top = scores.maxCoeff();
  const Vec<T> w = (scores.array() - top).exp().matrix();
  return values * w / w.sum();
}

template <typename T>
struct RecurrenceState {
  Vec<T> f;
  T g;
};

template <typename T>
RecurrenceState<T> recurrence_start(T qk, const Vec<T>& v) {
  return {v, qk};
}

template <typename T>
RecurrenceState<T> recurrence_step(const RecurrenceState<T>& s, T qk, const Vec<T>& v) {
  const T take = sigmoid(qk - s.g);
  const T keep = sigmoid(s.g - qk);
  return {v * take + s.f * keep, logaddexp_stable(s.g, qk)};
}

/// Final f of the recurrence. If `g_trace` is given it receives g_1..g_n.
template <typename T>
Vec<T> attention_recurrence(const Vec<T>& query, const Mat<T>& keys, const Mat<T>& values,
                            T scale = T(1), std::vector<T>* g_trace = nullptr) {
  require_attention_inputs(query, keys, values);
  const Vec<T> scores = (keys.transpose() * query) * scale;
  RecurrenceState<T> s = recurrence_start<T>(scores(0), values.col(0));
  if (g_trace != nullptr) g_trace->assign(1, s.g);
  for (Eigen::Index i = 1; i < keys.cols(); ++i) {
    s = recurrence_step<T>(s, scores(i), values.col(i));
    if (g_trace != nullptr) g_trace->push_back(s.g);
  }
  return s.f;
}

template <typename T>
struct AbstractHeadState {
  Box<T> f;
  Interval<T> g;
};

/// The two single rewritings of one abstract step, before they are met.
template <typename T>
struct StepRewritings {
  Box<T> take_form;  // (v - f) s(qk - g) + f
  Box<T> keep_form;  // v + (f - v) s(g - qk)
};

template <typename T>
AbstractHeadState<T> abstract_start(const Interval<T>& qk, const Box<T>& v) {
  return {v, qk};
}

template <typename T>
AbstractHeadState<T> abstract_step(const AbstractHeadState<T>& s, const Interval<T>& qk,
                                   const Box<T>& v, StepRewritings<T>* rewritings = nullptr) {
  require_same_size(s.f, v, "abstract_step");
  const Interval<T> take = sigmoid(qk - s.g);
  const Interval<T> keep = sigmoid(s.g - qk);
  Box<T> a = v;
  Box<T> b = v;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    a.set(k, (v[k] - s.f[k]) * take + s.f[k]);
    b.set(k, v[k] + (s.f[k] - v[k]) * keep);
  }
  if (rewritings != nullptr) *rewritings = {a, b};
  return {meet(a, b), logaddexp(s.g, qk)};
}

}  // namespace recert
