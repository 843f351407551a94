#pragma once

// Closed intervals and axis-aligned boxes with sound transformers.
//
// Endpoints use default rounding. The only place floating-point drift is
// tolerated is meet() and contains(), which allow a relative slack of
// kSlack * max(1, |bound|).

#include "recert/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

namespace recert {

inline constexpr double kSlack = 1e-9;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
T slack_for(T bound) {
  using std::abs;
  using std::max;
  return T(kSlack) * max(T(1), abs(bound));
}

template <typename T>
T sigmoid(T x) {
  using std::exp;
  if (x >= T(0)) return T(1) / (T(1) + exp(-x));
  const T e = exp(x);
  return e / (T(1) + e);
}

template <typename T>
T relu(T x) {
  return x > T(0) ? x : T(0);
}

/// max(a, b) + log1p(exp(-|a - b|)); finite for any finite a, b.
template <typename T>
T logaddexp(T a, T b) {
  using std::abs;
  using std::exp;
  using std::log1p;
  using std::max;
  return max(a, b) + log1p(exp(-abs(a - b)));
}

template <typename T>
struct Interval {
  T lo{0};
  T hi{0};

  Interval() = default;
  Interval(T lo_, T hi_) : lo(lo_), hi(hi_) {
    if (!(lo <= hi)) throw ShapeError("interval with lo > hi");
  }
  static Interval point(T x) { return Interval(x, x); }

  T width() const { return hi - lo; }
  bool contains(T x) const { return x >= lo - slack_for(lo) && x <= hi + slack_for(hi); }
};

template <typename T>
Interval<T> operator+(const Interval<T>& a, const Interval<T>& b) {
  return {a.lo + b.lo, a.hi + b.hi};
}

template <typename T>
Interval<T> operator-(const Interval<T>& a, const Interval<T>& b) {
  return {a.lo - b.hi, a.hi - b.lo};
}

template <typename T>
Interval<T> operator-(const Interval<T>& a) {
  return {-a.hi, -a.lo};
}

/// Hull of the four endpoint products.
template <typename T>
Interval<T> operator*(const Interval<T>& a, const Interval<T>& b) {
  const T p[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}

template <typename T>
Interval<T> operator*(const Interval<T>& a, T s) {
  return s >= T(0) ? Interval<T>{a.lo * s, a.hi * s} : Interval<T>{a.hi * s, a.lo * s};
}

/// Image of a nondecreasing function: [fn(lo), fn(hi)].
template <typename T, typename Fn>
Interval<T> monotone(const Interval<T>& a, Fn fn) {
  return {fn(a.lo), fn(a.hi)};
}

template <typename T>
Interval<T> sigmoid(const Interval<T>& a) {
  return monotone(a, [](T x) { return sigmoid(x); });
}

template <typename T>
Interval<T> relu(const Interval<T>& a) {
  return monotone(a, [](T x) { return relu(x); });
}

template <typename T>
Interval<T> exp(const Interval<T>& a) {
  return monotone(a, [](T x) {
    using std::exp;
    return exp(x);
  });
}

/// logaddexp is nondecreasing in both arguments, so endpoints are exact.
template <typename T>
Interval<T> logaddexp(const Interval<T>& a, const Interval<T>& b) {
  return {logaddexp(a.lo, b.lo), logaddexp(a.hi, b.hi)};
}

template <typename T>
Interval<T> join(const Interval<T>& a, const Interval<T>& b) {
  using std::max;
  using std::min;
  return {min(a.lo, b.lo), max(a.hi, b.hi)};
}

/// Intersection. A crossing no larger than the slack collapses to its
/// midpoint; anything larger is a SoundnessViolation.
template <typename T>
Interval<T> meet(const Interval<T>& a, const Interval<T>& b) {
  using std::max;
  using std::min;
  const T lo = max(a.lo, b.lo);
  const T hi = min(a.hi, b.hi);
  if (lo <= hi) return {lo, hi};
  using std::abs;
  if (lo - hi <= slack_for(max(abs(lo), abs(hi)))) {
    const T mid = (lo + hi) / T(2);
    return {mid, mid};
  }
  throw SoundnessViolation("meet of disjoint intervals");
}

template <typename T>
struct Box {
  Vec<T> lo;
  Vec<T> hi;

  Box() = default;
  Box(Vec<T> lo_, Vec<T> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw ShapeError("box endpoints differ in size");
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
      if (!(lo(k) <= hi(k))) throw ShapeError("box dimension with lo > hi");
    }
  }
  static Box point(const Vec<T>& x) { return Box(x, x); }
  static Box from(std::initializer_list<Interval<T>> dims) {
    Vec<T> lo(static_cast<Eigen::Index>(dims.size()));
    Vec<T> hi(static_cast<Eigen::Index>(dims.size()));
    Eigen::Index k = 0;
    for (const auto& d : dims) {
      lo(k) = d.lo;
      hi(k) = d.hi;
      ++k;
    }
    return Box(std::move(lo), std::move(hi));
  }

  Eigen::Index size() const { return lo.size(); }
  Interval<T> operator[](Eigen::Index k) const { return {lo(k), hi(k)}; }
  void set(Eigen::Index k, const Interval<T>& v) {
    lo(k) = v.lo;
    hi(k) = v.hi;
  }
  Vec<T> width() const { return hi - lo; }
  T max_width() const { return size() == 0 ? T(0) : width().maxCoeff(); }
};

template <typename T>
void require_same_size(const Box<T>& a, const Box<T>& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": boxes have " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " dimensions");
  }
}

template <typename T>
Box<T> join(const Box<T>& a, const Box<T>& b) {
  require_same_size(a, b, "join");
  return Box<T>(a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi));
}

template <typename T>
Box<T> meet(const Box<T>& a, const Box<T>& b) {
  require_same_size(a, b, "meet");
  Box<T> out = a;
  for (Eigen::Index k = 0; k < a.size(); ++k) out.set(k, meet(a[k], b[k]));
  return out;
}

template <typename T>
bool contains(const Box<T>& a, const Vec<T>& x) {
  if (a.size() != x.size()) throw ShapeError("contains: dimension mismatch");
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (!a[k].contains(x(k))) return false;
  }
  return true;
}

/// Exact interval image of x -> w x + b: the sign of each weight picks
/// which endpoint contributes to the lower and upper bound.
template <typename T>
Box<T> affine(const Mat<T>& w, const Vec<T>& b, const Box<T>& x) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ShapeError("affine: weight " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + " does not fit box of size " +
                     std::to_string(x.size()));
  }
  const Mat<T> pos = w.cwiseMax(T(0));
  const Mat<T> negp = w - pos;
  return Box<T>(pos * x.lo + negp * x.hi + b, pos * x.hi + negp * x.lo + b);
}

/// Interval of <q, k> for q in a box and a point k.
template <typename T>
Interval<T> dot(const Box<T>& q, const Vec<T>& k) {
  if (q.size() != k.size()) throw ShapeError("dot: dimension mismatch");
  T lo(0);
  T hi(0);
  for (Eigen::Index d = 0; d < k.size(); ++d) {
    const T a = q.lo(d) * k(d);
    const T c = q.hi(d) * k(d);
    lo += std::min(a, c);
    hi += std::max(a, c);
  }
  return {lo, hi};
}

template <typename T>
Box<T> relu(const Box<T>& a) {
  return Box<T>(a.lo.cwiseMax(T(0)), a.hi.cwiseMax(T(0)));
}

}  // namespace recert
