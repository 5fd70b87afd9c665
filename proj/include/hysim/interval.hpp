// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/linalg.hpp"

namespace hysim {

/// Closed, open or half-open interval with exact endpoint bookkeeping.
/// Openness matters: the set-condition lemma mixes interiors and closed
/// differences, and sampling those would be unsound.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_open = false;
  bool hi_open = false;

  static Interval closed(double lo, double hi) { return {lo, hi, false, false}; }
  static Interval open(double lo, double hi) { return {lo, hi, true, true}; }
  static Interval point(double v) { return {v, v, false, false}; }
  static Interval whole() { return {-kInf, kInf, false, false}; }

  bool empty() const { return lo > hi || (lo == hi && (lo_open || hi_open)); }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool is_closed() const { return !lo_open && !hi_open; }

  bool contains(double x, double tol = 0.0) const {
    if (empty()) return false;
    const bool lo_ok = lo_open && tol == 0.0 ? x > lo : x >= lo - tol;
    const bool hi_ok = hi_open && tol == 0.0 ? x < hi : x <= hi + tol;
    return lo_ok && hi_ok;
  }

  Interval interior() const { return {lo, hi, true, true}; }
  Interval closure() const { return {lo, hi, false, false}; }

  std::string str() const {
    if (empty()) return "{}";
    return std::string(lo_open ? "(" : "[") + fmt17(lo) + "," + fmt17(hi) +
           (hi_open ? ")" : "]");
  }
};

/// A - B = {a - b}: endpoint attained only when both sides attain theirs.
inline Interval minkowski_sub(const Interval& a, const Interval& b) {
  return {a.lo - b.hi, a.hi - b.lo, a.lo_open || b.hi_open, a.hi_open || b.lo_open};
}

/// A (-) B = {x : x + B subset of A}; defined here for closed B.
inline Interval pontryagin_sub(const Interval& a, const Interval& b) {
  return {a.lo - b.lo, a.hi - b.hi, a.lo_open, a.hi_open};
}

inline Interval intersect(const Interval& a, const Interval& b) {
  Interval r;
  if (a.lo > b.lo || (a.lo == b.lo && a.lo_open)) {
    r.lo = a.lo;
    r.lo_open = a.lo_open;
  } else {
    r.lo = b.lo;
    r.lo_open = b.lo_open;
  }
  if (a.hi < b.hi || (a.hi == b.hi && a.hi_open)) {
    r.hi = a.hi;
    r.hi_open = a.hi_open;
  } else {
    r.hi = b.hi;
    r.hi_open = b.hi_open;
  }
  return r;
}

/// Exact inclusion test honoring endpoint openness.
inline bool subset_of(const Interval& a, const Interval& b) {
  if (a.empty()) return true;
  if (b.empty()) return false;
  bool lo_ok;
  if (a.lo > b.lo)
    lo_ok = true;
  else if (a.lo < b.lo)
    lo_ok = false;
  else
    lo_ok = !b.lo_open || a.lo_open;  // equal endpoints: b must admit what a attains
  bool hi_ok;
  if (a.hi < b.hi)
    hi_ok = true;
  else if (a.hi > b.hi)
    hi_ok = false;
  else
    hi_ok = !b.hi_open || a.hi_open;
  return lo_ok && hi_ok;
}

/// Axis-aligned box, possibly with open faces; the workhorse set class.
struct Box {
  std::vector<Interval> iv;

  Box() = default;
  explicit Box(std::vector<Interval> v) : iv(std::move(v)) {}

  static Box closed(const Vec& lo, const Vec& hi) {
    Box b;
    for (size_t i = 0; i < lo.size(); ++i) b.iv.push_back(Interval::closed(lo[i], hi[i]));
    return b;
  }
  static Box open(const Vec& lo, const Vec& hi) {
    Box b;
    for (size_t i = 0; i < lo.size(); ++i) b.iv.push_back(Interval::open(lo[i], hi[i]));
    return b;
  }
  static Box point(const Vec& v) {
    Box b;
    for (double x : v) b.iv.push_back(Interval::point(x));
    return b;
  }
  static Box whole(int n) {
    Box b;
    for (int i = 0; i < n; ++i) b.iv.push_back(Interval::whole());
    return b;
  }

  int dim() const { return static_cast<int>(iv.size()); }
  bool empty() const {
    for (const auto& i : iv)
      if (i.empty()) return true;
    return iv.empty();
  }
  bool is_closed() const {
    for (const auto& i : iv)
      if (!i.is_closed()) return false;
    return true;
  }
  bool bounded() const {
    for (const auto& i : iv)
      if (!i.bounded()) return false;
    return true;
  }

  bool contains(const Vec& x, double tol = 0.0) const {
    if (static_cast<int>(x.size()) != dim())
      fail(errc::dimension_mismatch, "box dim " + std::to_string(dim()));
    for (size_t i = 0; i < iv.size(); ++i)
      if (!iv[i].contains(x[i], tol)) return false;
    return true;
  }

  /// Signed Euclidean distance to the boundary for closed boxes:
  /// negative inside, zero on the boundary, positive outside.
  double margin(const Vec& x) const {
    if (static_cast<int>(x.size()) != dim()) fail(errc::dimension_mismatch, "box margin");
    double out2 = 0.0;
    double inside = kInf;
    for (size_t i = 0; i < iv.size(); ++i) {
      const double below = iv[i].lo - x[i];
      const double above = x[i] - iv[i].hi;
      const double viol = std::max(below, above);
      if (viol > 0.0) {
        out2 += viol * viol;
      } else {
        inside = std::min(inside, -viol);
      }
    }
    if (out2 > 0.0) return std::sqrt(out2);
    return inside == kInf ? -kInf : -inside;
  }

  Box interior() const {
    Box b = *this;
    for (auto& i : b.iv) i = i.interior();
    return b;
  }
  Box closure() const {
    Box b = *this;
    for (auto& i : b.iv) i = i.closure();
    return b;
  }

  Vec lower() const {
    Vec v;
    for (const auto& i : iv) v.push_back(i.lo);
    return v;
  }
  Vec upper() const {
    Vec v;
    for (const auto& i : iv) v.push_back(i.hi);
    return v;
  }
  Vec center() const {
    Vec v;
    for (const auto& i : iv) v.push_back(0.5 * (i.lo + i.hi));
    return v;
  }

  std::string str() const {
    std::string s;
    for (size_t i = 0; i < iv.size(); ++i) s += (i ? "x" : "") + iv[i].str();
    return s;
  }
};

inline Box minkowski_sub(const Box& a, const Box& b) {
  Box r;
  for (size_t i = 0; i < a.iv.size(); ++i) r.iv.push_back(minkowski_sub(a.iv[i], b.iv[i]));
  return r;
}

inline Box pontryagin_sub(const Box& a, const Box& b) {
  Box r;
  for (size_t i = 0; i < a.iv.size(); ++i) r.iv.push_back(pontryagin_sub(a.iv[i], b.iv[i]));
  return r;
}

inline Box intersect(const Box& a, const Box& b) {
  Box r;
  for (size_t i = 0; i < a.iv.size(); ++i) r.iv.push_back(intersect(a.iv[i], b.iv[i]));
  return r;
}

inline bool subset_of(const Box& a, const Box& b) {
  if (a.empty()) return true;
  if (b.empty()) return false;
  for (size_t i = 0; i < a.iv.size(); ++i)
    if (!subset_of(a.iv[i], b.iv[i])) return false;
  return true;
}

/// Corners of a bounded box (2^n of them), in lexicographic bit order.
inline std::vector<Vec> box_vertices(const Box& b) {
  std::vector<Vec> out;
  const int n = b.dim();
  out.reserve(1u << n);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    Vec v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = (mask >> i) & 1 ? b.iv[static_cast<size_t>(i)].hi : b.iv[static_cast<size_t>(i)].lo;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace hysim
