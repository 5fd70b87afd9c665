// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/interval.hpp"
#include "hysim/linalg.hpp"
#include "hysim/sets.hpp"

namespace hysim {

/// Set-valued flow map carried as a box enclosure plus one selection.
/// The solver integrates the selection; the viability checkers use the
/// enclosure. `region_enclosure` (optional) is an interval extension of the
/// enclosure over a state-input box; the certified tangent checks need it.
struct FlowMap {
  std::function<Vec(const Vec&, const Vec&)> selection;
  std::function<Box(const Vec&, const Vec&)> enclosure;
  std::function<Box(const Box&)> region_enclosure;  // may be empty
  bool singleton = true;  // enclosure is a point for every (x,w)
};

/// Finite selection list of the jump map, deterministic order.
using JumpMap = std::function<std::vector<Vec>(const Vec&, const Vec&)>;

struct Assumption1 {
  bool declared = false;
  bool osc = false;
  bool locally_bounded = false;
  bool nonempty_convex = false;
};

/// The data H = (C, F, D, G, W) with the projection C0 precomputed.
class HybridSystem {
 public:
  static HybridSystem make(int n_x, int n_w, SetExpr flow_set, SetExpr jump_set, Box input_set,
                           FlowMap flow, JumpMap jump, Assumption1 a1 = {},
                           std::string name = "") {
    if (flow_set.dim() != n_x + n_w) fail(errc::dimension_mismatch, "flow set dim");
    if (jump_set.dim() != n_x + n_w) fail(errc::dimension_mismatch, "jump set dim");
    if (input_set.dim() != n_w) fail(errc::dimension_mismatch, "input set dim");
    if (!input_set.is_closed()) fail(errc::bad_config, "W must be closed");
    if (!is_closed_set(flow_set)) fail(errc::bad_config, "C must be closed");
    HybridSystem h;
    h.n_x_ = n_x;
    h.n_w_ = n_w;
    h.flow_set_ = std::move(flow_set);
    h.jump_set_ = std::move(jump_set);
    h.input_set_ = std::move(input_set);
    h.flow_ = std::move(flow);
    h.jump_ = std::move(jump);
    h.a1_ = a1;
    h.name_ = std::move(name);
    h.c0_ = project_x(h.flow_set_, h.input_set_);
    return h;
  }

  int n_x() const { return n_x_; }
  int n_w() const { return n_w_; }
  const SetExpr& flow_set() const { return flow_set_; }
  const SetExpr& jump_set() const { return jump_set_; }
  const Box& input_set() const { return input_set_; }
  const FlowMap& flow() const { return flow_; }
  const JumpMap& jump() const { return jump_; }
  const Assumption1& assumption1() const { return a1_; }
  const std::string& name() const { return name_; }

  /// Pi_x(C, W), with the exactness flag from the projection.
  const Projection& c0() const { return c0_; }

  Vec xw(const Vec& x, const Vec& w) const { return concat(x, w); }

 private:
  int n_x_ = 0, n_w_ = 0;
  SetExpr flow_set_, jump_set_;
  Box input_set_;
  FlowMap flow_;
  JumpMap jump_;
  Assumption1 a1_;
  Projection c0_{SetExpr::box(Box::whole(0)), true, std::nullopt, ""};
  std::string name_;
};

/// (x, w) in D?
inline bool can_jump(const HybridSystem& H, const Vec& x, const Vec& w_val, double tol = 0.0) {
  if (static_cast<int>(x.size()) != H.n_x() || static_cast<int>(w_val.size()) != H.n_w())
    fail(errc::dimension_mismatch, "can_jump dims");
  return set_contains(H.jump_set(), H.xw(x, w_val), tol);
}

/// All selections of G at (x, w), deterministic order.
inline std::vector<Vec> jump_successors(const HybridSystem& H, const Vec& x, const Vec& w_val,
                                        double tol = 0.0) {
  if (!can_jump(H, x, w_val, tol))
    fail(errc::jump_set_violation, "jump_successors: (x,w) not in D");
  auto succ = H.jump()(x, w_val);
  for (const auto& s : succ)
    if (static_cast<int>(s.size()) != H.n_x()) fail(errc::dimension_mismatch, "jump successor dim");
  return succ;
}

/// The declared flow selection; checked against the enclosure.
inline Vec flow_select(const HybridSystem& H, const Vec& x, const Vec& w_val,
                       double band = 1e-6) {
  const Vec p = H.xw(x, w_val);
  if (set_margin(H.flow_set(), p) > band)
    fail(errc::point_not_in_set, "flow_select outside the inflated flow set");
  Vec f = H.flow().selection(x, w_val);
  const Box fb = H.flow().enclosure(x, w_val);
  if (!fb.contains(f, 1e-9))
    fail(errc::selection_outside_enclosure, "selection leaves its enclosure");
  return f;
}

/// xi in C0 = Pi_x(C, W)? Uses the over-approximation when the projection is
/// inexact (flagged on the system).
inline bool c0_contains(const HybridSystem& H, const Vec& x, double tol = 0.0) {
  return set_contains(H.c0().set, x, tol);
}

/// Open complement of a set expression; exact for the structured variants.
inline SetExpr open_complement(const SetExpr& S) {
  if (const auto* of = S.get_if<OutputFormSet>()) {
    OutputFormSet flipped = *of;
    flipped.outside = !of->outside;
    return SetExpr::output_form(flipped.h, flipped.inner, flipped.outside, flipped.n_x,
                                flipped.n_w);
  }
  if (const auto* co = S.get_if<ComplementOpenSet>()) return *co->inner;
  return SetExpr::complement_open(S);
}

// ---- builders for the named affine forms ----

/// xdot = A x + B w + c as a singleton flow map, with exact interval
/// extension for region queries.
inline FlowMap affine_flow(Mat A, Mat B, Vec c) {
  FlowMap fm;
  auto sel = [A, B, c](const Vec& x, const Vec& w) {
    Vec f = add(mat_vec(A, x), c);
    if (B.cols > 0) f = add(std::move(f), mat_vec(B, w));
    return f;
  };
  fm.selection = sel;
  fm.enclosure = [sel](const Vec& x, const Vec& w) { return Box::point(sel(x, w)); };
  fm.region_enclosure = [A, B, c](const Box& xw) {
    const int nx = A.cols;
    Box out;
    for (int r = 0; r < A.rows; ++r) {
      double lo = c[static_cast<size_t>(r)], hi = c[static_cast<size_t>(r)];
      auto fold = [&](double coef, const Interval& iv) {
        const double a = coef * iv.lo, b = coef * iv.hi;
        lo += std::min(a, b);
        hi += std::max(a, b);
      };
      for (int k = 0; k < A.cols; ++k) fold(A(r, k), xw.iv[static_cast<size_t>(k)]);
      for (int k = 0; k < B.cols; ++k) fold(B(r, k), xw.iv[static_cast<size_t>(nx + k)]);
      out.iv.push_back(Interval::closed(lo, hi));
    }
    return out;
  };
  fm.singleton = true;
  return fm;
}

/// Finite list of affine selections x+ = A x + B w + c.
struct AffineReset {
  Mat A;
  Mat B;
  Vec c;
};

inline JumpMap affine_jump(std::vector<AffineReset> resets) {
  return [resets](const Vec& x, const Vec& w) {
    std::vector<Vec> out;
    for (const auto& r : resets) {
      Vec v = add(mat_vec(r.A, x), r.c);
      if (r.B.cols > 0) v = add(std::move(v), mat_vec(r.B, w));
      out.push_back(std::move(v));
    }
    return out;
  };
}

/// Spot check of the declared flow-map regularity: on a sample grid over
/// `region` intersected with C, the enclosure must be nonempty and bounded.
/// Outer semicontinuity of a black-box callable is not checkable; the
/// declaration is recorded and only these consequences are probed.
inline bool assumption1_spot_check(const HybridSystem& H, const Box& region, int samples,
                                   unsigned seed = 2) {
  unsigned long long s = seed * 2862933555777941757ULL + 3037000493ULL;
  auto next01 = [&s]() {
    s = s * 2862933555777941757ULL + 3037000493ULL;
    return static_cast<double>((s >> 11) & ((1ULL << 53) - 1)) / static_cast<double>(1ULL << 53);
  };
  for (int i = 0; i < samples; ++i) {
    Vec p(static_cast<size_t>(region.dim()));
    for (int k = 0; k < region.dim(); ++k) {
      const auto& iv = region.iv[static_cast<size_t>(k)];
      p[static_cast<size_t>(k)] = iv.lo + (iv.hi - iv.lo) * next01();
    }
    if (!set_contains(H.flow_set(), p, 1e-9)) continue;
    const Vec x = slice(p, 0, static_cast<size_t>(H.n_x()));
    const Vec w = slice(p, static_cast<size_t>(H.n_x()), p.size());
    const Box fb = H.flow().enclosure(x, w);
    if (fb.empty() || !fb.bounded()) return false;
  }
  return true;
}

/// Sampled invariant check: selection stays inside the enclosure over a grid.
inline bool selection_in_enclosure(const HybridSystem& H, const Box& region, int samples,
                                   unsigned seed = 1) {
  unsigned long long s = seed * 2862933555777941757ULL + 3037000493ULL;
  auto next01 = [&s]() {
    s = s * 2862933555777941757ULL + 3037000493ULL;
    return static_cast<double>((s >> 11) & ((1ULL << 53) - 1)) / static_cast<double>(1ULL << 53);
  };
  for (int i = 0; i < samples; ++i) {
    Vec p(static_cast<size_t>(region.dim()));
    for (int k = 0; k < region.dim(); ++k) {
      const auto& iv = region.iv[static_cast<size_t>(k)];
      p[static_cast<size_t>(k)] = iv.lo + (iv.hi - iv.lo) * next01();
    }
    if (!set_contains(H.flow_set(), p, 1e-9)) continue;
    const Vec x = slice(p, 0, static_cast<size_t>(H.n_x()));
    const Vec w = slice(p, static_cast<size_t>(H.n_x()), p.size());
    const Vec f = H.flow().selection(x, w);
    if (!H.flow().enclosure(x, w).contains(f, 1e-9)) return false;
  }
  return true;
}

}  // namespace hysim
