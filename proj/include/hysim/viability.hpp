// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/sets.hpp"
#include "hysim/signal.hpp"
#include "hysim/simulator.hpp"
#include "hysim/system.hpp"

namespace hysim {

enum class VcStatus { Holds, Inconclusive, FailsWithWitness };

inline const char* vc_status_name(VcStatus s) {
  switch (s) {
    case VcStatus::Holds: return "Holds";
    case VcStatus::Inconclusive: return "Inconclusive";
    case VcStatus::FailsWithWitness: return "FailsWithWitness";
  }
  return "?";
}

struct VcWitness {
  Vec point;
  double time = 0.0;
  double margin = 0.0;
};

/// Decision-procedure outcome. The tangent-cone checkers are sufficient
/// conditions verified on recorded grids, so they never report
/// FailsWithWitness; only trajectory probes (forced exits) and the
/// open-map clause of the output-form lemma do.
struct Verdict {
  VcStatus status = VcStatus::Inconclusive;
  std::optional<VcWitness> witness;
  std::string method;
  std::vector<std::pair<std::string, std::string>> info;

  Verdict& note(const std::string& k, const std::string& v) {
    info.emplace_back(k, v);
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Trajectory-dependent probes
// ---------------------------------------------------------------------------

inline std::vector<double> default_probe_grid() { return {1e-1, 1e-2, 1e-3}; }

/// Probes VC-e / VC-ae at (xi, w) by running constrained flow segments.
/// Holds when the selection survives a positive flow window; fails with a
/// witness only when the exit is forced for the whole enclosure (strictly
/// outside start, singleton selection, or margin growing under every f).
inline Verdict vc_probe(const HybridSystem& H, const Vec& xi, const Signal& w, SolveMode mode,
                        std::vector<double> eps_grid = default_probe_grid(),
                        SimConfig cfg = SimConfig{}) {
  if (eps_grid.empty()) eps_grid = default_probe_grid();
  Verdict v;
  v.method = std::string("vc-probe-") + mode_name(mode);
  double eps_min = kInf, eps_max = 0.0;
  for (double e : eps_grid) {
    eps_min = std::min(eps_min, e);
    eps_max = std::max(eps_max, e);
  }
  v.note("eps_grid", fmt17(eps_min) + ".." + fmt17(eps_max));

  const FlowProbe pr = probe_flow(H, xi, w, mode, eps_grid, cfg);
  const double immediate = std::max(100.0 * cfg.event_tol, 1e-6);
  if (pr.step_trouble) {
    v.status = VcStatus::Inconclusive;
    v.note("reason", "integrator step underflow");
    return v;
  }
  if (pr.full || pr.survived > immediate) {
    v.status = VcStatus::Holds;
    v.note("survived", fmt17(pr.survived));
    return v;
  }
  if (pr.forced) {
    v.status = VcStatus::FailsWithWitness;
    v.witness = VcWitness{pr.witness, pr.witness_time, pr.witness_margin};
    v.note("reason", pr.start_outside ? "start strictly outside C" : "exit forced over the enclosure");
    return v;
  }
  v.status = VcStatus::Inconclusive;
  v.note("reason", "selection exits immediately; other selections not ruled out");
  return v;
}

/// Nontrivial-solution existence at one (xi, w): a jump with the exact point
/// value w(0), or a viable flow window.
inline Verdict nontrivial_existence(const HybridSystem& H, const Vec& xi, const Signal& w,
                                    SolveMode mode, SimConfig cfg = SimConfig{}) {
  Verdict v;
  v.method = std::string("nontrivial-existence-") + mode_name(mode);
  const Vec w0 = w.eval(0.0);
  const bool jump_ok = can_jump(H, xi, w0, 0.0);
  v.note("jump_at_0", jump_ok ? "true" : "false");
  if (jump_ok) {
    v.status = VcStatus::Holds;
    v.note("route", "jump");
    return v;
  }
  Verdict probe = vc_probe(H, xi, w, mode, default_probe_grid(), cfg);
  v.info.insert(v.info.end(), probe.info.begin(), probe.info.end());
  v.witness = probe.witness;
  if (probe.status == VcStatus::Holds) {
    v.status = VcStatus::Holds;
    v.note("route", "flow");
  } else if (probe.status == VcStatus::FailsWithWitness) {
    v.status = VcStatus::FailsWithWitness;
  } else {
    v.status = VcStatus::Inconclusive;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Grid sampling with boundary refinement
// ---------------------------------------------------------------------------

namespace detail {

/// Lattice points of `range` that lie in S, plus bisected boundary points
/// between inside/outside lattice neighbors.
inline std::vector<Vec> boundary_aware_grid(const SetExpr& S, const Box& range, int per_axis) {
  const int n = range.dim();
  std::vector<long> strides(static_cast<size_t>(n), 1);
  long total = 1;
  for (int k = 0; k < n; ++k) {
    strides[static_cast<size_t>(k)] = total;
    total *= per_axis;
  }
  if (total > 100000) fail(errc::bad_config, "grid too large");
  auto coord = [&](long idx, int axis) {
    const long i = (idx / strides[static_cast<size_t>(axis)]) % per_axis;
    const auto& iv = range.iv[static_cast<size_t>(axis)];
    if (per_axis == 1) return 0.5 * (iv.lo + iv.hi);
    return iv.lo + (iv.hi - iv.lo) * static_cast<double>(i) / (per_axis - 1);
  };
  auto point = [&](long idx) {
    Vec p(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) p[static_cast<size_t>(k)] = coord(idx, k);
    return p;
  };
  std::vector<char> inside(static_cast<size_t>(total));
  for (long i = 0; i < total; ++i) inside[static_cast<size_t>(i)] = set_contains(S, point(i), 1e-12) ? 1 : 0;

  std::vector<Vec> out;
  for (long i = 0; i < total; ++i)
    if (inside[static_cast<size_t>(i)]) out.push_back(point(i));

  // boundary refinement along lattice edges
  for (long i = 0; i < total; ++i) {
    for (int k = 0; k < n; ++k) {
      const long ik = (i / strides[static_cast<size_t>(k)]) % per_axis;
      if (ik + 1 >= per_axis) continue;
      const long jdx = i + strides[static_cast<size_t>(k)];
      if (inside[static_cast<size_t>(i)] == inside[static_cast<size_t>(jdx)]) continue;
      Vec a = point(inside[static_cast<size_t>(i)] ? i : jdx);   // inside end
      Vec b = point(inside[static_cast<size_t>(i)] ? jdx : i);  // outside end
      for (int it = 0; it < 50; ++it) {
        Vec mid(a.size());
        for (size_t c = 0; c < a.size(); ++c) mid[c] = 0.5 * (a[c] + b[c]);
        if (set_contains(S, mid, 1e-12))
          a = mid;
        else
          b = mid;
      }
      out.push_back(a);  // margin-zero up to bisection width
    }
  }
  return out;
}

inline Box ball_bounding_box(const Vec& c, double r) {
  Vec lo(c), hi(c);
  for (size_t i = 0; i < c.size(); ++i) {
    lo[i] -= r;
    hi[i] += r;
  }
  return Box::closed(lo, hi);
}

inline bool cone_exact_class(const SetExpr& S) {
  if (const auto* bs = S.get_if<BoxSet>()) return bs->box.is_closed();
  return as_polyhedron(S).has_value();
}

/// Derivative values of an AC signal over [0, eps) when they form a finite
/// set (constant/affine pieces only); nullopt otherwise.
inline std::optional<std::vector<Vec>> finite_derivative_values(const Signal& w, double eps) {
  std::vector<Vec> vals;
  for (const auto& p : w.pieces()) {
    if (p.t0 >= eps) break;
    if (!p.unbounded && p.t1 <= 0.0) continue;
    if (std::holds_alternative<piecefn::Constant>(p.fn)) {
      vals.push_back(Vec(static_cast<size_t>(w.dim()), 0.0));
    } else if (std::holds_alternative<piecefn::Affine>(p.fn)) {
      vals.push_back(std::get<piecefn::Affine>(p.fn).b);
    } else {
      return std::nullopt;
    }
  }
  return vals;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tangent-cone checkers (trajectory-independent, sufficient only)
// ---------------------------------------------------------------------------

struct TangentCheckConfig {
  double u_radius = 1e-2;
  double eps = 1e-2;
  int per_axis = 5;
  std::vector<double> tau_grid;  // empty: linspace over [0, eps)
  bool refine_on_inconclusive = true;  // one retry at u_radius/10
};

namespace detail {

inline std::vector<double> tau_grid_for(const Signal& w, double eps,
                                        const std::vector<double>& requested) {
  std::vector<double> taus = requested;
  if (taus.empty())
    for (int i = 0; i < 4; ++i) taus.push_back(eps * i / 4.0);
  const auto bps = w.breakpoints();
  taus.erase(std::remove_if(taus.begin(), taus.end(),
                            [&](double t) {
                              if (t < 0.0 || t >= eps) return true;
                              for (double b : bps)
                                if (b == t) return true;  // dw undefined there
                              return false;
                            }),
             taus.end());
  if (taus.empty()) taus.push_back(0.0);
  return taus;
}

/// Certified facet-wise check: for singleton affine-enclosure flows over
/// halfspace-form C, bound each active constraint row over its facet patch
/// by interval arithmetic. Exact universal check when it applies.
inline std::optional<bool> certified_tangent_ac(const HybridSystem& H, const Vec& p0,
                                                double u_radius, const std::vector<Vec>& wdots) {
  if (!H.flow().singleton || !H.flow().region_enclosure) return std::nullopt;
  auto poly = as_polyhedron(H.flow_set());
  if (!poly) return std::nullopt;
  const Box patch_box = ball_bounding_box(p0, u_radius);
  for (size_t i = 0; i < poly->a.size(); ++i) {
    // is this facet active anywhere in the patch (within C)?
    std::vector<fm::Row> rows;
    for (size_t r = 0; r < poly->a.size(); ++r) rows.push_back({poly->a[r], poly->b[r]});
    rows.push_back({scale(poly->a[i], -1.0), -(poly->b[i] - 1e-7)});  // a_i.p >= b_i - tol
    for (int k = 0; k < patch_box.dim(); ++k) {
      Vec e(static_cast<size_t>(patch_box.dim()), 0.0);
      e[static_cast<size_t>(k)] = 1.0;
      rows.push_back({e, patch_box.iv[static_cast<size_t>(k)].hi});
      rows.push_back({scale(e, -1.0), -patch_box.iv[static_cast<size_t>(k)].lo});
    }
    if (!fm::feasible(std::move(rows), static_cast<size_t>(patch_box.dim()))) continue;
    const Box fbox = H.flow().region_enclosure(patch_box);
    for (const Vec& wd : wdots) {
      double worst = 0.0;
      for (int k = 0; k < H.n_x(); ++k) {
        const double c = poly->a[i][static_cast<size_t>(k)];
        const auto& iv = fbox.iv[static_cast<size_t>(k)];
        worst += std::max(c * iv.lo, c * iv.hi);
      }
      for (int k = 0; k < H.n_w(); ++k)
        worst += poly->a[i][static_cast<size_t>(H.n_x() + k)] * wd[static_cast<size_t>(k)];
      if (worst > 1e-12) return false;  // cannot certify this facet
    }
  }
  return true;
}

}  // namespace detail

/// Tangent-cone condition for absolutely continuous inputs:
/// (F(z,w) x {dw(tau)}) meets T_C(z,w) on C near (xi, w(0)) for the tau grid.
inline Verdict vc_tangent_ac(const HybridSystem& H, const Vec& xi, const Signal& w,
                             TangentCheckConfig tc = {}) {
  if (!at_least(w.tag(), Regularity::AbsContinuous))
    fail(errc::not_absolutely_continuous, "vc_tangent_ac needs an AC input");
  if (!detail::cone_exact_class(H.flow_set()))
    fail(errc::unsupported_variant, "vc_tangent_ac needs Box/Polyhedron/affine output-form C");

  Verdict v;
  v.method = "vc-tangent-ac";
  const Vec p0 = H.xw(xi, w.eval(0.0));
  const auto taus = detail::tau_grid_for(w, tc.eps, tc.tau_grid);
  v.note("u_radius", fmt17(tc.u_radius));
  v.note("eps", fmt17(tc.eps));
  v.note("tau_points", std::to_string(taus.size()));

  if (set_margin(H.flow_set(), p0) > 1e-9) {
    v.status = VcStatus::Inconclusive;
    v.note("reason", "(xi, w(0)) is outside C; tangent test does not apply");
    return v;
  }

  // certified route when the data admits it
  if (auto wdots = detail::finite_derivative_values(w, tc.eps)) {
    auto cert = detail::certified_tangent_ac(H, p0, tc.u_radius, *wdots);
    if (cert.has_value() && *cert) {
      v.status = VcStatus::Holds;
      v.method = "vc-tangent-ac-certified";
      v.note("certified", "facet-wise interval arithmetic");
      return v;
    }
  }

  std::vector<Vec> wdots;
  for (double tau : taus) wdots.push_back(w.piece_derivative(tau));

  for (double radius = tc.u_radius;;) {
    const auto pts =
        detail::boundary_aware_grid(H.flow_set(), detail::ball_bounding_box(p0, radius), tc.per_axis);
    v.note("grid_points", std::to_string(pts.size()));
    bool all_ok = !pts.empty();
    Vec bad_point;
    double bad_tau = 0.0;
    for (const auto& p : pts) {
      const Cone K = tangent_cone(H.flow_set(), p, 1e-7);
      const Vec z = slice(p, 0, static_cast<size_t>(H.n_x()));
      const Vec om = slice(p, static_cast<size_t>(H.n_x()), p.size());
      const Box fb = H.flow().enclosure(z, om);
      for (size_t ti = 0; ti < taus.size(); ++ti) {
        if (!cone_feasible(K, fb, wdots[ti])) {
          all_ok = false;
          bad_point = p;
          bad_tau = taus[ti];
          break;
        }
      }
      if (!all_ok && !bad_point.empty()) break;
    }
    if (all_ok) {
      v.status = VcStatus::Holds;
      v.note("verified", "grid");
      v.note("radius_used", fmt17(radius));
      return v;
    }
    if (tc.refine_on_inconclusive && radius == tc.u_radius) {
      radius = tc.u_radius / 10.0;
      v.note("refined_radius", fmt17(radius));
      continue;
    }
    v.status = VcStatus::Inconclusive;
    if (!bad_point.empty()) {
      std::string s;
      for (double c : bad_point) s += (s.empty() ? "" : ",") + fmt17(c);
      v.note("infeasible_at", s);
      v.note("tau", fmt17(bad_tau));
    } else {
      v.note("reason", "no C points found near (xi, w(0))");
    }
    return v;
  }
}

/// Tangent-cone condition for continuous piecewise-affine inputs via the
/// polyhedral graph of K_w(t) = {z : (z, w(t)) in C}.
inline Verdict vc_tangent_continuous(const HybridSystem& H, const Vec& xi, const Signal& w,
                                     TangentCheckConfig tc = {}) {
  if (!at_least(w.classify(), Regularity::Continuous))
    fail(errc::unsupported_signal_shape, "vc_tangent_continuous needs a continuous input");
  auto poly = as_polyhedron(H.flow_set());
  if (!poly) fail(errc::unsupported_variant, "vc_tangent_continuous needs halfspace-form C");

  Verdict v;
  v.method = "vc-tangent-continuous";
  v.note("eps", fmt17(tc.eps));
  const int nx = H.n_x();
  const int nw = H.n_w();

  // K_w(t) nonempty on a grid of [0, eps)
  for (int i = 0; i < 16; ++i) {
    const double t = tc.eps * i / 16.0;
    const Vec wt = w.eval_piece(t);
    std::vector<fm::Row> rows;
    for (size_t r = 0; r < poly->a.size(); ++r) {
      Vec head = slice(poly->a[r], 0, static_cast<size_t>(nx));
      const Vec tail = slice(poly->a[r], static_cast<size_t>(nx), poly->a[r].size());
      rows.push_back({std::move(head), poly->b[r] - dot(tail, wt)});
    }
    if (!fm::feasible(std::move(rows), static_cast<size_t>(nx)))
      fail(errc::empty_kw, "K_w empty at t=" + fmt17(t));
  }

  bool all_ok = true;
  Vec bad_point;
  size_t points_checked = 0;
  for (const auto& piece : w.pieces()) {
    const double lo = std::max(piece.t0, 0.0);
    const double hi = std::min(piece.unbounded ? tc.eps : piece.t1, tc.eps);
    if (hi <= lo) continue;
    Vec alpha(static_cast<size_t>(nw), 0.0), beta(static_cast<size_t>(nw), 0.0);
    if (std::holds_alternative<piecefn::Constant>(piece.fn)) {
      alpha = std::get<piecefn::Constant>(piece.fn).v;
    } else if (std::holds_alternative<piecefn::Affine>(piece.fn)) {
      const auto& af = std::get<piecefn::Affine>(piece.fn);
      alpha = axpy(af.a, piece.offset, af.b);  // w(tau) = alpha + beta*tau in absolute time
      beta = af.b;
    } else {
      fail(errc::unsupported_signal_shape, "vc_tangent_continuous needs piecewise-affine w");
    }

    // graph polyhedron over (z, tau); constraints that touch only the input
    // become constants under a constant piece and drop out (the nonempty-K_w
    // scan above already vetted them)
    std::vector<Vec> ga;
    Vec gb;
    for (size_t r = 0; r < poly->a.size(); ++r) {
      Vec row(static_cast<size_t>(nx + 1), 0.0);
      for (int k = 0; k < nx; ++k) row[static_cast<size_t>(k)] = poly->a[r][static_cast<size_t>(k)];
      const Vec tail = slice(poly->a[r], static_cast<size_t>(nx), poly->a[r].size());
      row[static_cast<size_t>(nx)] = dot(tail, beta);
      if (norm2(row) < 1e-14) continue;
      ga.push_back(std::move(row));
      gb.push_back(poly->b[r] - dot(tail, alpha));
    }
    if (lo == 0.0) {
      // tau >= 0 is a genuine boundary of graph(K_w); the window clip at hi
      // and interior piece seams are artifacts and must not shape cones
      Vec row(static_cast<size_t>(nx + 1), 0.0);
      row[static_cast<size_t>(nx)] = -1.0;
      ga.push_back(row);
      gb.push_back(0.0);
    }
    SetExpr graph = SetExpr::polyhedron(std::move(ga), std::move(gb));

    Box range;
    for (int k = 0; k < nx; ++k)
      range.iv.push_back(Interval::closed(xi[static_cast<size_t>(k)] - tc.u_radius,
                                          xi[static_cast<size_t>(k)] + tc.u_radius));
    range.iv.push_back(Interval::closed(lo, hi));
    const auto pts = detail::boundary_aware_grid(graph, range, tc.per_axis);
    points_checked += pts.size();
    for (const auto& p : pts) {
      const Cone K = tangent_cone(graph, p, 1e-7);
      const Vec z = slice(p, 0, static_cast<size_t>(nx));
      const double tau = p.back();
      const Box fb = H.flow().enclosure(z, axpy(alpha, tau, beta));
      if (!cone_feasible(K, fb, {1.0})) {
        all_ok = false;
        bad_point = p;
        break;
      }
    }
    if (!all_ok) break;
  }
  v.note("grid_points", std::to_string(points_checked));
  if (all_ok && points_checked > 0) {
    v.status = VcStatus::Holds;
    v.note("verified", "grid");
  } else {
    v.status = VcStatus::Inconclusive;
    if (!bad_point.empty()) {
      std::string s;
      for (double c : bad_point) s += (s.empty() ? "" : ",") + fmt17(c);
      v.note("infeasible_at", s + " (last coordinate is tau)");
    }
  }
  return v;
}

/// Split-input condition: C = C1 x R^{n_w2}, w1 absolutely continuous and
/// entering C1, w2 merely measurable and entering only the flow map.
inline Verdict vc_split(const HybridSystem& H, const Vec& xi, const std::optional<Signal>& w1,
                        const Signal& w2, TangentCheckConfig tc = {}) {
  const int n_w1 = w1 ? w1->dim() : 0;
  const int n_w2 = w2.dim();
  if (n_w1 + n_w2 != H.n_w()) fail(errc::dimension_mismatch, "vc_split: w1/w2 dims vs system");
  if (w1 && !at_least(w1->tag(), Regularity::AbsContinuous))
    fail(errc::not_absolutely_continuous, "vc_split needs AC w1");

  // extract C1 from C = C1 x R^{n_w2}
  const auto* prod = H.flow_set().get_if<ProductSet>();
  if (prod == nullptr || prod->parts.size() != 2)
    fail(errc::flow_set_not_split, "flow set is not declared as C1 x R^{n_w2}");
  const SetExpr& C1 = prod->parts[0];
  const auto* free_part = prod->parts[1].get_if<BoxSet>();
  bool free_ok = free_part != nullptr && prod->parts[1].dim() == n_w2;
  if (free_ok)
    for (const auto& iv : free_part->box.iv)
      if (std::isfinite(iv.lo) || std::isfinite(iv.hi)) free_ok = false;
  if (!free_ok || C1.dim() != H.n_x() + n_w1)
    fail(errc::flow_set_not_split, "second factor must be the whole w2 space");
  if (!detail::cone_exact_class(C1))
    fail(errc::unsupported_variant, "vc_split needs Box/Polyhedron/affine output-form C1");

  Verdict v;
  v.method = "vc-split";
  Vec p0 = xi;
  if (w1) p0 = concat(xi, w1->eval(0.0));
  const auto taus = detail::tau_grid_for(w1 ? *w1 : w2, tc.eps, tc.tau_grid);
  v.note("u_radius", fmt17(tc.u_radius));
  v.note("tau_points", std::to_string(taus.size()));

  if (set_margin(C1, p0) > 1e-9) {
    v.status = VcStatus::Inconclusive;
    v.note("reason", "(xi, w1(0)) is outside C1");
    return v;
  }

  const auto pts =
      detail::boundary_aware_grid(C1, detail::ball_bounding_box(p0, tc.u_radius), tc.per_axis);
  v.note("grid_points", std::to_string(pts.size()));
  bool all_ok = !pts.empty();
  Vec bad_point;
  for (const auto& p : pts) {
    const Cone K = tangent_cone(C1, p, 1e-7);
    const Vec z = slice(p, 0, static_cast<size_t>(H.n_x()));
    const Vec om1 = slice(p, static_cast<size_t>(H.n_x()), p.size());
    for (double tau : taus) {
      const Vec w_full = concat(om1, w2.eval(tau));  // measurable w2: exact point values
      const Box fb = H.flow().enclosure(z, w_full);
      const Vec w1dot = w1 ? w1->piece_derivative(tau) : Vec{};
      if (!cone_feasible(K, fb, w1dot)) {
        all_ok = false;
        bad_point = p;
        break;
      }
    }
    if (!all_ok) break;
  }
  if (all_ok) {
    v.status = VcStatus::Holds;
    v.note("verified", "grid");
  } else {
    v.status = VcStatus::Inconclusive;
    if (!bad_point.empty()) {
      std::string s;
      for (double c : bad_point) s += (s.empty() ? "" : ",") + fmt17(c);
      v.note("infeasible_at", s);
    }
  }
  return v;
}

/// Ball-margin condition B(xi, delta) x W subset C, exact by vertex/support
/// arithmetic over the halfspace form. Holds implies VC-e and VC-ae at xi
/// for every input in L_W.
inline Verdict vc_ball_margin(const HybridSystem& H, const Vec& xi,
                              std::vector<double> delta_grid = {0.1, 0.05, 0.01, 0.001}) {
  auto poly = as_polyhedron(H.flow_set());
  if (!poly) fail(errc::unsupported_variant, "vc_ball_margin needs exact-margin C");
  std::sort(delta_grid.rbegin(), delta_grid.rend());
  const Box& W = H.input_set();

  Verdict v;
  v.method = "vc-ball-margin";
  double worst_violation = -kInf;
  for (double delta : delta_grid) {
    bool ok = true;
    double worst = -kInf;
    for (size_t i = 0; i < poly->a.size() && ok; ++i) {
      const Vec ax = slice(poly->a[i], 0, static_cast<size_t>(H.n_x()));
      double lhs = dot(ax, xi) + delta * norm2(ax);
      for (int k = 0; k < H.n_w(); ++k) {
        const double c = poly->a[i][static_cast<size_t>(H.n_x() + k)];
        if (c == 0.0) continue;
        const auto& iv = W.iv[static_cast<size_t>(k)];
        const double s = std::max(c * iv.lo, c * iv.hi);
        lhs += s;
      }
      worst = std::max(worst, lhs - poly->b[i]);
      if (lhs > poly->b[i]) ok = false;
    }
    if (ok) {
      v.status = VcStatus::Holds;
      v.note("delta", fmt17(delta));
      v.note("implies", "VC-e and VC-ae for every w in L_W");
      return v;
    }
    worst_violation = worst;
  }
  v.status = VcStatus::Inconclusive;
  v.note("reason", "no grid delta gives B(xi,delta) x W inside C");
  v.note("violation_at_smallest_delta", fmt17(worst_violation));
  return v;
}

// ---------------------------------------------------------------------------
// Region-level existence
// ---------------------------------------------------------------------------

struct RegionReport {
  VcStatus status = VcStatus::Inconclusive;
  bool vacuous = false;
  std::string region;  // description of Xi0 cap Pi_x(D^c, W)
  int grid_points = 0;
  int holds_points = 0;
  std::vector<Vec> inconclusive_points;
  std::string note;
};

/// Checks the trajectory-independent route to existence over a box of
/// initial states: on Xi0 cap Pi_x(D^c, W), the ball-margin condition at
/// every grid point (sufficient for all inputs in L_W).
inline RegionReport existence_over_region(const HybridSystem& H, const Box& xi0, int per_axis = 50,
                                          std::vector<double> delta_grid = {0.1, 0.05, 0.01, 0.001},
                                          int jobs = 1) {
  if (!xi0.bounded()) fail(errc::bad_config, "existence_over_region needs a bounded Xi0");
  RegionReport rep;

  const SetExpr dc = open_complement(H.jump_set());
  const Projection proj = project_x(dc, H.input_set());
  if (!proj.exact) rep.note = "projection of D^c inexact: " + proj.note;

  // membership filter for the region
  auto in_region = [&](const Vec& p) {
    return xi0.contains(p) && set_contains(proj.set, p);
  };
  if (const auto* bs = proj.set.get_if<BoxSet>()) {
    rep.region = intersect(Box(xi0), bs->box).str();
  } else {
    rep.region = xi0.str() + " cap Pi_x(D^c,W)";
  }

  std::vector<Vec> grid;
  {
    const int n = xi0.dim();
    std::vector<long> strides(static_cast<size_t>(n), 1);
    long total = 1;
    for (int k = 0; k < n; ++k) {
      strides[static_cast<size_t>(k)] = total;
      total *= per_axis;
    }
    if (total > 1000000) fail(errc::bad_config, "region grid too large");
    for (long i = 0; i < total; ++i) {
      Vec p(static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) {
        const long ik = (i / strides[static_cast<size_t>(k)]) % per_axis;
        const auto& iv = xi0.iv[static_cast<size_t>(k)];
        p[static_cast<size_t>(k)] = iv.lo + (iv.hi - iv.lo) * (ik + 0.5) / per_axis;
      }
      if (in_region(p)) grid.push_back(std::move(p));
    }
  }
  rep.grid_points = static_cast<int>(grid.size());
  if (grid.empty()) {
    rep.status = VcStatus::Holds;
    rep.vacuous = true;
    rep.note += (rep.note.empty() ? "" : "; ") + std::string("empty quantification domain");
    return rep;
  }

  std::vector<char> holds(grid.size(), 0);
  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      holds[i] = vc_ball_margin(H, grid[i], delta_grid).status == VcStatus::Holds ? 1 : 0;
  };
  const int njobs = std::max(1, jobs);
  if (njobs == 1) {
    work(0, grid.size());
  } else {
    std::vector<std::thread> threads;
    const size_t chunk = (grid.size() + njobs - 1) / njobs;
    for (int k = 0; k < njobs; ++k) {
      const size_t b = std::min(grid.size(), static_cast<size_t>(k) * chunk);
      const size_t e = std::min(grid.size(), b + chunk);
      if (b < e) threads.emplace_back(work, b, e);
    }
    for (auto& th : threads) th.join();
  }
  for (size_t i = 0; i < grid.size(); ++i) {
    if (holds[i])
      ++rep.holds_points;
    else if (rep.inconclusive_points.size() < 32)
      rep.inconclusive_points.push_back(grid[i]);
  }
  rep.status = rep.holds_points == rep.grid_points ? VcStatus::Holds : VcStatus::Inconclusive;
  return rep;
}

// ---------------------------------------------------------------------------
// Output-form existence (the set-condition lemma)
// ---------------------------------------------------------------------------

struct OutputFormVerdict {
  Verdict verdict;
  SetConditionResult chain;
};

namespace detail {

inline bool same_output_map(const OutputMap& a, const OutputMap& b) {
  if (a.index() != b.index()) return false;
  if (const auto* aa = std::get_if<AffineOutputMap>(&a)) {
    const auto& bb = std::get<AffineOutputMap>(b);
    return aa->A.a == bb.A.a && aa->A.rows == bb.A.rows && aa->c == bb.c;
  }
  const auto& am = std::get<MonotoneOutputMap>(a);
  const auto& bm = std::get<MonotoneOutputMap>(b);
  if (am.comps.size() != bm.comps.size()) return false;
  for (size_t i = 0; i < am.comps.size(); ++i)
    if (am.comps[i].xs != bm.comps[i].xs || am.comps[i].ys != bm.comps[i].ys) return false;
  return true;
}

}  // namespace detail

/// Existence for output-form data: delegates to the exact interval chain
/// range(h) cap (C_y - W) cap (D_y^c - W) subset int(C_y (-) W). Holds means
/// the ball-margin condition holds at every xi in C0 cap Pi_x(D^c, W); when
/// h is declared open, a failed inclusion is also necessary, hence a witness.
inline OutputFormVerdict output_form_existence(const HybridSystem& H, const Box& range_h) {
  const auto* cf = H.flow_set().get_if<OutputFormSet>();
  const auto* df = H.jump_set().get_if<OutputFormSet>();
  if (cf == nullptr || df == nullptr || cf->outside || !df->outside)
    fail(errc::not_output_form, "needs C inside-form and D outside-form over a common h");
  if (!detail::same_output_map(cf->h, df->h))
    fail(errc::not_output_form, "C and D use different output maps");

  OutputFormVerdict out;
  out.chain = output_set_condition(range_h, cf->inner.closure(), df->inner.closure(), H.input_set());
  Verdict& v = out.verdict;
  v.method = "output-set-condition";
  v.note("dyc_minus_w", out.chain.dyc_minus_w.str());
  v.note("cy_minus_w", out.chain.cy_minus_w.str());
  v.note("int_cy_pont_w", out.chain.int_cy_pont_w.str());
  v.note("lhs", out.chain.lhs.str());
  if (out.chain.holds) {
    v.status = VcStatus::Holds;
    v.note("implies", "ball-margin at every xi in C0 cap Pi_x(D^c,W)");
    return out;
  }
  if (output_is_open_map(cf->h)) {
    v.status = VcStatus::FailsWithWitness;
    // construct a y in lhs outside int(C_y (-) W)
    Vec y(out.chain.lhs.iv.size(), 0.0);
    for (size_t k = 0; k < out.chain.lhs.iv.size(); ++k) {
      const auto& l = out.chain.lhs.iv[k];
      const auto& p = out.chain.int_cy_pont_w.iv[k];
      if (!subset_of(l, p)) {
        if (l.hi > p.hi || (l.hi == p.hi && !l.hi_open)) {
          y[k] = l.hi_open ? 0.5 * (std::max(p.hi, l.lo) + l.hi) : l.hi;
        } else {
          y[k] = l.lo_open ? 0.5 * (std::min(p.lo, l.hi) + l.lo) : l.lo;
        }
      } else {
        y[k] = std::isfinite(l.lo) && std::isfinite(l.hi) ? 0.5 * (l.lo + l.hi)
               : std::isfinite(l.lo)                      ? l.lo + 1.0
               : std::isfinite(l.hi)                      ? l.hi - 1.0
                                                          : 0.0;
      }
    }
    v.witness = VcWitness{y, 0.0, out.chain.int_cy_pont_w.closure().margin(y)};
    v.note("necessity", "h is an open map");
  } else {
    v.status = VcStatus::Inconclusive;
  }
  return out;
}

}  // namespace hysim
