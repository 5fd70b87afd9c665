// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/hybrid_time.hpp"
#include "hysim/signal.hpp"
#include "hysim/system.hpp"

namespace hysim {

enum class SolveMode { E, AE };
enum class Priority { Jump, Flow, EnumerateBoth };

inline const char* mode_name(SolveMode m) { return m == SolveMode::E ? "e" : "ae"; }
inline const char* priority_name(Priority p) {
  switch (p) {
    case Priority::Jump: return "jump";
    case Priority::Flow: return "flow";
    case Priority::EnumerateBoth: return "both";
  }
  return "?";
}

struct SimConfig {
  SolveMode mode = SolveMode::E;
  Priority priority = Priority::Jump;
  double t_max = 10.0;
  int j_max = 1000;
  double step_init = 1e-2;
  double step_min = 1e-12;
  double step_max = 0.1;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double event_tol = 1e-8;       // time tolerance of the event bisection
  double membership_tol = 1e-6;  // set-membership slack at located events
  int branch_budget = 8;
  double blowup_threshold = 1e6;
  int zeno_jumps = 50;          // this many jumps ...
  double zeno_window = 1e-6;    // ... within this much flow time => Zeno flag

  void validate() const {
    if (t_max <= 0.0) fail(errc::bad_config, "t_max must be positive");
    if (j_max < 0) fail(errc::bad_config, "j_max must be nonnegative");
    if (event_tol <= 0.0) fail(errc::bad_config, "event_tol must be positive");
    if (!(step_min < step_init)) fail(errc::bad_config, "step_min must be below step_init");
    if (branch_budget < 1) fail(errc::bad_config, "branch_budget must be >= 1");
  }
};

struct DiagEvent {
  double t = 0.0;
  int j = 0;
  std::string kind;
  double margin = 0.0;
  std::string note;
};

// ---------------------------------------------------------------------------
// Flow segments
// ---------------------------------------------------------------------------

enum class ExitKind { LeftFlowSet, EnteredJumpSet, Budget, Blowup, SignalDiscontinuity };

inline const char* exit_name(ExitKind k) {
  switch (k) {
    case ExitKind::LeftFlowSet: return "LeftFlowSet";
    case ExitKind::EnteredJumpSet: return "EnteredJumpSet";
    case ExitKind::Budget: return "Budget";
    case ExitKind::Blowup: return "Blowup";
    case ExitKind::SignalDiscontinuity: return "SignalDiscontinuity";
  }
  return "?";
}

struct FlowExit {
  ExitKind kind = ExitKind::Budget;
  double t = 0.0;
  double margin = 0.0;
  std::string note;
};

struct FlowSegmentResult {
  std::vector<ArcNode> nodes;  // covers [t0, exit.t]
  FlowExit exit;
  std::vector<DiagEvent> events;
  bool right_open = false;  // blowup truncation
};

namespace detail {

// Dormand–Prince 4(5) step with embedded error estimate.
struct RkStep {
  Vec x_new;
  double err = 0.0;  // scaled inf-norm, accept when <= 1
};

template <class F>
RkStep rk45_step(const F& f, double t, const Vec& x, double h, double rel_tol, double abs_tol) {
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                      e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;

  const size_t n = x.size();
  const Vec k1 = f(t, x);
  Vec y(n);
  for (size_t i = 0; i < n; ++i) y[i] = x[i] + h * a21 * k1[i];
  const Vec k2 = f(t + h / 5, y);
  for (size_t i = 0; i < n; ++i) y[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
  const Vec k3 = f(t + 3 * h / 10, y);
  for (size_t i = 0; i < n; ++i) y[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  const Vec k4 = f(t + 4 * h / 5, y);
  for (size_t i = 0; i < n; ++i)
    y[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  const Vec k5 = f(t + 8 * h / 9, y);
  for (size_t i = 0; i < n; ++i)
    y[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  const Vec k6 = f(t + h, y);
  RkStep out;
  out.x_new.resize(n);
  for (size_t i = 0; i < n; ++i)
    out.x_new[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
  const Vec k7 = f(t + h, out.x_new);
  double err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x4 =
        x[i] + h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const double sc = abs_tol + rel_tol * std::max(std::abs(x[i]), std::abs(out.x_new[i]));
    err = std::max(err, std::abs(out.x_new[i] - x4) / sc);
  }
  out.err = err;
  return out;
}

struct EventCandidate {
  double t = 0.0;
  ExitKind kind = ExitKind::LeftFlowSet;
  double margin = 0.0;
  std::string note;
};

}  // namespace detail

/// One maximal interval of flow from (x0, t0) at jump index j.
///
/// Integrates the flow selection with adaptive RK4(5), steps clamped at the
/// signal's breakpoints, and locates exits by bisection on set margins over
/// the cubic-Hermite dense output:
///  - LeftFlowSet: the trajectory reaches the C boundary (exit point kept
///    inside C up to the membership tolerance);
///  - EnteredJumpSet: the trajectory crosses into D from outside (the exit
///    point is inside D); signal discontinuities that land the pair in D
///    count once the monitor is armed;
///  - SignalDiscontinuity: a breakpoint (or, in E mode, a point override)
///    makes the pair leave C;
///  - Budget / Blowup as labeled.
///
/// E vs AE: overrides interior to the segment are C-checked only in E mode;
/// in AE they are measure-zero and ignored (logged). Jump-set membership at
/// overrides is honored in both modes under jump priority.
///
/// `monitor_jump_set = false` turns off all D-entry detection; the viability
/// probe uses it because entering D is a solver policy boundary, not a flow
/// obstruction.
inline FlowSegmentResult flow_segment(const HybridSystem& H, const Vec& x0, const Signal& w,
                                      double t0, int j, const SimConfig& cfg, double t_budget,
                                      bool monitor_jump_set = true) {
  cfg.validate();
  if (t_budget <= t0) fail(errc::bad_config, "flow_segment: empty time budget");
  const SetExpr& C = H.flow_set();
  const SetExpr& D = H.jump_set();

  const Vec w_r0 = w.right_limit(t0);
  const double m0 = set_margin(C, H.xw(x0, w_r0));
  if (m0 > cfg.membership_tol)
    fail(errc::start_outside_flow_set,
         "margin " + fmt17(m0) + " at (x0, w(t0+)), t0=" + fmt17(t0));
  const double slack = std::max(m0, 0.0);

  // steps never straddle a stop, so within a step the input follows one
  // piece; the scan at a stop must see the left limit, not the next piece
  const SignalPiece* gp = &w.piece_at(t0);
  auto f = [&](double t, const Vec& x) { return H.flow().selection(x, gp->value(t)); };
  auto margin_c = [&](double t, const Vec& x) {
    return set_margin(C, H.xw(x, gp->value(t))) - slack;
  };
  auto margin_d = [&](double t, const Vec& x) { return set_margin(D, H.xw(x, gp->value(t))); };

  FlowSegmentResult res;
  res.nodes.push_back({t0, x0, f(t0, x0)});
  bool armed = monitor_jump_set && margin_d(t0, x0) > cfg.membership_tol;

  std::vector<double> stops = w.breakpoints();
  stops.erase(std::remove_if(stops.begin(), stops.end(),
                             [&](double b) { return b <= t0 + 1e-15 || b >= t_budget - 1e-15; }),
              stops.end());
  stops.push_back(t_budget);
  size_t stop_idx = 0;

  // overrides relevant to this window, for E-mode checks and jump triggers
  std::vector<std::pair<double, Vec>> ovs;
  for (const auto& [tov, v] : w.overrides())
    if (tov > t0 && tov <= t_budget) ovs.emplace_back(tov, v);

  double t = t0;
  Vec x = x0;
  double h_nom = cfg.step_init;

  auto hermite_at = [&](const ArcNode& a, const ArcNode& b, double tt) {
    return detail::hermite_eval(a, b, tt);
  };

  // bisect a margin crossing g: [lo (g<=0), hi (g>0)] or the reverse,
  // returning the refined bracket
  auto bisect = [&](const ArcNode& na, const ArcNode& nb, auto&& g, double lo, double hi) {
    while (hi - lo > cfg.event_tol) {
      const double mid = 0.5 * (lo + hi);
      if (g(mid, hermite_at(na, nb, mid)) > 0.0)
        hi = mid;
      else
        lo = mid;
    }
    return std::pair<double, double>{lo, hi};
  };

  for (;;) {
    // next clamp target
    while (stop_idx < stops.size() && stops[stop_idx] <= t + 1e-15) ++stop_idx;
    if (stop_idx >= stops.size() || t >= t_budget - 1e-15) {
      res.exit = {ExitKind::Budget, t_budget, margin_c(t, x), ""};
      if (res.nodes.back().t < t_budget) res.nodes.push_back({t_budget, x, f(t_budget, x)});
      return res;
    }
    const double target = stops[stop_idx];
    gp = &w.piece_at(0.5 * (t + target));

    double h = std::min({h_nom, cfg.step_max, target - t});
    bool clamped = (h >= target - t - 1e-15);
    detail::RkStep step;
    for (;;) {
      step = detail::rk45_step(f, t, x, h, cfg.rel_tol, cfg.abs_tol);
      if (step.err <= 1.0) break;
      const double shrink = std::max(0.1, 0.9 * std::pow(step.err, -0.2));
      h *= shrink;
      clamped = false;
      if (h < cfg.step_min)
        fail(errc::step_underflow, "step underflow at t=" + fmt17(t));
    }
    const double t_new = clamped ? target : t + h;
    const ArcNode na = res.nodes.back();
    const ArcNode nb{t_new, step.x_new, f(t_new, step.x_new)};

    // -- scan the accepted step for the earliest event --
    std::optional<detail::EventCandidate> ev;
    auto consider = [&](const detail::EventCandidate& c) {
      if (!ev || c.t < ev->t - 1e-15 ||
          (std::abs(c.t - ev->t) <= 1e-15 && c.kind == ExitKind::EnteredJumpSet))
        ev = c;
    };

    // the sample before a detected sign change brackets the crossing: the
    // scans stop at the first bad sample, so [prev_tau, tau] is a bracket
    constexpr int K = 8;
    double prev_tau = na.t;
    bool found_c = false, found_d = false;
    for (int i = 1; i <= K && (!found_c || !found_d); ++i) {
      const double tau = na.t + (t_new - na.t) * i / K;
      const Vec xi = (i == K) ? nb.x : hermite_at(na, nb, tau);
      if (!found_c && margin_c(tau, xi) > 0.0) {
        found_c = true;
        auto [lo, hi] =
            bisect(na, nb, [&](double tt, const Vec& xx) { return margin_c(tt, xx); }, prev_tau, tau);
        (void)hi;
        consider({lo, ExitKind::LeftFlowSet, margin_c(lo, hermite_at(na, nb, lo)), "C exit"});
      }
      if (!found_d && armed && margin_d(tau, xi) <= 0.0) {
        found_d = true;
        auto [lo, hi] = bisect(
            na, nb, [&](double tt, const Vec& xx) { return -margin_d(tt, xx); }, prev_tau, tau);
        (void)lo;
        consider({hi, ExitKind::EnteredJumpSet, margin_d(hi, hermite_at(na, nb, hi)), "D entry"});
      }
      prev_tau = tau;
    }

    // overrides inside (t, t_new]
    for (const auto& [tov, vov] : ovs) {
      if (tov <= na.t + 1e-15 || tov > t_new + 1e-15) continue;
      if (ev && tov >= ev->t - 1e-15) continue;
      const Vec xov = hermite_at(na, nb, tov);
      const Vec pov = H.xw(xov, vov);
      if (monitor_jump_set && cfg.priority != Priority::Flow &&
          set_contains(D, pov, cfg.membership_tol)) {
        consider({tov, ExitKind::EnteredJumpSet, set_margin(D, pov), "override jump trigger"});
        continue;
      }
      if (cfg.mode == SolveMode::E && !set_contains(C, pov, cfg.membership_tol + slack)) {
        consider({tov, ExitKind::SignalDiscontinuity, set_margin(C, pov), "override C violation"});
      } else {
        res.events.push_back({tov, j, "override", set_margin(C, pov), "passed through"});
      }
    }

    if (ev) {
      if (ev->t > res.nodes.back().t + 1e-15) {
        const Vec xe = hermite_at(na, nb, ev->t);
        res.nodes.push_back({ev->t, xe, f(ev->t, xe)});
      }
      res.exit = {ev->kind, res.nodes.back().t, ev->margin, ev->note};
      res.events.push_back({res.exit.t, j, exit_name(ev->kind), ev->margin, ev->note});
      return res;
    }

    // blowup?
    if (norm_inf(step.x_new) >= cfg.blowup_threshold) {
      res.nodes.push_back(nb);
      res.exit = {ExitKind::Blowup, t_new, 0.0, "|x| >= blowup threshold"};
      res.right_open = true;
      res.events.push_back({t_new, j, "Blowup", norm_inf(step.x_new), ""});
      return res;
    }

    res.nodes.push_back(nb);
    t = t_new;
    x = step.x_new;
    if (!clamped) {
      const double grow = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(step.err, 1e-10), -0.2)));
      h_nom = std::min(cfg.step_max, h * grow);
    }

    if (clamped && target < t_budget - 1e-15) {
      // landed exactly on a signal breakpoint
      ++stop_idx;
      const Vec w_right = w.right_limit(t);
      const Vec p_right = H.xw(x, w_right);
      if (!set_contains(C, p_right, cfg.membership_tol + slack)) {
        res.exit = {ExitKind::SignalDiscontinuity, t, set_margin(C, p_right), "piece switch leaves C"};
        res.events.push_back({t, j, "SignalDiscontinuity", res.exit.margin, res.exit.note});
        return res;
      }
      if (cfg.mode == SolveMode::E) {
        const Vec w_ex = w.eval(t);
        if (w_ex != w_right) {
          const Vec p_ex = H.xw(x, w_ex);
          if (monitor_jump_set && cfg.priority != Priority::Flow &&
              set_contains(D, p_ex, cfg.membership_tol)) {
            res.exit = {ExitKind::EnteredJumpSet, t, set_margin(D, p_ex), "override jump trigger"};
            res.events.push_back({t, j, "EnteredJumpSet", res.exit.margin, res.exit.note});
            return res;
          }
          if (!set_contains(C, p_ex, cfg.membership_tol + slack)) {
            res.exit = {ExitKind::SignalDiscontinuity, t, set_margin(C, p_ex), "override C violation"};
            res.events.push_back({t, j, "SignalDiscontinuity", res.exit.margin, res.exit.note});
            return res;
          }
        }
      }
      if (monitor_jump_set) {
        const Vec p_r = H.xw(x, w_right);
        const double gd_new = set_margin(D, p_r);
        if (armed && gd_new <= 0.0) {
          res.exit = {ExitKind::EnteredJumpSet, t, gd_new, "signal switch entered D"};
          res.events.push_back({t, j, "EnteredJumpSet", gd_new, res.exit.note});
          return res;
        }
        if (gd_new > cfg.membership_tol) armed = true;
      }
      // duplicate node carrying the new piece's slope for the dense output
      if (&w.piece_at(t) != gp)
        res.nodes.push_back({t, x, H.flow().selection(x, w_right)});
    } else if (monitor_jump_set && !armed) {
      if (margin_d(t, x) > cfg.membership_tol) armed = true;
    }
  }
}

// ---------------------------------------------------------------------------
// Trajectory-based viability probe (shared with the viability module)
// ---------------------------------------------------------------------------

struct FlowProbe {
  double survived = 0.0;      // flow duration achieved from t=0
  bool full = false;          // survived the whole probe budget
  bool start_outside = false; // (xi, w(0+)) strictly outside C
  bool forced = false;        // exit forced for every selection of F
  bool step_trouble = false;
  Vec witness;                // (x, w) pair at the violation
  double witness_time = 0.0;
  double witness_margin = 0.0;
};

/// Runs the flow machinery from t=0 with budget max(eps_grid) and reports how
/// long the selection survived, plus whether an immediate exit is forced for
/// the whole enclosure (strictly-outside start, singleton selection, or an
/// active constraint whose margin grows under every f in F_box).
inline FlowProbe probe_flow(const HybridSystem& H, const Vec& xi, const Signal& w, SolveMode mode,
                            const std::vector<double>& eps_grid, SimConfig cfg) {
  FlowProbe pr;
  double eps_max = 0.0;
  for (double e : eps_grid) eps_max = std::max(eps_max, e);
  if (eps_max <= 0.0) fail(errc::bad_config, "probe needs a positive epsilon grid");
  cfg.mode = mode;
  cfg.t_max = std::max(cfg.t_max, eps_max);

  const Vec w_r = w.right_limit(0.0);
  const Vec p0 = H.xw(xi, w_r);
  const double m0 = set_margin(H.flow_set(), p0);
  if (m0 > cfg.membership_tol) {
    pr.start_outside = true;
    pr.forced = true;  // C closed and w right-continuous by pieces: no z can stay in C near 0
    pr.witness = p0;
    pr.witness_margin = m0;
    return pr;
  }

  FlowSegmentResult seg;
  try {
    seg = flow_segment(H, xi, w, 0.0, 0, cfg, eps_max, /*monitor_jump_set=*/false);
  } catch (const error& e) {
    if (e.code() == errc::step_underflow) {
      pr.step_trouble = true;
      return pr;
    }
    throw;
  }
  if (seg.exit.kind == ExitKind::Budget || seg.exit.kind == ExitKind::Blowup) {
    pr.survived = seg.exit.t;
    pr.full = seg.exit.kind == ExitKind::Budget;
    return pr;
  }
  pr.survived = seg.exit.t;
  pr.witness = H.xw(seg.nodes.back().x, w.eval_piece(seg.exit.t));
  pr.witness_time = seg.exit.t;
  pr.witness_margin = seg.exit.margin;

  const double immediate = std::max(100.0 * cfg.event_tol, 1e-6);
  if (pr.survived > immediate) return pr;

  // immediate exit: can any other selection of F do better?
  const Box fb = H.flow().enclosure(xi, w_r);
  double width = 0.0;
  for (const auto& iv : fb.iv) width = std::max(width, iv.hi - iv.lo);
  if (H.flow().singleton || width <= 1e-12) {
    pr.forced = true;
    return pr;
  }
  if (auto poly = as_polyhedron(H.flow_set())) {
    const Vec wdot = w.piece_derivative(0.0);
    for (size_t i = 0; i < poly->a.size(); ++i) {
      if (dot(poly->a[i], p0) < poly->b[i] - cfg.membership_tol) continue;  // inactive
      double lo = 0.0;
      for (int k = 0; k < H.n_x(); ++k) {
        const double c = poly->a[i][static_cast<size_t>(k)];
        const auto& iv = fb.iv[static_cast<size_t>(k)];
        lo += std::min(c * iv.lo, c * iv.hi);
      }
      for (int k = 0; k < H.n_w(); ++k)
        lo += poly->a[i][static_cast<size_t>(H.n_x() + k)] * wdot[static_cast<size_t>(k)];
      if (lo > 1e-9) {
        pr.forced = true;  // this margin grows under every selection
        return pr;
      }
    }
  }
  return pr;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

enum class DeadCause { InputDiscontinuity, GeometryNoOverlap, AfterJump };

inline const char* dead_cause_name(DeadCause c) {
  switch (c) {
    case DeadCause::InputDiscontinuity: return "InputDiscontinuity";
    case DeadCause::GeometryNoOverlap: return "GeometryNoOverlap";
    case DeadCause::AfterJump: return "AfterJump";
  }
  return "?";
}

struct DeadInfo {
  bool jump_possible = false;
  bool flow_possible = false;
  HybridTimePoint at;
  DeadCause cause = DeadCause::GeometryNoOverlap;
  double probe_survived = 0.0;
  bool probe_forced = false;
};

struct Termination {
  enum class Kind { BudgetExhausted, EndsWithFlowBlowup, DeadState, ZenoSuspected };
  Kind kind = Kind::BudgetExhausted;
  bool time_budget = true;  // BudgetExhausted: t_max (true) or j_max (false)
  HybridTimePoint at;
  std::optional<DeadInfo> dead;
};

inline const char* termination_name(Termination::Kind k) {
  switch (k) {
    case Termination::Kind::BudgetExhausted: return "BudgetExhausted";
    case Termination::Kind::EndsWithFlowBlowup: return "EndsWithFlowBlowup";
    case Termination::Kind::DeadState: return "DeadState";
    case Termination::Kind::ZenoSuspected: return "ZenoSuspected";
  }
  return "?";
}

struct SolutionReport {
  HybridArc arc;
  Termination termination;
  std::vector<DiagEvent> diagnostics;
  SimConfig config;
  std::vector<int> branch_tape;  // decisions taken (EnumerateBoth)
};

namespace detail {

struct Tape {
  std::vector<int> fixed;   // replayed prefix
  std::vector<int> taken;   // every decision actually made
  std::vector<std::pair<size_t, int>> open;  // (position, n_options) hit past the prefix

  int choose(int n_options) {
    const size_t pos = taken.size();
    int pick = 0;
    if (pos < fixed.size()) {
      pick = fixed[pos];
    } else {
      open.emplace_back(pos, n_options);
    }
    taken.push_back(pick);
    return pick;
  }
};

inline SolutionReport solve_with_tape(const HybridSystem& H, const Vec& xi, const Signal& w,
                                      const SimConfig& cfg, Tape& tape) {
  cfg.validate();
  if (static_cast<int>(xi.size()) != H.n_x()) fail(errc::dimension_mismatch, "solve: xi dim");

  std::vector<ArcSegment> segs;
  std::vector<DiagEvent> diags;
  bool right_open = false;

  double t = 0.0;
  int j = 0;
  Vec x = xi;

  auto safe_f = [&](double tt, const Vec& xx) -> Vec {
    try {
      if (set_margin(H.flow_set(), H.xw(xx, w.eval_piece(tt))) <= cfg.membership_tol)
        return H.flow().selection(xx, w.eval_piece(tt));
    } catch (const error&) {
    }
    return Vec(xx.size(), 0.0);
  };

  segs.push_back(ArcSegment{0, 0.0, 0.0, false, {ArcNode{0.0, x, safe_f(0.0, x)}}});

  std::deque<double> jump_times;
  int stall = 0;
  ExitKind last_exit = ExitKind::Budget;
  bool any_flow_exit = false;
  // set when a segment ends at a signal discontinuity: extending the same
  // flow interval past that time would put the violating point in its
  // interior, so the only continuations are a jump there or death
  bool flow_blocked_here = false;

  auto make_report = [&](Termination term) {
    segs.back().t1 = segs.back().nodes.back().t;
    std::vector<HtdInterval> ivs;
    for (const auto& s : segs) ivs.push_back({s.j, s.t0, s.t1});
    HybridTimeDomain dom = htd_validate(std::move(ivs), right_open);
    SolutionReport rep;
    rep.arc = HybridArc(std::move(dom), segs, H.n_x());
    rep.termination = term;
    rep.diagnostics = diags;
    rep.config = cfg;
    rep.branch_tape = tape.taken;
    return rep;
  };

  auto dead_state = [&](DeadCause hint, bool jump_possible) {
    DeadInfo info;
    info.jump_possible = jump_possible;
    info.at = {t, j};
    info.cause = hint;
    try {
      const FlowProbe pr = probe_flow(H, x, w.shift(t), cfg.mode, {1e-1, 1e-2, 1e-3}, cfg);
      info.probe_survived = pr.survived;
      info.probe_forced = pr.forced;
      info.flow_possible = pr.full || pr.survived > std::max(100.0 * cfg.event_tol, 1e-6);
    } catch (const error&) {
      info.flow_possible = false;
    }
    diags.push_back({t, j, "DeadState",
                     0.0, std::string(dead_cause_name(hint)) + (info.probe_forced ? ", probe: forced" : ", probe: not viable")});
    Termination term;
    term.kind = Termination::Kind::DeadState;
    term.at = {t, j};
    term.dead = info;
    return make_report(term);
  };

  for (;;) {
    if (t >= cfg.t_max - 1e-12) {
      Termination term;
      term.kind = Termination::Kind::BudgetExhausted;
      term.time_budget = true;
      term.at = {t, j};
      return make_report(term);
    }

    const Vec w_exact = w.eval(t);
    const bool jump_ok = can_jump(H, x, w_exact, cfg.membership_tol);
    bool flow_ok = false;
    double flow_margin = kInf;
    try {
      flow_margin = set_margin(H.flow_set(), H.xw(x, w.right_limit(t)));
      flow_ok = flow_margin <= cfg.membership_tol;
    } catch (const error& e) {
      if (e.code() != errc::beyond_horizon) throw;
    }
    if (stall >= 2) flow_ok = false;  // repeated zero-length flow attempts
    if (flow_blocked_here) flow_ok = false;

    bool take_jump;
    if (jump_ok && flow_ok) {
      switch (cfg.priority) {
        case Priority::Jump: take_jump = true; break;
        case Priority::Flow: take_jump = false; break;
        case Priority::EnumerateBoth: take_jump = tape.choose(2) == 0; break;
      }
    } else if (jump_ok) {
      take_jump = true;
    } else if (flow_ok) {
      take_jump = false;
    } else {
      DeadCause cause = DeadCause::GeometryNoOverlap;
      if (any_flow_exit && last_exit == ExitKind::SignalDiscontinuity)
        cause = DeadCause::InputDiscontinuity;
      else if (j > 0 && segs.back().nodes.size() == 1)
        cause = DeadCause::AfterJump;
      return dead_state(cause, false);
    }

    if (take_jump) {
      if (j >= cfg.j_max) {
        Termination term;
        term.kind = Termination::Kind::BudgetExhausted;
        term.time_budget = false;
        term.at = {t, j};
        return make_report(term);
      }
      jump_times.push_back(t);
      if (static_cast<int>(jump_times.size()) > cfg.zeno_jumps) jump_times.pop_front();
      if (static_cast<int>(jump_times.size()) == cfg.zeno_jumps &&
          t - jump_times.front() <= cfg.zeno_window) {
        Termination term;
        term.kind = Termination::Kind::ZenoSuspected;
        term.at = {t, j};
        diags.push_back({t, j, "ZenoSuspected", 0.0,
                         std::to_string(cfg.zeno_jumps) + " jumps within " + fmt17(cfg.zeno_window)});
        return make_report(term);
      }
      auto succs = jump_successors(H, x, w_exact, cfg.membership_tol);
      size_t pick = 0;
      if (succs.size() > 1 && cfg.priority == Priority::EnumerateBoth)
        pick = static_cast<size_t>(tape.choose(static_cast<int>(succs.size())));
      diags.push_back({t, j, "jump", set_margin(H.jump_set(), H.xw(x, w_exact)),
                       "successor " + std::to_string(pick) + "/" + std::to_string(succs.size())});
      segs.back().t1 = segs.back().nodes.back().t;
      x = succs[pick];
      ++j;
      segs.push_back(ArcSegment{j, t, t, false, {ArcNode{t, x, safe_f(t, x)}}});
      stall = 0;
      flow_blocked_here = false;  // a fresh interval may flow again
      continue;
    }

    // flow
    FlowSegmentResult seg;
    try {
      seg = flow_segment(H, x, w, t, j, cfg, cfg.t_max);
    } catch (const error& e) {
      if (e.code() == errc::start_outside_flow_set) {
        stall = 2;
        continue;
      }
      throw;
    }
    for (auto& ev : seg.events) diags.push_back(ev);
    auto& nodes = segs.back().nodes;
    for (const auto& n : seg.nodes) {
      if (n.t > nodes.back().t + 1e-15) {
        nodes.push_back(n);
      } else if (n.t >= nodes.back().t - 1e-15 && n.x == nodes.back().x &&
                 n.f != nodes.back().f) {
        nodes.push_back(n);  // piece-switch slope duplicate
      }
    }
    const double t_before = t;
    t = seg.exit.t;
    x = nodes.back().x;
    any_flow_exit = true;
    last_exit = seg.exit.kind;
    stall = (t - t_before <= cfg.event_tol) ? stall + 1 : 0;
    flow_blocked_here = seg.exit.kind == ExitKind::SignalDiscontinuity;

    switch (seg.exit.kind) {
      case ExitKind::Budget: {
        Termination term;
        term.kind = Termination::Kind::BudgetExhausted;
        term.time_budget = true;
        term.at = {t, j};
        return make_report(term);
      }
      case ExitKind::Blowup: {
        right_open = true;
        Termination term;
        term.kind = Termination::Kind::EndsWithFlowBlowup;
        term.at = {t, j};
        return make_report(term);
      }
      case ExitKind::EnteredJumpSet:
      case ExitKind::LeftFlowSet:
      case ExitKind::SignalDiscontinuity:
        continue;  // the loop decides: jump, resume, or dead
    }
  }
}

}  // namespace detail

/// Constructs one solution under the configured priority rule. Use
/// solve_all for EnumerateBoth.
inline SolutionReport solve(const HybridSystem& H, const Vec& xi, const Signal& w,
                            const SimConfig& cfg) {
  detail::Tape tape;
  return detail::solve_with_tape(H, xi, w, cfg, tape);
}

/// Enumerates branch decisions (jump-vs-flow at overlaps, jump successor
/// choices) breadth-first up to cfg.branch_budget reports; deterministic
/// order. For the other priorities this is a single report.
inline std::vector<SolutionReport> solve_all(const HybridSystem& H, const Vec& xi, const Signal& w,
                                             const SimConfig& cfg) {
  std::vector<SolutionReport> out;
  if (cfg.priority != Priority::EnumerateBoth) {
    out.push_back(solve(H, xi, w, cfg));
    return out;
  }
  std::deque<std::vector<int>> queue;
  queue.push_back({});
  while (!queue.empty() && static_cast<int>(out.size()) < cfg.branch_budget) {
    detail::Tape tape;
    tape.fixed = queue.front();
    queue.pop_front();
    out.push_back(detail::solve_with_tape(H, xi, w, cfg, tape));
    for (const auto& [pos, n_options] : tape.open) {
      for (int alt = 1; alt < n_options; ++alt) {
        std::vector<int> child(tape.taken.begin(), tape.taken.begin() + static_cast<long>(pos));
        child.push_back(alt);
        queue.push_back(std::move(child));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Termination classification
// ---------------------------------------------------------------------------

/// The maximal-solution trichotomy, reported as evidence: complete is always
/// budget-qualified, ends-with-flow is evidenced by blow-up, and dead states
/// split into the after-jump case and the input-discontinuity case (the
/// latter is specific to discontinuous inputs).
enum class Classification {
  CompleteEvidence,
  EndsWithFlow,
  EndsWithJumpDead,
  EndsWithInputDiscontinuity,
  Undetermined
};

inline const char* classification_name(Classification c) {
  switch (c) {
    case Classification::CompleteEvidence: return "CompleteEvidence";
    case Classification::EndsWithFlow: return "EndsWithFlow";
    case Classification::EndsWithJumpDead: return "EndsWithJumpDead";
    case Classification::EndsWithInputDiscontinuity: return "EndsWithInputDiscontinuity";
    case Classification::Undetermined: return "Undetermined";
  }
  return "?";
}

inline Classification classify_termination(const SolutionReport& report, const HybridSystem& H,
                                           const Signal& w) {
  switch (report.termination.kind) {
    case Termination::Kind::BudgetExhausted:
      return Classification::CompleteEvidence;
    case Termination::Kind::EndsWithFlowBlowup:
      return Classification::EndsWithFlow;
    case Termination::Kind::ZenoSuspected:
      return Classification::Undetermined;
    case Termination::Kind::DeadState: {
      const auto& dead = *report.termination.dead;
      if (dead.cause == DeadCause::InputDiscontinuity &&
          at_least(w.classify(), Regularity::Cadlag))
        return Classification::EndsWithInputDiscontinuity;
      const auto& last = report.arc.domain().intervals().back();
      const bool singleton_last = last.t_end == last.t_start && last.j > 0;
      if (singleton_last && !c0_contains(H, report.arc.end_state(), 1e-9))
        return Classification::EndsWithJumpDead;
      return Classification::Undetermined;
    }
  }
  return Classification::Undetermined;
}

// ---------------------------------------------------------------------------
// A-posteriori arc validation (independent oracle)
// ---------------------------------------------------------------------------

struct ArcViolation {
  std::string kind;  // "jump-set", "jump-map", "flow-set", "flow-map"
  double t = 0.0;
  int j = 0;
  double value = 0.0;
  std::string note;
};

struct ArcCheck {
  bool valid = true;
  std::vector<ArcViolation> violations;
};

struct ValidateOptions {
  int grid_per_interval = 256;
  double set_tol = 1e-6;
  double jump_tol = 1e-6;
  double fd_tol = 5e-3;  // scaled derivative-vs-enclosure slack
};

/// Re-checks the solution definition directly on the arc: (S2) at every
/// jump with the exact point values of w, flow-set membership on a dense
/// grid (interior times for E; everything but overrides/breakpoints for AE),
/// and finite differences of the dense output against the flow enclosure.
inline ArcCheck validate_arc(const HybridSystem& H, const HybridArc& arc, const Signal& w,
                             SolveMode mode, const ValidateOptions& opts = {}) {
  const double sup_t = arc.domain().sup().sup_t;
  if (!std::isinf(w.horizon()) && std::isfinite(sup_t) && sup_t > w.horizon() + 1e-12)
    fail(errc::horizon_mismatch, "arc extends past the signal horizon");

  ArcCheck out;
  auto violate = [&](ArcViolation v) {
    out.valid = false;
    out.violations.push_back(std::move(v));
  };

  const auto& segs = arc.segments();
  // (S2) at jumps
  for (size_t k = 0; k + 1 < segs.size(); ++k) {
    const double T = segs[k].t1;
    const Vec x_pre = segs[k].nodes.back().x;
    const Vec x_post = segs[k + 1].nodes.front().x;
    const Vec w_T = w.eval(T);
    if (!set_contains(H.jump_set(), H.xw(x_pre, w_T), opts.jump_tol))
      violate({"jump-set", T, segs[k].j, set_margin(H.jump_set(), H.xw(x_pre, w_T)),
               "(x,w) not in D at the jump"});
    double best = kInf;
    for (const auto& g : H.jump()(x_pre, w_T)) best = std::min(best, dist2(x_post, g));
    if (best > opts.jump_tol)
      violate({"jump-map", T, segs[k].j, best, "post-jump state not a selection of G"});
  }

  std::vector<double> bps = w.breakpoints();
  const auto& ovs = w.overrides();
  auto is_override = [&](double t) {
    for (const auto& [tov, v] : ovs)
      if (tov == t) return true;
    return false;
  };
  auto is_breakpoint = [&](double t) {
    for (double b : bps)
      if (b == t) return true;
    return false;
  };

  for (const auto& seg : segs) {
    if (seg.t1 <= seg.t0) continue;
    std::vector<double> times;
    for (int i = 0; i <= opts.grid_per_interval; ++i)
      times.push_back(seg.t0 + (seg.t1 - seg.t0) * i / opts.grid_per_interval);
    for (const auto& n : seg.nodes) times.push_back(n.t);
    for (double b : bps)
      if (b > seg.t0 && b < seg.t1) times.push_back(b);
    for (const auto& [tov, v] : ovs)
      if (tov > seg.t0 && tov < seg.t1) times.push_back(tov);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    for (double tt : times) {
      if (tt <= seg.t0 || tt >= seg.t1) continue;  // interior only in both modes
      if (mode == SolveMode::AE && (is_override(tt) || is_breakpoint(tt))) continue;
      const Vec xv = arc.eval({tt, seg.j});
      const Vec wv = w.eval(tt);
      if (!set_contains(H.flow_set(), H.xw(xv, wv), opts.set_tol))
        violate({"flow-set", tt, seg.j, set_margin(H.flow_set(), H.xw(xv, wv)),
                 mode == SolveMode::E ? "(x,w) leaves C at an interior time"
                                      : "(x,w) leaves C on positive measure"});
    }

    // derivative enclosure by central differences of the dense output
    for (size_t i = 0; i + 1 < seg.nodes.size(); ++i) {
      const double gap = seg.nodes[i + 1].t - seg.nodes[i].t;
      if (gap < 1e-9) continue;
      const double tm = 0.5 * (seg.nodes[i].t + seg.nodes[i + 1].t);
      bool smooth = true;
      for (double b : bps)
        if (b > seg.nodes[i].t && b < seg.nodes[i + 1].t) smooth = false;
      if (!smooth) continue;
      const double dlt = gap / 8.0;
      const Vec xp = arc.eval({tm + dlt, seg.j});
      const Vec xm = arc.eval({tm - dlt, seg.j});
      const Vec xmid = arc.eval({tm, seg.j});
      const Box fb = H.flow().enclosure(xmid, w.eval_piece(tm));
      for (size_t c = 0; c < xp.size(); ++c) {
        const double fd = (xp[c] - xm[c]) / (2.0 * dlt);
        const double tol = opts.fd_tol * std::max(1.0, std::abs(fd));
        const auto& iv = fb.iv[c];
        if (fd < iv.lo - tol || fd > iv.hi + tol) {
          violate({"flow-map", tm, seg.j, fd, "finite difference outside the flow enclosure"});
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace hysim
