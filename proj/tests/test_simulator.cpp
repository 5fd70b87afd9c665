// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hysim/io.hpp"
#include "hysim/scenarios.hpp"
#include "hysim/simulator.hpp"
#include "oracles.hpp"

using namespace hysim;

namespace {

const Box kW02 = Box::closed({-0.2}, {0.2});

Signal w_const(double v, Box W = kW02) { return make_constant_signal({v}, std::move(W)); }

SimConfig cfg_with(double t_max, Priority pr = Priority::Jump, SolveMode mode = SolveMode::E) {
  SimConfig cfg;
  cfg.t_max = t_max;
  cfg.priority = pr;
  cfg.mode = mode;
  return cfg;
}

std::vector<double> jump_times(const SolutionReport& rep) {
  std::vector<double> ts;
  for (const auto& d : rep.diagnostics)
    if (d.kind == "jump") ts.push_back(d.t);
  return ts;
}

// xdot = x^2 on C = R x W: finite escape at 1/x0
HybridSystem riccati_system() {
  FlowMap fm;
  fm.selection = [](const Vec& x, const Vec&) { return Vec{x[0] * x[0]}; };
  fm.enclosure = [](const Vec& x, const Vec&) { return Box::point({x[0] * x[0]}); };
  fm.singleton = true;
  return HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)),
                            SetExpr::box(Box::closed({5.0, -1.0}, {4.0, 1.0})),  // empty D
                            Box::closed({-1.0}, {1.0}), fm, affine_jump({}), {}, "riccati");
}

}  // namespace

TEST_CASE("flow_segment exits into the jump set at ln 6", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto seg = flow_segment(ex1.system, {-0.2}, w_const(0.2), 0.0, 0, cfg_with(20.0), 20.0);
  REQUIRE(seg.exit.kind == ExitKind::EnteredJumpSet);
  REQUIRE_THAT(seg.exit.t, Catch::Matchers::WithinAbs(std::log(6.0), 1e-6));
  REQUIRE(seg.exit.margin <= 0.0);  // the located point is inside D
}

TEST_CASE("flow_segment stops at an input discontinuity", "[simulator]") {
  const auto r2 = make_remark2();
  const auto seg = flow_segment(r2.system, {1.0}, remark2_signal(), 0.0, 0, cfg_with(5.0), 5.0);
  REQUIRE(seg.exit.kind == ExitKind::SignalDiscontinuity);
  REQUIRE(seg.exit.t == 1.0);
  for (const auto& n : seg.nodes) REQUIRE(std::abs(n.x[0] - 1.0) <= 1e-12);
}

TEST_CASE("flow_segment rejects starts outside the flow set in both modes", "[simulator]") {
  const auto ex2 = make_ex2c(1.0);
  for (SolveMode m : {SolveMode::E, SolveMode::AE}) {
    try {
      flow_segment(ex2.system, {1.0}, ex2_witness_signal(), 0.0, 0, cfg_with(1.0, Priority::Jump, m), 1.0);
      FAIL("expected StartOutsideFlowSet");
    } catch (const error& e) {
      REQUIRE(e.code() == errc::start_outside_flow_set);
    }
  }
}

TEST_CASE("solve: periodic flow-jump solution stays bounded", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {1.0}, w_const(0.2), cfg_with(20.0));
  REQUIRE(rep.termination.kind == Termination::Kind::BudgetExhausted);
  REQUIRE(rep.termination.time_budget);
  double m = 0.0;
  for (const auto& s : rep.arc.segments())
    for (const auto& n : s.nodes) m = std::max(m, std::abs(n.x[0]));
  REQUIRE(m <= 1.7 + 1e-6);
  REQUIRE(rep.arc.domain().sup().sup_j >= 5);
  REQUIRE(classify_termination(rep, ex1.system, w_const(0.2)) == Classification::CompleteEvidence);
}

TEST_CASE("solve: dead state when neither jump nor flow is possible", "[simulator]") {
  const auto ex2 = make_ex2c(1.0);
  const auto rep = solve(ex2.system, {1.0}, ex2_witness_signal(), cfg_with(5.0));
  REQUIRE(rep.termination.kind == Termination::Kind::DeadState);
  REQUIRE(rep.termination.at.t == 0.0);
  REQUIRE(rep.termination.at.j == 0);
  REQUIRE(rep.termination.dead->cause == DeadCause::GeometryNoOverlap);
  REQUIRE_FALSE(rep.termination.dead->jump_possible);
  REQUIRE_FALSE(rep.termination.dead->flow_possible);
  REQUIRE_FALSE(arc_is_nontrivial(rep.arc));
}

TEST_CASE("solve: dead by discontinuity reproduces the constant arc", "[simulator]") {
  const auto r2 = make_remark2();
  const Signal w = remark2_signal();
  const auto rep = solve(r2.system, {1.0}, w, cfg_with(5.0, Priority::Flow));
  REQUIRE(rep.termination.kind == Termination::Kind::DeadState);
  REQUIRE(rep.termination.at.t == 1.0);
  REQUIRE(rep.termination.dead->cause == DeadCause::InputDiscontinuity);
  const auto& dom = rep.arc.domain();
  REQUIRE(dom.intervals().size() == 1);
  REQUIRE(dom.sup().sup_t == 1.0);
  for (int i = 0; i <= 100; ++i)
    REQUIRE(std::abs(arc_eval(rep.arc, {i / 100.0, 0})[0] - 1.0) <= 1e-9);
  REQUIRE(classify_termination(rep, r2.system, w) == Classification::EndsWithInputDiscontinuity);
}

TEST_CASE("classify: finite escape is ends-with-flow", "[simulator]") {
  const auto H = riccati_system();
  SimConfig cfg = cfg_with(5.0);
  cfg.blowup_threshold = 1e5;
  const Signal w = w_const(0.0, Box::closed({-1.0}, {1.0}));
  const auto rep = solve(H, {1.0}, w, cfg);
  REQUIRE(rep.termination.kind == Termination::Kind::EndsWithFlowBlowup);
  // escape time of xdot = x^2 from 1 is 1
  REQUIRE_THAT(rep.termination.at.t, Catch::Matchers::WithinAbs(1.0, 1e-3));
  REQUIRE(rep.arc.domain().last_right_open());
  REQUIRE(classify_termination(rep, H, w) == Classification::EndsWithFlow);
}

TEST_CASE("classify: jump into a dead point", "[simulator]") {
  // C = [-1,1] x W, D = [0.9,1] x W, reset x+ = x + 1 lands outside C0 and D
  Mat A(1, 1);
  A(0, 0) = 1.0;
  Mat B(1, 1);
  Mat Aj = Mat::identity(1);
  Mat Bj(1, 1);
  const auto H = HybridSystem::make(
      1, 1, SetExpr::box(Box({Interval::closed(-1.0, 1.0), Interval::closed(-0.2, 0.2)})),
      SetExpr::box(Box({Interval::closed(0.9, 1.0), Interval::closed(-0.2, 0.2)})),
      kW02, affine_flow(A, B, {0.0}), affine_jump({AffineReset{Aj, Bj, {1.0}}}), {}, "deadjump");
  const auto rep = solve(H, {0.95}, w_const(0.0), cfg_with(5.0));
  REQUIRE(rep.termination.kind == Termination::Kind::DeadState);
  REQUIRE(rep.termination.dead->cause == DeadCause::AfterJump);
  const auto& last = rep.arc.domain().intervals().back();
  REQUIRE(last.t_start == last.t_end);
  REQUIRE(last.j == 1);
  REQUIRE(classify_termination(rep, H, w_const(0.0)) == Classification::EndsWithJumpDead);
}

TEST_CASE("zeno guard trips on accumulating jumps", "[simulator]") {
  // D is everything, reset is the identity
  Mat A(1, 1);
  Mat B(1, 1);
  const auto H = HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)), SetExpr::box(Box::whole(2)),
                                    Box::whole(1), affine_flow(A, B, {0.0}),
                                    affine_jump({AffineReset{Mat::identity(1), B, {0.0}}}), {}, "zeno");
  const auto rep = solve(H, {0.0}, w_const(0.0, Box::whole(1)), cfg_with(1.0));
  REQUIRE(rep.termination.kind == Termination::Kind::ZenoSuspected);
  REQUIRE(classify_termination(rep, H, w_const(0.0, Box::whole(1))) == Classification::Undetermined);
}

TEST_CASE("jump budget reports a j-budget exhaustion", "[simulator]") {
  const auto ex1 = make_ex1();
  SimConfig cfg = cfg_with(50.0);
  cfg.j_max = 3;
  const auto rep = solve(ex1.system, {1.0}, w_const(0.2), cfg);
  REQUIRE(rep.termination.kind == Termination::Kind::BudgetExhausted);
  REQUIRE_FALSE(rep.termination.time_budget);
  REQUIRE(rep.arc.domain().sup().sup_j == 3);
}

TEST_CASE("validate_arc accepts its own solutions and orders the modes", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto ex3 = make_ex3();
  const auto r2 = make_remark2();
  const Signal w3 = make_step_signal({0.0, 0.7}, {{0.2}, {-0.5}}, Box::whole(1));
  struct Case {
    const HybridSystem* H;
    Signal w;
    Priority pr;
  } cases[] = {
      {&ex1.system, w_const(0.2), Priority::Jump},
      {&ex3.system, w3, Priority::Jump},
      {&r2.system, remark2_signal(), Priority::Flow},
  };
  for (const auto& c : cases) {
    const auto rep = solve(*c.H, {1.0}, c.w, cfg_with(5.0, c.pr, SolveMode::E));
    const auto chk_e = validate_arc(*c.H, rep.arc, c.w, SolveMode::E);
    CAPTURE(c.H->name());
    REQUIRE(chk_e.valid);
    // an e-solution is also an ae-solution
    const auto chk_ae = validate_arc(*c.H, rep.arc, c.w, SolveMode::AE);
    REQUIRE(chk_ae.valid);
  }
}

TEST_CASE("validate_arc flags a jump-map mismatch under the wrong input", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {1.0}, w_const(0.2), cfg_with(5.0));
  const auto chk = validate_arc(ex1.system, rep.arc, w_const(0.0), SolveMode::E);
  REQUIRE_FALSE(chk.valid);
  bool jump_violation = false;
  for (const auto& v : chk.violations)
    if (v.kind == "jump-map" || v.kind == "jump-set") jump_violation = true;
  REQUIRE(jump_violation);
}

TEST_CASE("validate_arc flags a flow-map mismatch", "[simulator]") {
  // constant arc claimed for xdot = x dynamics away from zero
  ArcSegment seg{0, 0.0, 1.0, false, {{0.0, {1.0}, {0.0}}, {0.5, {1.0}, {0.0}}, {1.0, {1.0}, {0.0}}}};
  const HybridArc arc(htd_validate({{0, 0.0, 1.0}}), {seg}, 1);
  const auto ex1 = make_ex1();
  const auto chk = validate_arc(ex1.system, arc, w_const(0.2), SolveMode::E);
  REQUIRE_FALSE(chk.valid);
  bool flow_map = false;
  for (const auto& v : chk.violations)
    if (v.kind == "flow-map") flow_map = true;
  REQUIRE(flow_map);
}

TEST_CASE("AE mode flows through a violating override; E mode does not", "[simulator]") {
  const auto ex1 = make_ex1();
  const Signal w = with_override(w_const(0.2), 0.5, {-0.2});
  // from -1 under flow priority the state passes x(0.5) ~ -1.65 where the
  // override makes |x+w| = 1.85 > 1.5
  const auto rep_ae = solve(ex1.system, {-1.0}, w, cfg_with(2.0, Priority::Flow, SolveMode::AE));
  REQUIRE(rep_ae.termination.kind == Termination::Kind::BudgetExhausted);
  const auto chk_ae = validate_arc(ex1.system, rep_ae.arc, w, SolveMode::AE);
  REQUIRE(chk_ae.valid);
  const auto chk_e = validate_arc(ex1.system, rep_ae.arc, w, SolveMode::E);
  REQUIRE_FALSE(chk_e.valid);
  REQUIRE(chk_e.violations[0].kind == "flow-set");
  REQUIRE(chk_e.violations[0].t == 0.5);

  // E-mode solve truncates at the override and jumps there instead
  const auto rep_e = solve(ex1.system, {-1.0}, w, cfg_with(2.0, Priority::Flow, SolveMode::E));
  const auto te = jump_times(rep_e);
  REQUIRE_FALSE(te.empty());
  REQUIRE(te.front() == 0.5);
}

TEST_CASE("priority consistency: no interior jump opportunities under jump priority",
          "[simulator][property]") {
  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {1.0}, w_const(0.2), cfg_with(10.0, Priority::Jump));
  const Signal w = w_const(0.2);
  for (const auto& seg : rep.arc.segments()) {
    if (seg.t1 <= seg.t0) continue;
    for (int i = 1; i < 64; ++i) {
      const double t = seg.t0 + (seg.t1 - seg.t0) * i / 64.0;
      if (seg.t1 - t < 1e-6) continue;
      const Vec x = arc_eval(rep.arc, {t, seg.j});
      REQUIRE(set_margin(ex1.system.jump_set(), {x[0], signal_eval(w, t)[0]}) > -1e-6);
    }
  }
}

TEST_CASE("determinism: identical runs produce identical reports", "[simulator][property]") {
  const auto ex1 = make_ex1();
  const Signal w = make_step_signal({0.0, 1.0}, {{0.2}, {-0.2}}, kW02);
  const auto a = solve(ex1.system, {0.5}, w, cfg_with(15.0));
  const auto b = solve(ex1.system, {0.5}, w, cfg_with(15.0));
  REQUIRE(report_to_json(a).dump() == report_to_json(b).dump());
}

TEST_CASE("cadlag inputs: E and AE runs coincide", "[simulator][property]") {
  const auto ex3 = make_ex3();
  const Signal w = make_step_signal({0.0, 0.6, 1.4}, {{0.2}, {-0.4}, {0.1}}, Box::whole(1));
  for (double xi : {0.0, 0.5, 1.0}) {
    const auto re = solve(ex3.system, {xi}, w, cfg_with(10.0, Priority::Jump, SolveMode::E));
    const auto rae = solve(ex3.system, {xi}, w, cfg_with(10.0, Priority::Jump, SolveMode::AE));
    REQUIRE(to_json(re.arc).dump() == to_json(rae.arc).dump());
    REQUIRE(re.termination.kind == Termination::Kind::BudgetExhausted);
  }
}

TEST_CASE("enumerate-both branches at the overlap", "[simulator]") {
  const auto ex1 = make_ex1();
  SimConfig cfg = cfg_with(3.0, Priority::EnumerateBoth);
  cfg.branch_budget = 4;
  // xi = 1 lies in C cap D: jump-first and flow-first both occur
  const auto reports = solve_all(ex1.system, {1.0}, w_const(0.2), cfg);
  REQUIRE(reports.size() >= 2);
  REQUIRE(reports[0].branch_tape.size() >= 1);
  // first branch jumps at t=0, second flows first
  REQUIRE(jump_times(reports[0]).front() == 0.0);
  REQUIRE(jump_times(reports[1]).front() > 0.0);
  for (const auto& rep : reports) {
    const auto chk = validate_arc(ex1.system, rep.arc, w_const(0.2), SolveMode::E);
    REQUIRE(chk.valid);
  }
  // deterministic across runs
  const auto again = solve_all(ex1.system, {1.0}, w_const(0.2), cfg);
  REQUIRE(again.size() == reports.size());
  for (size_t i = 0; i < reports.size(); ++i)
    REQUIRE(report_to_json(again[i]).dump() == report_to_json(reports[i]).dump());
}

TEST_CASE("flow-priority solutions flow through the overlap", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {1.0}, w_const(0.2), cfg_with(3.0, Priority::Flow));
  // first jump only once the flow set is exhausted at |x+w| = 1.5, i.e. x = 1.3
  const auto ts = jump_times(rep);
  REQUIRE_FALSE(ts.empty());
  REQUIRE_THAT(ts.front(), Catch::Matchers::WithinAbs(std::log(1.3), 1e-6));
  const auto chk = validate_arc(ex1.system, rep.arc, w_const(0.2), SolveMode::E);
  REQUIRE(chk.valid);
}

TEST_CASE("a discontinuity that leaves C can be rescued by a jump", "[simulator]") {
  // ex3 geometry: C union D covers everything, so a signal step that exits C
  // lands in D and the solution continues by jumping
  const auto ex3 = make_ex3();
  const Signal w = make_step_signal({0.0, 0.5}, {{0.2}, {1.5}}, Box::whole(1));
  const auto rep = solve(ex3.system, {0.0}, w, cfg_with(3.0));
  REQUIRE(rep.termination.kind == Termination::Kind::BudgetExhausted);
  const auto ts = jump_times(rep);
  REQUIRE_FALSE(ts.empty());
  REQUIRE(ts.front() == 0.5);  // the rescue jump fires exactly at the breakpoint
  // post-jump state is -w(0.5) = -1.5
  bool found = false;
  for (const auto& seg : rep.arc.segments())
    if (seg.j == 1) {
      REQUIRE_THAT(seg.nodes.front().x[0], Catch::Matchers::WithinAbs(-1.5, 1e-12));
      found = true;
    }
  REQUIRE(found);
}

TEST_CASE("planar rotation with an input-forced second axis", "[simulator]") {
  // x1' = x2, x2' = -x1 + w on a box state constraint; from the unit circle
  // with w = 0 the trajectory stays on it
  Mat A(2, 2);
  A(0, 1) = 1.0;
  A(1, 0) = -1.0;
  Mat B(2, 1);
  B(1, 0) = 1.0;
  const Box Cbox({Interval::closed(-2.0, 2.0), Interval::closed(-2.0, 2.0),
                  Interval::closed(-0.1, 0.1)});
  const Box Dbox({Interval::closed(1.9, 2.0), Interval::closed(-2.0, 2.0),
                  Interval::closed(-0.1, 0.1)});
  const auto H = HybridSystem::make(2, 1, SetExpr::box(Cbox), SetExpr::box(Dbox),
                                    Box::closed({-0.1}, {0.1}), affine_flow(A, B, {0.0, 0.0}),
                                    affine_jump({AffineReset{Mat::identity(2), Mat(2, 1), {0.0, 0.0}}}),
                                    {}, "rotor");
  const Signal w = w_const(0.0, Box::closed({-0.1}, {0.1}));
  const auto rep = solve(H, {1.0, 0.0}, w, cfg_with(6.28318));
  REQUIRE(rep.termination.kind == Termination::Kind::BudgetExhausted);
  for (const auto& n : rep.arc.segments()[0].nodes)
    REQUIRE_THAT(std::hypot(n.x[0], n.x[1]), Catch::Matchers::WithinAbs(1.0, 1e-8));
  REQUIRE(validate_arc(H, rep.arc, w, SolveMode::E).valid);
}

TEST_CASE("enumerate-both expands multi-valued jump maps", "[simulator]") {
  // reset is {-w, 0}: two successors per jump
  Mat A0(1, 1);
  Mat Bneg(1, 1);
  Bneg(0, 0) = -1.0;
  const auto ex1 = make_ex1();
  const auto H = HybridSystem::make(
      1, 1, ex1.system.flow_set(), ex1.system.jump_set(), kW02,
      affine_flow(Mat::identity(1), Mat(1, 1), {0.0}),
      affine_jump({AffineReset{A0, Bneg, {0.0}}, AffineReset{A0, Mat(1, 1), {0.0}}}), {}, "multi");
  SimConfig cfg = cfg_with(2.0, Priority::EnumerateBoth);
  cfg.branch_budget = 6;
  const auto reports = solve_all(H, {1.0}, w_const(0.2), cfg);
  REQUIRE(reports.size() >= 3);
  // the successor choice appears on some tape
  bool successor_branched = false;
  for (const auto& rep : reports)
    for (const auto& d : rep.diagnostics)
      if (d.kind == "jump" && d.note.rfind("successor 1/", 0) == 0) successor_branched = true;
  REQUIRE(successor_branched);
}

TEST_CASE("curved tabulated inputs drive valid solutions", "[simulator]") {
  piecefn::Tabulated tab;
  for (int i = 0; i <= 40; ++i) {
    const double t = i * 0.25;
    tab.ts.push_back(t);
    tab.vals.push_back({0.2 * std::sin(0.7 * t)});
  }
  SignalPiece p;
  p.t1 = 10.0;
  p.fn = tab;
  SignalPiece hold;
  hold.t0 = 10.0;
  hold.unbounded = true;
  hold.fn = piecefn::Constant{tab.vals.back()};
  const Signal w = Signal::make({p, hold}, {}, kW02);
  REQUIRE(w.classify() == Regularity::AbsContinuous);

  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {0.5}, w, cfg_with(10.0));
  REQUIRE(rep.termination.kind == Termination::Kind::BudgetExhausted);
  REQUIRE(rep.arc.domain().sup().sup_j >= 2);
  REQUIRE(validate_arc(ex1.system, rep.arc, w, SolveMode::E).valid);
}

TEST_CASE("validate_arc rejects arcs past the signal horizon", "[simulator]") {
  const auto ex1 = make_ex1();
  const auto rep = solve(ex1.system, {0.0}, w_const(0.2), cfg_with(5.0));
  SignalPiece p;
  p.t1 = 1.0;  // bounded horizon shorter than the arc
  p.fn = piecefn::Constant{{0.2}};
  const Signal short_w = Signal::make({p}, {}, kW02);
  try {
    validate_arc(ex1.system, rep.arc, short_w, SolveMode::E);
    FAIL("expected HorizonMismatch");
  } catch (const error& e) {
    REQUIRE(e.code() == errc::horizon_mismatch);
  }
}

TEST_CASE("dense output respects the projected state constraint", "[simulator][property]") {
  testing::Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sc = trial % 2 == 0 ? make_ex1() : make_ex2c(1.3);
    const double xi = rng.uniform(-1.0, 1.0);
    const Signal w = make_step_signal({0.0, rng.uniform(0.3, 1.0)},
                                      {{rng.uniform(-0.2, 0.2)}, {rng.uniform(-0.2, 0.2)}}, kW02);
    const auto rep = solve(sc.system, {xi}, w, cfg_with(4.0));
    for (const auto& seg : rep.arc.segments()) {
      if (seg.t1 <= seg.t0) continue;
      for (const auto& n : seg.nodes) REQUIRE(c0_contains(sc.system, n.x, 1e-6));
    }
  }
}
