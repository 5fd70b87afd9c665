// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: each criterion prints one [PASS]/[FAIL] line and fails
// the test binary when violated. Tolerances are pinned in the assertions.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "hysim/hysim.hpp"
#include "oracles.hpp"

using namespace hysim;

namespace {

const Box kW02 = Box::closed({-0.2}, {0.2});

struct Criterion {
  bool ok = true;
  std::vector<std::string> failures;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (failures.size() < 8) failures.push_back(what);
    }
  }
};

void conclude(int id, const std::string& title, Criterion& c) {
  std::printf("[%s] criterion %d: %s\n", c.ok ? "PASS" : "FAIL", id, title.c_str());
  for (const auto& f : c.failures) std::printf("        - %s\n", f.c_str());
  std::fflush(stdout);
  REQUIRE(c.ok);
}

double run_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> jump_times(const SolutionReport& rep) {
  std::vector<double> ts;
  for (const auto& d : rep.diagnostics)
    if (d.kind == "jump") ts.push_back(d.t);
  return ts;
}

double max_abs_state(const SolutionReport& rep) {
  double m = 0.0;
  for (const auto& s : rep.arc.segments())
    for (const auto& n : s.nodes) m = std::max(m, norm_inf(n.x));
  return m;
}

Signal random_step_signal(testing::Rng& rng, const Box& W, bool allow_override) {
  const bool bounded = W.bounded();
  auto val = [&] {
    return bounded ? rng.uniform(W.iv[0].lo, W.iv[0].hi) : rng.uniform(-2.0, 2.0);
  };
  std::vector<double> ts{0.0};
  std::vector<Vec> vals{{val()}};
  const int extra = rng.uniform_int(0, 2);
  double t = 0.0;
  for (int i = 0; i < extra; ++i) {
    t += rng.uniform(0.3, 1.2);
    ts.push_back(t);
    vals.push_back({val()});
  }
  Signal w = make_step_signal(ts, vals, W);
  if (allow_override && rng.next01() < 0.25) w = with_override(w, rng.uniform(0.0, 2.0), {val()});
  return w;
}

}  // namespace

TEST_CASE("criterion 1: event-reset reproduction", "[acceptance]") {
  Criterion c;
  const auto ex1 = make_ex1();
  const Signal signals[] = {
      make_constant_signal({0.2}, kW02),
      make_constant_signal({-0.2}, kW02),
      make_step_signal({0.0, 1.0}, {{0.2}, {-0.2}}, kW02),
  };
  for (double xi : {-1.0, 0.0, 0.5, 1.0}) {
    for (const auto& w : signals) {
      for (SolveMode mode : {SolveMode::E, SolveMode::AE}) {
        SimConfig cfg;
        cfg.t_max = 20.0;
        cfg.mode = mode;
        SolutionReport rep;
        const double secs = run_seconds([&] { rep = solve(ex1.system, {xi}, w, cfg); });
        c.require(secs < 1.0, "runtime " + std::to_string(secs) + "s >= 1s");
        c.require(rep.termination.kind != Termination::Kind::DeadState,
                  "dead state at xi=" + fmt17(xi));
        c.require(max_abs_state(rep) <= 1.7 + 1e-6,
                  "state left [-1.7,1.7]: " + fmt17(max_abs_state(rep)));
        // post-jump states equal -w(t*)
        const auto& segs = rep.arc.segments();
        for (size_t k = 0; k + 1 < segs.size(); ++k) {
          const double T = segs[k].t1;
          const double x_post = segs[k + 1].nodes.front().x[0];
          c.require(std::abs(x_post - (-signal_eval(w, T)[0])) <= 1e-6,
                    "post-jump state " + fmt17(x_post) + " != -w(" + fmt17(T) + ")");
        }
      }
    }
  }
  // inter-jump flow duration from xi = -0.2 under w = 0.2 is ln 6
  {
    SimConfig cfg;
    cfg.t_max = 20.0;
    const auto rep = solve(ex1.system, {-0.2}, signals[0], cfg);
    const auto ts = jump_times(rep);
    c.require(ts.size() >= 5, "expected a periodic train of jumps");
    double prev = 0.0;
    for (double t : ts) {
      c.require(std::abs((t - prev) - std::log(6.0)) <= 1e-6,
                "inter-jump duration " + fmt17(t - prev) + " != ln 6");
      prev = t;
    }
  }
  conclude(1, "event-reset scenario keeps the state inside [-1.7, 1.7]", c);
}

TEST_CASE("criterion 2: nonexistence under a measurable witness input", "[acceptance]") {
  Criterion c;
  struct Case {
    double cval, xi;
  } cases[] = {{1.0, 1.0}, {1.3, 1.15}, {1.2, 1.1}};  // c = 1.4 - eta, xi = 1.2 - eta/2
  for (const auto& cs : cases) {
    const auto sc = make_ex2c(cs.cval);
    const Signal w = ex2_witness_signal();
    const double secs = run_seconds([&] {
      for (SolveMode mode : {SolveMode::E, SolveMode::AE}) {
        const auto v = nontrivial_existence(sc.system, {cs.xi}, w, mode);
        c.require(v.status == VcStatus::FailsWithWitness,
                  "existence not refuted at c=" + fmt17(cs.cval) + " xi=" + fmt17(cs.xi) +
                      " mode=" + mode_name(mode) + " (" + vc_status_name(v.status) + ")");
      }
      SimConfig cfg;
      cfg.t_max = 5.0;
      const auto rep = solve(sc.system, {cs.xi}, w, cfg);
      c.require(rep.termination.kind == Termination::Kind::DeadState &&
                    rep.termination.at.t == 0.0 && rep.termination.at.j == 0,
                "solve did not stop dead at (0,0) for c=" + fmt17(cs.cval));
    });
    c.require(secs < 0.1, "runtime " + std::to_string(secs) + "s >= 0.1s");
  }
  conclude(2, "neither jump nor flow from the witness initial conditions", c);
}

TEST_CASE("criterion 3: cadlag inputs make e- and ae-solutions coincide", "[acceptance]") {
  Criterion c;
  const auto ex3 = make_ex3();
  const Signal signals[] = {
      make_step_signal({0.0, 0.7, 1.5}, {{0.2}, {-0.5}, {0.3}}, Box::whole(1)),
      make_step_signal({0.0, 0.4}, {{0.9}, {-0.8}}, Box::whole(1)),
  };
  for (double xi : {0.0, 0.5, 1.0}) {
    for (const auto& w : signals) {
      SimConfig cfg;
      cfg.t_max = 10.0;
      cfg.mode = SolveMode::E;
      const auto re = solve(ex3.system, {xi}, w, cfg);
      cfg.mode = SolveMode::AE;
      const auto rae = solve(ex3.system, {xi}, w, cfg);
      c.require(re.termination.kind == Termination::Kind::BudgetExhausted,
                "E run not complete-evidence at xi=" + fmt17(xi));
      c.require(rae.termination.kind == Termination::Kind::BudgetExhausted,
                "AE run not complete-evidence at xi=" + fmt17(xi));
      c.require(classify_termination(re, ex3.system, w) == Classification::CompleteEvidence,
                "classification mismatch");
      const auto te = jump_times(re), tae = jump_times(rae);
      c.require(te.size() == tae.size(), "jump counts differ between modes");
      for (size_t k = 0; k < std::min(te.size(), tae.size()); ++k)
        c.require(std::abs(te[k] - tae[k]) <= 1e-8, "jump time mismatch at k=" + std::to_string(k));
      // states agree on the shared domain
      const auto& dom = re.arc.domain().intervals();
      for (const auto& iv : dom) {
        for (int i = 0; i <= 16; ++i) {
          const double t = iv.t_start + (std::min(iv.t_end, 10.0) - iv.t_start) * i / 16.0;
          if (!rae.arc.domain().contains({t, iv.j})) continue;
          const double de = arc_eval(re.arc, {t, iv.j})[0];
          const double dae = arc_eval(rae.arc, {t, iv.j})[0];
          c.require(std::abs(de - dae) <= 1e-6, "state mismatch at t=" + fmt17(t));
        }
      }
    }
  }
  conclude(3, "e/ae solves agree for cadlag step inputs (complete up to the budget)", c);
}

TEST_CASE("criterion 4: dead by input discontinuity", "[acceptance]") {
  Criterion c;
  const auto r2 = make_remark2();
  const Signal w = remark2_signal();
  SimConfig cfg;
  cfg.t_max = 5.0;
  cfg.priority = Priority::Flow;
  SolutionReport rep;
  const double secs = run_seconds([&] { rep = solve(r2.system, {1.0}, w, cfg); });
  c.require(secs < 0.1, "runtime " + std::to_string(secs) + "s >= 0.1s");
  c.require(rep.termination.kind == Termination::Kind::DeadState, "expected a dead state");
  c.require(rep.termination.at.t == 1.0 && rep.termination.at.j == 0, "expected death at (1,0)");
  if (rep.termination.dead)
    c.require(rep.termination.dead->cause == DeadCause::InputDiscontinuity,
              std::string("cause was ") + dead_cause_name(rep.termination.dead->cause));
  const auto& ivs = rep.arc.domain().intervals();
  c.require(ivs.size() == 1 && ivs[0].t_start == 0.0 && ivs[0].t_end == 1.0,
            "domain is not [0,1] x {0}");
  double dev = 0.0;
  for (const auto& seg : rep.arc.segments())
    for (const auto& n : seg.nodes) {
      dev = std::max(dev, std::abs(n.x[0] - 1.0));
      dev = std::max(dev, std::abs(n.f[0]));
    }
  for (int i = 0; i <= 200; ++i)
    dev = std::max(dev, std::abs(arc_eval(rep.arc, {i / 200.0, 0})[0] - 1.0));
  c.require(dev <= 1e-9, "arc deviates from the constant solution by " + fmt17(dev));
  c.require(classify_termination(rep, r2.system, w) == Classification::EndsWithInputDiscontinuity,
            "classification is not the input-discontinuity case");
  conclude(4, "constant arc on [0,1] ends at the discontinuity of w", c);
}

TEST_CASE("criterion 5: output-form set condition with exact interval chain", "[acceptance]") {
  Criterion c;
  const auto ex1 = make_ex1();
  const auto holds = output_form_existence(ex1.system, Box::whole(1));
  c.require(holds.verdict.status == VcStatus::Holds, "set condition did not hold on ex1 data");
  c.require(holds.chain.dyc_minus_w.iv[0].lo == -1.2 && holds.chain.dyc_minus_w.iv[0].hi == 1.2,
            "D^c - W != [-1.2, 1.2] exactly");
  c.require(holds.chain.cy_minus_w.iv[0].lo == -1.7 && holds.chain.cy_minus_w.iv[0].hi == 1.7,
            "C_y - W != [-1.7, 1.7] exactly");
  c.require(holds.chain.int_cy_pont_w.iv[0].lo == -1.3 && holds.chain.int_cy_pont_w.iv[0].hi == 1.3 &&
                holds.chain.int_cy_pont_w.iv[0].lo_open && holds.chain.int_cy_pont_w.iv[0].hi_open,
            "int(C_y (-) W) != (-1.3, 1.3) exactly");
  // the three boxes are exposed in the certificate document
  json inputs;
  inputs["scenario"] = "ex1";
  json cert = certificate_json("output-set-condition", inputs, holds.verdict);
  cert["chain"] = to_json(holds.chain);
  c.require(cert["chain"]["dyc_minus_w"]["intervals"][0]["hi"] == 1.2 &&
                cert["chain"]["cy_minus_w"]["intervals"][0]["hi"] == 1.7 &&
                cert["chain"]["int_cy_pont_w"]["intervals"][0]["hi"] == 1.3,
            "certificate does not expose the interval chain");

  const auto fails = output_form_existence(make_ex2c(1.0).system, Box::whole(1));
  c.require(fails.verdict.status == VcStatus::FailsWithWitness,
            "shrunk flow bound did not refute the inclusion");
  conclude(5, "set-condition certificate matches the worked interval chain exactly", c);
}

TEST_CASE("criterion 6: flow segments stay inside the projected constraint set", "[acceptance]") {
  Criterion c;
  testing::Rng rng(20240001);
  int segments_checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int which = rng.uniform_int(0, 3);
    Scenario sc = which == 0   ? make_ex1()
                  : which == 1 ? make_ex2c(rng.uniform(1.2, 1.5))
                  : which == 2 ? make_ex3()
                               : make_remark2();
    const auto& W = sc.system.input_set();
    const Signal w = random_step_signal(rng, W, true);
    const double xi = rng.uniform(sc.state_range.iv[0].lo, sc.state_range.iv[0].hi);
    SimConfig cfg;
    cfg.t_max = 4.0;
    cfg.mode = trial % 2 == 0 ? SolveMode::E : SolveMode::AE;
    cfg.priority = sc.prefer_flow ? Priority::Flow : Priority::Jump;
    SolutionReport rep;
    try {
      rep = solve(sc.system, {xi}, w, cfg);
    } catch (const error& e) {
      c.require(false, std::string("solve threw: ") + e.what());
      continue;
    }
    for (const auto& seg : rep.arc.segments()) {
      if (seg.t1 <= seg.t0) continue;
      ++segments_checked;
      for (const auto& n : seg.nodes)
        c.require(c0_contains(sc.system, n.x, 1e-6),
                  sc.key + ": dense sample outside C0 at t=" + fmt17(n.t));
      for (size_t i = 0; i + 1 < seg.nodes.size(); ++i) {
        const double tm = 0.5 * (seg.nodes[i].t + seg.nodes[i + 1].t);
        c.require(c0_contains(sc.system, arc_eval(rep.arc, {tm, seg.j}), 1e-6),
                  sc.key + ": interpolated sample outside C0 at t=" + fmt17(tm));
      }
    }
  }
  c.require(segments_checked >= 150, "corpus produced too few flow segments: " +
                                         std::to_string(segments_checked));
  conclude(6, "all dense-output samples of 200 randomized runs stay in C0 (tol 1e-6)", c);
}

TEST_CASE("criterion 7: trajectory-independent checks imply the probes", "[acceptance]") {
  Criterion c;
  const auto ex1 = make_ex1();
  testing::Rng rng(20240007);
  int ball_holds = 0;
  for (int i = 0; i < 100; ++i) {
    const double xi = rng.uniform(-1.7, 1.7);
    const Signal w = random_step_signal(rng, kW02, true);
    if (vc_ball_margin(ex1.system, {xi}).status != VcStatus::Holds) continue;
    ++ball_holds;
    for (SolveMode mode : {SolveMode::E, SolveMode::AE}) {
      const auto pv = vc_probe(ex1.system, {xi}, w, mode);
      c.require(pv.status == VcStatus::Holds,
                "ball margin held but probe " + std::string(mode_name(mode)) +
                    " did not at xi=" + fmt17(xi));
    }
  }
  c.require(ball_holds >= 40, "ball-margin corpus too small: " + std::to_string(ball_holds));

  const auto of = output_form_existence(ex1.system, Box::whole(1));
  c.require(of.verdict.status == VcStatus::Holds, "output-form condition did not hold");
  for (int k = 0; k < 50; ++k) {
    const double xi = -1.2 + 2.4 * (k + 0.5) / 50.0;
    c.require(vc_ball_margin(ex1.system, {xi}).status == VcStatus::Holds,
              "ball margin failed inside the projected region at xi=" + fmt17(xi));
  }
  conclude(7, "ball margin implies both probes; the set condition implies ball margin", c);
}

TEST_CASE("criterion 8: set-calculus property suite", "[acceptance]") {
  Criterion c;
  testing::Rng rng(20240008);
  for (int i = 0; i < 1000; ++i) {
    const int dim = rng.uniform_int(1, 3);
    const Box A = testing::random_box(rng, dim);
    const Box B = testing::random_box(rng, dim);
    const Box D = pontryagin_sub(A, B);
    if (!D.empty()) {
      for (int s = 0; s < 4; ++s) {
        Vec x(static_cast<size_t>(dim));
        for (int k = 0; k < dim; ++k)
          x[static_cast<size_t>(k)] =
              rng.uniform(D.iv[static_cast<size_t>(k)].lo, D.iv[static_cast<size_t>(k)].hi);
        for (const auto& b : box_vertices(B))
          c.require(A.contains(add(x, b), 1e-9), "(A(-)B)+B left A");
      }
    }
    // projection of a product
    Box AB = A;
    for (const auto& iv : B.iv) AB.iv.push_back(iv);
    const auto pr = project_x(SetExpr::box(AB), B);
    const Box& got = expect_box(pr.set, "acc");
    bool same = pr.exact && got.dim() == dim;
    for (int k = 0; same && k < dim; ++k)
      same = got.iv[static_cast<size_t>(k)].lo == A.iv[static_cast<size_t>(k)].lo &&
             got.iv[static_cast<size_t>(k)].hi == A.iv[static_cast<size_t>(k)].hi;
    c.require(same, "Pi_x(A x B, B) != A");
  }

  int accepted_checked = 0;
  for (int i = 0; i < 200; ++i) {
    const int dim = rng.uniform_int(1, 3);
    const Box b = testing::random_box(rng, dim);
    const SetExpr S = SetExpr::box(b);
    const Vec xi = testing::random_box_point(rng, b);
    const Cone K = tangent_cone(S, xi, 1e-9);
    for (const auto& d : testing::direction_grid(dim, 100, rng)) {
      if (!testing::oracle_accepts_direction(S, xi, d)) continue;
      ++accepted_checked;
      c.require(K.contains(d, 1e-9), "cone rejects an oracle-accepted direction");
    }
  }
  c.require(accepted_checked > 2000,
            "oracle produced too few accepted directions: " + std::to_string(accepted_checked));
  conclude(8, "pontryagin/projection properties and cones vs the brute-force oracle", c);
}

TEST_CASE("criterion 9: solution-concept ordering", "[acceptance]") {
  Criterion c;
  // every E-mode arc of a seeded corpus revalidates in AE mode
  testing::Rng rng(20240009);
  int validated = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int which = rng.uniform_int(0, 2);
    Scenario sc = which == 0 ? make_ex1() : which == 1 ? make_ex2c(rng.uniform(1.2, 1.5)) : make_ex3();
    const Signal w = random_step_signal(rng, sc.system.input_set(), false);
    const double xi = rng.uniform(-1.0, 1.0);
    SimConfig cfg;
    cfg.t_max = 4.0;
    cfg.mode = SolveMode::E;
    const auto rep = solve(sc.system, {xi}, w, cfg);
    if (!arc_is_nontrivial(rep.arc)) continue;
    const auto e_check = validate_arc(sc.system, rep.arc, w, SolveMode::E);
    if (!e_check.valid) continue;  // dead/truncated runs may end outside C; not E-arcs
    ++validated;
    const auto ae_check = validate_arc(sc.system, rep.arc, w, SolveMode::AE);
    c.require(ae_check.valid, sc.key + ": E-valid arc failed AE validation");
  }
  c.require(validated >= 25, "corpus produced too few E-valid arcs: " + std::to_string(validated));

  // an AE-only arc: flow through one override that violates C exactly there
  const auto ex1 = make_ex1();
  const Signal w = with_override(make_constant_signal({0.2}, kW02), 0.5, {-0.2});
  SimConfig cfg;
  cfg.t_max = 2.0;
  cfg.mode = SolveMode::AE;
  cfg.priority = Priority::Flow;
  const auto rep = solve(ex1.system, {-1.0}, w, cfg);
  const auto ae_check = validate_arc(ex1.system, rep.arc, w, SolveMode::AE);
  c.require(ae_check.valid, "constructed AE arc failed AE validation");
  const auto e_check = validate_arc(ex1.system, rep.arc, w, SolveMode::E);
  c.require(!e_check.valid, "constructed AE-only arc unexpectedly passed E validation");
  bool at_override = false;
  for (const auto& v : e_check.violations)
    if (v.kind == "flow-set" && v.t == 0.5) at_override = true;
  c.require(at_override, "E validation failure is not at the override point");
  conclude(9, "e-solutions validate as ae-solutions; an ae-only arc separates the modes", c);
}
