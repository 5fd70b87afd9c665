// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "hysim/scenarios.hpp"
#include "hysim/system.hpp"
#include "oracles.hpp"

using namespace hysim;

TEST_CASE("can_jump on the registry scenarios", "[system]") {
  const auto ex1 = make_ex1();
  REQUIRE(can_jump(ex1.system, {1.2}, {0.2}));        // |1.4| >= 1
  const auto ex2 = make_ex2c(1.0);
  REQUIRE_FALSE(can_jump(ex2.system, {1.0}, {-0.2}));  // |0.8| < 1
  const auto r2 = make_remark2();
  REQUIRE_FALSE(can_jump(r2.system, {1.0}, {2.0}));    // 3 outside [-2,2]
}

TEST_CASE("jump_successors applies the reset", "[system]") {
  const auto ex1 = make_ex1();
  REQUIRE(jump_successors(ex1.system, {-1.2}, {0.2}) == std::vector<Vec>{{-0.2}});
  REQUIRE(jump_successors(ex1.system, {1.2}, {-0.2}) == std::vector<Vec>{{0.2}});
  try {
    jump_successors(ex1.system, {0.0}, {0.0});
    FAIL("expected JumpSetViolation");
  } catch (const error& e) {
    REQUIRE(e.code() == errc::jump_set_violation);
  }
}

TEST_CASE("multi-valued jump maps keep a deterministic order", "[system]") {
  Mat A0(1, 1);
  Mat Bneg(1, 1);
  Bneg(0, 0) = -1.0;
  Mat Bzero(1, 1);
  const JumpMap g = affine_jump({AffineReset{A0, Bneg, {0.0}}, AffineReset{A0, Bzero, {0.0}}});
  const auto succ = g({1.2}, {0.2});
  REQUIRE(succ.size() == 2);
  REQUIRE(succ[0][0] == -0.2);
  REQUIRE(succ[1][0] == 0.0);
}

TEST_CASE("flow_select returns the declared selection", "[system]") {
  const auto ex1 = make_ex1();
  REQUIRE(flow_select(ex1.system, {1.0}, {0.2})[0] == 1.0);
  const auto r2 = make_remark2();
  REQUIRE(flow_select(r2.system, {1.0}, {-1.0})[0] == 0.0);  // -x - w = 0
}

TEST_CASE("flow_select rejects selections outside the enclosure", "[system]") {
  FlowMap bad;
  bad.selection = [](const Vec&, const Vec&) { return Vec{5.0}; };
  bad.enclosure = [](const Vec&, const Vec&) { return Box::closed({-1.0}, {1.0}); };
  bad.singleton = false;
  const auto H = HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)), SetExpr::box(Box::whole(2)),
                                    Box::whole(1), bad, affine_jump({}), {}, "bad");
  try {
    flow_select(H, {0.0}, {0.0});
    FAIL("expected SelectionOutsideEnclosure");
  } catch (const error& e) {
    REQUIRE(e.code() == errc::selection_outside_enclosure);
  }
  // and a set-valued enclosure with a valid selection passes
  FlowMap good = bad;
  good.selection = [](const Vec&, const Vec&) { return Vec{0.0}; };
  const auto H2 = HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)), SetExpr::box(Box::whole(2)),
                                     Box::whole(1), good, affine_jump({}), {}, "good");
  REQUIRE(flow_select(H2, {0.0}, {0.0})[0] == 0.0);
}

TEST_CASE("c0_contains matches the worked projections", "[system]") {
  const auto ex1 = make_ex1();
  REQUIRE(c0_contains(ex1.system, {1.6}));
  REQUIRE_FALSE(c0_contains(ex1.system, {1.8}));
  const auto ex3 = make_ex3();
  for (double x : {-100.0, 0.0, 42.0}) REQUIRE(c0_contains(ex3.system, {x}));
}

TEST_CASE("selection stays inside the enclosure on a random grid", "[system][property]") {
  for (const auto& sc : {make_ex1(), make_ex2c(1.0), make_ex3(), make_remark2()}) {
    Box region = sc.state_range;
    const auto& W = sc.system.input_set();
    for (const auto& iv : W.iv)
      region.iv.push_back(iv.bounded() ? iv : Interval::closed(-2.0, 2.0));
    REQUIRE(selection_in_enclosure(sc.system, region, 1000));
  }
}

TEST_CASE("c0_contains agrees with brute-force input sampling", "[system][property]") {
  const auto ex1 = make_ex1();
  testing::Rng rng(31);
  for (int i = 0; i < 400; ++i) {
    const double x = rng.uniform(-2.5, 2.5);
    // skip the boundary band where finite sampling is inconclusive
    if (std::abs(std::abs(x) - 1.7) < 1e-3) continue;
    bool any = false;
    for (int k = 0; k <= 64; ++k) {
      const double w = -0.2 + 0.4 * k / 64.0;
      if (set_contains(ex1.system.flow_set(), {x, w})) any = true;
    }
    REQUIRE(c0_contains(ex1.system, {x}) == any);
  }
}

TEST_CASE("declared flow regularity is spot-checked on grids", "[system]") {
  for (const auto& sc : {make_ex1(), make_ex2c(1.0), make_remark2()}) {
    REQUIRE(sc.system.assumption1().declared);
    Box region = sc.state_range;
    for (const auto& iv : sc.system.input_set().iv)
      region.iv.push_back(iv.bounded() ? iv : Interval::closed(-2.0, 2.0));
    REQUIRE(assumption1_spot_check(sc.system, region, 500));
  }
  // an empty enclosure fails the check
  FlowMap empty_f;
  empty_f.selection = [](const Vec&, const Vec&) { return Vec{0.0}; };
  empty_f.enclosure = [](const Vec&, const Vec&) {
    return Box({Interval{1.0, -1.0, false, false}});
  };
  empty_f.singleton = false;
  const auto H = HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)), SetExpr::box(Box::whole(2)),
                                    Box::whole(1), empty_f, affine_jump({}),
                                    Assumption1{true, true, true, true}, "emptyF");
  REQUIRE_FALSE(assumption1_spot_check(H, Box::closed({-1.0, -1.0}, {1.0, 1.0}), 100));
}

TEST_CASE("systems reject open input and flow sets", "[system]") {
  try {
    HybridSystem::make(1, 1, SetExpr::box(Box::whole(2)), SetExpr::box(Box::whole(2)),
                       Box::open({-1.0}, {1.0}), affine_flow(Mat::identity(1), Mat(1, 1), {0.0}),
                       affine_jump({}), {}, "bad");
    FAIL("expected BadConfig");
  } catch (const error& e) {
    REQUIRE(e.code() == errc::bad_config);
  }
  try {
    HybridSystem::make(1, 1, SetExpr::box(Box::open({-1.0, -1.0}, {1.0, 1.0})),
                       SetExpr::box(Box::whole(2)), Box::whole(1),
                       affine_flow(Mat::identity(1), Mat(1, 1), {0.0}), affine_jump({}), {},
                       "openC");
    FAIL("expected BadConfig");
  } catch (const error& e) {
    REQUIRE(e.code() == errc::bad_config);
  }
  // an outside-form over an open inner box is closed and accepted as D or C
  REQUIRE(is_closed_set(
      SetExpr::output_form(identity_output_map(1), Box::open({-1.0}, {1.0}), true, 1, 1)));
  REQUIRE_FALSE(is_closed_set(
      SetExpr::output_form(identity_output_map(1), Box::open({-1.0}, {1.0}), false, 1, 1)));
}
