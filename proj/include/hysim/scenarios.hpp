// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "hysim/signal.hpp"
#include "hysim/system.hpp"

namespace hysim {

/// A registered system plus the defaults the front ends need: a state range
/// for grids/samplers and the priority under which its reference trajectory
/// is reproduced.
struct Scenario {
  std::string key;
  std::string summary;
  HybridSystem system;
  Box state_range;     // sensible sampling window for the state
  bool prefer_flow = false;  // remark2's jump is a self-loop; flow realizes it
};

namespace detail {

inline HybridSystem event_reset_system(double c, double delta, const std::string& name) {
  // xdot = x            |x + w| <= c
  // x+   = -w           |x + w| >= 1
  const Box W = delta == kInf ? Box::whole(1) : Box::closed({-delta}, {delta});
  SetExpr C = SetExpr::output_form(identity_output_map(1), Box::closed({-c}, {c}), false, 1, 1);
  SetExpr D = SetExpr::output_form(identity_output_map(1), Box::open({-1.0}, {1.0}), true, 1, 1);
  Mat A(1, 1);
  A(0, 0) = 1.0;
  Mat B(1, 1);
  B(0, 0) = 0.0;
  Mat Aj(1, 1);
  Mat Bj(1, 1);
  Bj(0, 0) = -1.0;
  Assumption1 a1{true, true, true, true};
  return HybridSystem::make(1, 1, C, D, W, affine_flow(A, B, {0.0}),
                            affine_jump({AffineReset{Aj, Bj, {0.0}}}), a1, name);
}

}  // namespace detail

/// Event-driven reset with measurement noise, overlap up to |x+w| in [1, 1.5].
inline Scenario make_ex1() {
  Scenario s;
  s.key = "ex1";
  s.summary = "event-driven reset, flow |x+w|<=1.5, jump |x+w|>=1, x+=-w, W=[-0.2,0.2]";
  s.system = detail::event_reset_system(1.5, 0.2, "ex1");
  s.state_range = Box::closed({-1.7}, {1.7});
  return s;
}

/// Same family with flow bound c (the shrinking-overlap study); W=[-delta,delta].
inline Scenario make_ex2c(double c, double delta = 0.2) {
  Scenario s;
  s.key = "ex2c";
  s.summary = "event-driven reset with parameter c: flow |x+w|<=c, jump |x+w|>=1";
  s.system = detail::event_reset_system(c, delta, "ex2c");
  s.state_range = Box::closed({-(c + delta)}, {c + delta});
  return s;
}

/// c = 1 with unrestricted input values (cadlag input study).
inline Scenario make_ex3() {
  Scenario s;
  s.key = "ex3";
  s.summary = "c=1 with W=R: flow |x+w|<=1, jump |x+w|>=1, x+=-w";
  s.system = detail::event_reset_system(1.0, kInf, "ex3");
  s.state_range = Box::closed({-3.0}, {3.0});
  return s;
}

/// Dead-by-discontinuity example:
///   xdot = -x - w   x + w <= 1
///   x+   = -w       -2 <= x + w <= 2,  W = R.
inline Scenario make_remark2() {
  Scenario s;
  s.key = "remark2";
  s.summary = "xdot=-x-w on x+w<=1, jump on -2<=x+w<=2, x+=-w, W=R";
  SetExpr C = SetExpr::polyhedron({{1.0, 1.0}}, {1.0});
  SetExpr D = SetExpr::output_form(identity_output_map(1), Box::closed({-2.0}, {2.0}), false, 1, 1);
  Mat A(1, 1);
  A(0, 0) = -1.0;
  Mat B(1, 1);
  B(0, 0) = -1.0;
  Mat Aj(1, 1);
  Mat Bj(1, 1);
  Bj(0, 0) = -1.0;
  Assumption1 a1{true, true, true, true};
  s.system = HybridSystem::make(1, 1, C, D, Box::whole(1), affine_flow(A, B, {0.0}),
                                affine_jump({AffineReset{Aj, Bj, {0.0}}}), a1, "remark2");
  s.state_range = Box::closed({-3.0}, {3.0});
  s.prefer_flow = true;
  return s;
}

inline std::vector<std::pair<std::string, std::string>> scenario_list() {
  return {
      {"ex1", make_ex1().summary},
      {"ex2c", "event-driven reset with parameter c (default 1.0), W=[-delta,delta]"},
      {"ex3", make_ex3().summary},
      {"remark2", make_remark2().summary},
  };
}

inline Scenario make_scenario(const std::string& key,
                              const std::map<std::string, double>& params = {}) {
  auto get = [&](const std::string& k, double dflt) {
    auto it = params.find(k);
    return it == params.end() ? dflt : it->second;
  };
  if (key == "ex1") return make_ex1();
  if (key == "ex2c") return make_ex2c(get("c", 1.0), get("delta", 0.2));
  if (key == "ex3") return make_ex3();
  if (key == "remark2") return make_remark2();
  fail(errc::bad_config, "unknown scenario '" + key + "'");
}

// ---- the named input signals the examples use ----

/// w(0) = -0.2 (point override), w(t) = 0.2 for t > 0.
inline Signal ex2_witness_signal() {
  return with_override(make_constant_signal({0.2}, Box::closed({-0.2}, {0.2})), 0.0, {-0.2});
}

/// w = -1 on [0,1), 2 on [1,inf).
inline Signal remark2_signal() {
  return make_step_signal({0.0, 1.0}, {{-1.0}, {2.0}}, Box::whole(1));
}

}  // namespace hysim
