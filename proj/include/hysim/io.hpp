// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hysim/errors.hpp"
#include "hysim/hybrid_time.hpp"
#include "hysim/scenarios.hpp"
#include "hysim/signal.hpp"
#include "hysim/simulator.hpp"
#include "hysim/system.hpp"
#include "hysim/viability.hpp"

namespace hysim {

// ordered_json keeps insertion order, so emitted documents are canonical
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// basics
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_failure, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) fail(errc::io_failure, "cannot write " + path);
  out << content;
  if (!out) fail(errc::io_failure, "short write to " + path);
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(const std::string& s) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

namespace detail {

inline json num_or_null(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

inline double num_from(const json& j, double inf_sign) {
  if (j.is_null()) return inf_sign * kInf;
  return j.get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Box / SetExpr
// ---------------------------------------------------------------------------

inline json to_json(const Box& b) {
  json ivs = json::array();
  for (const auto& iv : b.iv) {
    json o;
    o["lo"] = detail::num_or_null(iv.lo);
    o["hi"] = detail::num_or_null(iv.hi);
    if (iv.lo_open) o["lo_open"] = true;
    if (iv.hi_open) o["hi_open"] = true;
    ivs.push_back(o);
  }
  return json{{"intervals", ivs}};
}

inline Box box_from_json(const json& j) {
  Box b;
  for (const auto& o : j.at("intervals")) {
    Interval iv;
    iv.lo = detail::num_from(o.at("lo"), -1.0);
    iv.hi = detail::num_from(o.at("hi"), +1.0);
    iv.lo_open = o.value("lo_open", false);
    iv.hi_open = o.value("hi_open", false);
    b.iv.push_back(iv);
  }
  return b;
}

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Mat mat_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j.at(0).size()) : 0;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

inline json to_json(const OutputMap& h) {
  if (const auto* a = std::get_if<AffineOutputMap>(&h)) {
    return json{{"kind", "affine"}, {"A", to_json(a->A)}, {"c", a->c}, {"open_map", a->open_map}};
  }
  const auto& m = std::get<MonotoneOutputMap>(h);
  json tables = json::array();
  for (const auto& t : m.comps) tables.push_back(json{{"xs", t.xs}, {"ys", t.ys}});
  return json{{"kind", "monotone"}, {"tables", tables}, {"open_map", m.open_map}};
}

inline OutputMap output_map_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "affine") {
    AffineOutputMap m;
    m.A = mat_from_json(j.at("A"));
    m.c = j.at("c").get<Vec>();
    m.open_map = j.value("open_map", false);
    return m;
  }
  if (kind == "monotone") {
    MonotoneOutputMap m;
    for (const auto& t : j.at("tables"))
      m.comps.push_back({t.at("xs").get<std::vector<double>>(), t.at("ys").get<std::vector<double>>()});
    m.open_map = j.value("open_map", false);
    return m;
  }
  fail(errc::bad_config, "unknown output map kind '" + kind + "'");
}

inline json to_json(const SetExpr& S);

namespace detail {

inline json setexpr_parts(const std::vector<SetExpr>& parts) {
  json arr = json::array();
  for (const auto& p : parts) arr.push_back(to_json(p));
  return arr;
}

}  // namespace detail

inline json to_json(const SetExpr& S) {
  return std::visit(
      [&](const auto& n) -> json {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          json o{{"kind", "box"}};
          o.update(to_json(n.box));
          return o;
        } else if constexpr (std::is_same_v<T, PolyhedronSet>) {
          json rows = json::array();
          for (const auto& a : n.a) rows.push_back(a);
          return json{{"kind", "polyhedron"}, {"a", rows}, {"b", n.b}};
        } else if constexpr (std::is_same_v<T, OutputFormSet>) {
          json o{{"kind", "output_form"},
                 {"h", to_json(n.h)},
                 {"outside", n.outside},
                 {"n_x", n.n_x},
                 {"n_w", n.n_w}};
          o["inner"] = to_json(n.inner);
          return o;
        } else if constexpr (std::is_same_v<T, ProductSet>) {
          return json{{"kind", "product"}, {"parts", detail::setexpr_parts(n.parts)}};
        } else if constexpr (std::is_same_v<T, IntersectionSet>) {
          return json{{"kind", "intersection"}, {"parts", detail::setexpr_parts(n.parts)}};
        } else {
          return json{{"kind", "complement_open"}, {"inner", to_json(*n.inner)}};
        }
      },
      S.node());
}

inline SetExpr setexpr_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "box") return SetExpr::box(box_from_json(j));
  if (kind == "polyhedron") {
    std::vector<Vec> a;
    for (const auto& row : j.at("a")) a.push_back(row.get<Vec>());
    return SetExpr::polyhedron(std::move(a), j.at("b").get<Vec>());
  }
  if (kind == "output_form") {
    return SetExpr::output_form(output_map_from_json(j.at("h")), box_from_json(j.at("inner")),
                                j.value("outside", false), j.at("n_x").get<int>(),
                                j.at("n_w").get<int>());
  }
  if (kind == "product" || kind == "intersection") {
    std::vector<SetExpr> parts;
    for (const auto& p : j.at("parts")) parts.push_back(setexpr_from_json(p));
    return kind == "product" ? SetExpr::product(std::move(parts))
                             : SetExpr::intersection(std::move(parts));
  }
  if (kind == "complement_open") return SetExpr::complement_open(setexpr_from_json(j.at("inner")));
  fail(errc::bad_config, "unknown set kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Signal configs
// ---------------------------------------------------------------------------

inline json to_json(const Signal& w) {
  json pieces = json::array();
  for (const auto& p : w.pieces()) {
    json o;
    o["t0"] = p.t0;
    if (p.unbounded)
      o["t1"] = nullptr;
    else
      o["t1"] = p.t1;
    if (p.offset != 0.0) o["offset"] = p.offset;
    if (const auto* c = std::get_if<piecefn::Constant>(&p.fn)) {
      o["kind"] = "constant";
      o["value"] = c->v;
    } else if (const auto* a = std::get_if<piecefn::Affine>(&p.fn)) {
      o["kind"] = "affine";
      o["a"] = a->a;
      o["b"] = a->b;
    } else if (const auto* q = std::get_if<piecefn::Polynomial>(&p.fn)) {
      o["kind"] = "polynomial";
      json cs = json::array();
      for (const auto& c2 : q->c) cs.push_back(c2);
      o["coeffs"] = cs;
    } else {
      const auto& t = std::get<piecefn::Tabulated>(p.fn);
      o["kind"] = "tabulated";
      o["ts"] = t.ts;
      json vals = json::array();
      for (const auto& v : t.vals) vals.push_back(v);
      o["values"] = vals;
    }
    pieces.push_back(o);
  }
  json ovs = json::array();
  for (const auto& [t, v] : w.overrides()) ovs.push_back(json{{"t", t}, {"value", v}});
  json o;
  o["schema"] = "hysim/signal-v1";
  o["dim"] = w.dim();
  o["W"] = to_json(w.value_set());
  o["pieces"] = pieces;
  o["overrides"] = ovs;
  o["tag"] = regularity_name(w.tag());
  return o;
}

inline Regularity regularity_from_name(const std::string& s) {
  if (s == "Measurable") return Regularity::Measurable;
  if (s == "Cadlag") return Regularity::Cadlag;
  if (s == "Continuous") return Regularity::Continuous;
  if (s == "AbsContinuous") return Regularity::AbsContinuous;
  fail(errc::bad_signal_config, "unknown regularity tag '" + s + "'");
}

inline Signal signal_from_json(const json& j) {
  std::vector<SignalPiece> pieces;
  for (const auto& o : j.at("pieces")) {
    SignalPiece p;
    p.t0 = o.at("t0").get<double>();
    if (o.at("t1").is_null()) {
      p.unbounded = true;
    } else {
      p.t1 = o.at("t1").get<double>();
    }
    p.offset = o.value("offset", 0.0);
    const std::string kind = o.at("kind");
    if (kind == "constant") {
      p.fn = piecefn::Constant{o.at("value").get<Vec>()};
    } else if (kind == "affine") {
      p.fn = piecefn::Affine{o.at("a").get<Vec>(), o.at("b").get<Vec>()};
    } else if (kind == "polynomial") {
      piecefn::Polynomial q;
      for (const auto& c : o.at("coeffs")) q.c.push_back(c.get<Vec>());
      p.fn = std::move(q);
    } else if (kind == "tabulated") {
      piecefn::Tabulated t;
      t.ts = o.at("ts").get<std::vector<double>>();
      for (const auto& v : o.at("values")) t.vals.push_back(v.get<Vec>());
      p.fn = std::move(t);
    } else {
      fail(errc::bad_signal_config, "unknown piece kind '" + kind + "'");
    }
    pieces.push_back(std::move(p));
  }
  std::vector<std::pair<double, Vec>> ovs;
  if (j.contains("overrides"))
    for (const auto& o : j.at("overrides")) ovs.emplace_back(o.at("t").get<double>(), o.at("value").get<Vec>());
  std::optional<Regularity> declared;
  if (j.contains("tag")) declared = regularity_from_name(j.at("tag").get<std::string>());
  return Signal::make(std::move(pieces), std::move(ovs), box_from_json(j.at("W")), declared);
}

// ---------------------------------------------------------------------------
// System configs (affine flow/jump forms)
// ---------------------------------------------------------------------------

inline HybridSystem system_from_json(const json& j) {
  const int n_x = j.at("n_x").get<int>();
  const int n_w = j.at("n_w").get<int>();
  const auto& fj = j.at("flow");
  if (fj.at("kind") != "affine") fail(errc::bad_config, "flow kind must be 'affine'");
  FlowMap flow = affine_flow(mat_from_json(fj.at("A")), mat_from_json(fj.at("B")),
                             fj.at("c").get<Vec>());
  std::vector<AffineReset> resets;
  for (const auto& g : j.at("jump")) {
    if (g.at("kind") != "affine") fail(errc::bad_config, "jump kind must be 'affine'");
    resets.push_back({mat_from_json(g.at("A")), mat_from_json(g.at("B")), g.at("c").get<Vec>()});
  }
  Assumption1 a1;
  if (j.contains("assumption1")) {
    const auto& a = j.at("assumption1");
    a1.declared = true;
    a1.osc = a.value("osc", false);
    a1.locally_bounded = a.value("locally_bounded", false);
    a1.nonempty_convex = a.value("nonempty_convex", false);
  }
  return HybridSystem::make(n_x, n_w, setexpr_from_json(j.at("flow_set")),
                            setexpr_from_json(j.at("jump_set")), box_from_json(j.at("W")), flow,
                            affine_jump(std::move(resets)), a1, j.value("name", "custom"));
}

// ---------------------------------------------------------------------------
// Arcs
// ---------------------------------------------------------------------------

inline json to_json(const HybridArc& arc) {
  json ivs = json::array();
  for (const auto& iv : arc.domain().intervals())
    ivs.push_back(json{{"j", iv.j}, {"t_start", iv.t_start}, {"t_end", detail::num_or_null(iv.t_end)}});
  json segs = json::array();
  for (const auto& s : arc.segments()) {
    json nodes = json::array();
    for (const auto& n : s.nodes) nodes.push_back(json{{"t", n.t}, {"x", n.x}, {"f", n.f}});
    segs.push_back(json{{"j", s.j}, {"nodes", nodes}});
  }
  json o;
  o["schema"] = "hysim/arc-v1";
  o["state_dim"] = arc.state_dim();
  o["domain"] = json{{"intervals", ivs}, {"right_open", arc.domain().last_right_open()}};
  o["segments"] = segs;
  return o;
}

inline HybridArc arc_from_json(const json& j) {
  std::vector<HtdInterval> ivs;
  for (const auto& o : j.at("domain").at("intervals"))
    ivs.push_back({o.at("j").get<int>(), o.at("t_start").get<double>(),
                   detail::num_from(o.at("t_end"), +1.0)});
  HybridTimeDomain dom = htd_validate(std::move(ivs), j.at("domain").value("right_open", false));
  std::vector<ArcSegment> segs;
  for (const auto& o : j.at("segments")) {
    ArcSegment s;
    s.j = o.at("j").get<int>();
    for (const auto& n : o.at("nodes"))
      s.nodes.push_back({n.at("t").get<double>(), n.at("x").get<Vec>(), n.at("f").get<Vec>()});
    s.t0 = s.nodes.front().t;
    s.t1 = s.nodes.back().t;
    const auto& iv = dom.intervals()[segs.size()];
    s.t0 = iv.t_start;
    s.t1 = iv.t_end;
    s.unbounded = iv.unbounded();
    segs.push_back(std::move(s));
  }
  return HybridArc(std::move(dom), std::move(segs), j.at("state_dim").get<int>());
}

/// CSV dump: one row per dense-output sample, decimals round-trip the exact
/// doubles (17 significant digits).
inline std::string arc_to_csv(const HybridArc& arc) {
  std::string s = "# schema: hysim/arc-csv-v1\n";
  s += "j,t";
  for (int i = 1; i <= arc.state_dim(); ++i) s += ",x_" + std::to_string(i);
  s += "\n";
  for (const auto& seg : arc.segments())
    for (const auto& n : seg.nodes) {
      s += std::to_string(seg.j) + "," + fmt17(n.t);
      for (double v : n.x) s += "," + fmt17(v);
      s += "\n";
    }
  return s;
}

/// Rebuilds an arc from the CSV dump; slopes are re-estimated from the
/// samples, so validation tolerances still apply but exact slopes need the
/// JSON form.
inline HybridArc arc_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::vector<std::pair<int, ArcNode>> rows;
  int state_dim = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'j') continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) fail(errc::io_failure, "bad CSV row: " + line);
    ArcNode n;
    const int j = std::stoi(cells[0]);
    n.t = std::strtod(cells[1].c_str(), nullptr);
    for (size_t i = 2; i < cells.size(); ++i) n.x.push_back(std::strtod(cells[i].c_str(), nullptr));
    state_dim = static_cast<int>(n.x.size());
    n.f.assign(n.x.size(), 0.0);
    rows.emplace_back(j, std::move(n));
  }
  if (rows.empty()) fail(errc::io_failure, "empty CSV arc");
  std::vector<ArcSegment> segs;
  for (auto& [j, node] : rows) {
    if (segs.empty() || segs.back().j != j) segs.push_back(ArcSegment{j, node.t, node.t, false, {}});
    segs.back().nodes.push_back(std::move(node));
  }
  std::vector<HtdInterval> ivs;
  for (auto& s : segs) {
    s.t0 = s.nodes.front().t;
    s.t1 = s.nodes.back().t;
    // centered-difference slopes
    for (size_t i = 0; i < s.nodes.size(); ++i) {
      const size_t a = i == 0 ? 0 : i - 1;
      const size_t b = i + 1 == s.nodes.size() ? i : i + 1;
      const double dt = s.nodes[b].t - s.nodes[a].t;
      if (dt > 0.0)
        for (size_t c = 0; c < s.nodes[i].f.size(); ++c)
          s.nodes[i].f[c] = (s.nodes[b].x[c] - s.nodes[a].x[c]) / dt;
    }
    ivs.push_back({s.j, s.t0, s.t1});
  }
  return HybridArc(htd_validate(std::move(ivs)), std::move(segs), state_dim);
}

// ---------------------------------------------------------------------------
// Reports and certificates
// ---------------------------------------------------------------------------

inline json to_json(const SimConfig& cfg) {
  json o;
  o["mode"] = mode_name(cfg.mode);
  o["priority"] = priority_name(cfg.priority);
  o["t_max"] = cfg.t_max;
  o["j_max"] = cfg.j_max;
  o["step_init"] = cfg.step_init;
  o["step_min"] = cfg.step_min;
  o["step_max"] = cfg.step_max;
  o["rel_tol"] = cfg.rel_tol;
  o["abs_tol"] = cfg.abs_tol;
  o["event_tol"] = cfg.event_tol;
  o["membership_tol"] = cfg.membership_tol;
  o["branch_budget"] = cfg.branch_budget;
  o["blowup_threshold"] = cfg.blowup_threshold;
  o["zeno_jumps"] = cfg.zeno_jumps;
  o["zeno_window"] = cfg.zeno_window;
  return o;
}

inline json to_json(const Termination& term) {
  json o;
  o["kind"] = termination_name(term.kind);
  if (term.kind == Termination::Kind::BudgetExhausted)
    o["budget"] = term.time_budget ? "t_max" : "j_max";
  o["at"] = json{{"t", term.at.t}, {"j", term.at.j}};
  if (term.dead) {
    o["dead"] = json{{"cause", dead_cause_name(term.dead->cause)},
                     {"jump_possible", term.dead->jump_possible},
                     {"flow_possible", term.dead->flow_possible},
                     {"probe_survived", term.dead->probe_survived},
                     {"probe_forced", term.dead->probe_forced}};
  }
  return o;
}

inline json report_to_json(const SolutionReport& rep, const std::string& classification = "") {
  json o;
  o["schema"] = "hysim/report-v1";
  o["termination"] = to_json(rep.termination);
  if (!classification.empty()) o["classification"] = classification;
  json diags = json::array();
  for (const auto& d : rep.diagnostics)
    diags.push_back(json{{"t", d.t}, {"j", d.j}, {"kind", d.kind}, {"margin", d.margin}, {"note", d.note}});
  o["diagnostics"] = diags;
  o["config"] = to_json(rep.config);
  if (!rep.branch_tape.empty()) o["branch_tape"] = rep.branch_tape;
  o["arc"] = to_json(rep.arc);
  return o;
}

inline json to_json(const Verdict& v) {
  json o;
  o["status"] = vc_status_name(v.status);
  o["method"] = v.method;
  if (v.witness) {
    o["witness"] = json{{"point", v.witness->point}, {"time", v.witness->time}, {"margin", v.witness->margin}};
  } else {
    o["witness"] = nullptr;
  }
  json params;
  for (const auto& [k, val] : v.info) params[k] = val;
  o["params"] = params;
  return o;
}

/// Stable certificate document for regression testing: condition id, hash of
/// the canonical input serialization, verdict and parameters.
inline json certificate_json(const std::string& condition, const json& inputs, const Verdict& v) {
  json o;
  o["schema"] = "hysim/certificate-v1";
  o["condition"] = condition;
  o["inputs_hash"] = hash_hex(inputs.dump());
  o.update(to_json(v));
  return o;
}

inline json to_json(const RegionReport& r) {
  json o;
  o["status"] = vc_status_name(r.status);
  o["vacuous"] = r.vacuous;
  o["region"] = r.region;
  o["grid_points"] = r.grid_points;
  o["holds_points"] = r.holds_points;
  json pts = json::array();
  for (const auto& p : r.inconclusive_points) pts.push_back(p);
  o["inconclusive_points"] = pts;
  if (!r.note.empty()) o["note"] = r.note;
  return o;
}

inline json to_json(const SetConditionResult& c) {
  json o;
  o["holds"] = c.holds;
  o["dyc_minus_w"] = to_json(c.dyc_minus_w);
  o["cy_minus_w"] = to_json(c.cy_minus_w);
  o["int_cy_pont_w"] = to_json(c.int_cy_pont_w);
  o["lhs"] = to_json(c.lhs);
  return o;
}

}  // namespace hysim
