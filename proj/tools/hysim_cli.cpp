// SPDX-License-Identifier: Apache-2.0
//
// Batch front end: scenario runs, existence/viability checks, set-condition
// certificates and arc validation. Each run writes JSON/CSV into the output
// directory and prints a one-line summary; exit codes encode the verdict
// class so scripts can branch on them:
//   0 ok/holds/complete-evidence, 2 config error, 3 dead state or
//   fails-with-witness or invalid arc, 4 inconclusive/undetermined,
//   5 ends-with-flow (blow-up), 10 internal error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hysim/hysim.hpp"

namespace fs = std::filesystem;
using namespace hysim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDeadOrFails = 3;
constexpr int kExitInconclusive = 4;
constexpr int kExitBlowup = 5;
constexpr int kExitInternal = 10;

std::vector<double> parse_nums(const std::string& s, char delim = ',') {
  std::vector<double> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      out.push_back(std::strtod(cur.c_str(), nullptr));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::strtod(cur.c_str(), nullptr));
  return out;
}

/// Signal mini-language, scalar inputs:
///   const:v | affine:a,b | steps:t0:v0,t1:v1,... | ex2-witness | remark2
/// plus any number of ';'-separated "override:t=v" parts. A leading '@'
/// loads a JSON signal config instead.
Signal parse_signal_spec(const std::string& spec, const Box& W, double horizon_hint) {
  if (!spec.empty() && spec[0] == '@') return signal_from_json(json::parse(read_text_file(spec.substr(1))));

  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ';') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);

  std::optional<Signal> base;
  std::vector<std::pair<double, Vec>> overrides;
  for (const auto& part : parts) {
    if (part == "ex2-witness") {
      base = ex2_witness_signal();
    } else if (part == "remark2") {
      base = remark2_signal();
    } else if (part.rfind("const:", 0) == 0) {
      base = make_constant_signal(parse_nums(part.substr(6)), W);
    } else if (part.rfind("affine:", 0) == 0) {
      const auto ab = parse_nums(part.substr(7));
      if (ab.size() != 2) fail(errc::bad_signal_config, "affine:a,b needs two numbers");
      base = make_affine_signal({ab[0]}, {ab[1]}, W, std::max(horizon_hint, 1.0));
    } else if (part.rfind("steps:", 0) == 0) {
      std::vector<std::string> fields;
      std::string c2;
      for (char ch : part.substr(6)) {
        if (ch == ',') {
          fields.push_back(c2);
          c2.clear();
        } else {
          c2 += ch;
        }
      }
      if (!c2.empty()) fields.push_back(c2);
      std::vector<double> ts;
      std::vector<Vec> vals;
      for (const auto& field : fields) {
        const auto pos = field.find(':');
        if (pos == std::string::npos) fail(errc::bad_signal_config, "steps needs t:v pairs");
        ts.push_back(std::strtod(field.substr(0, pos).c_str(), nullptr));
        vals.push_back({std::strtod(field.substr(pos + 1).c_str(), nullptr)});
      }
      base = make_step_signal(ts, vals, W);
    } else if (part.rfind("override:", 0) == 0) {
      const auto pos = part.find('=');
      if (pos == std::string::npos) fail(errc::bad_signal_config, "override:t=v");
      overrides.emplace_back(std::strtod(part.substr(9, pos - 9).c_str(), nullptr),
                             Vec{std::strtod(part.substr(pos + 1).c_str(), nullptr)});
    } else {
      fail(errc::bad_signal_config, "cannot parse signal part '" + part + "'");
    }
  }
  if (!base) fail(errc::bad_signal_config, "signal spec needs a base part (const/affine/steps/named)");
  Signal sig = *base;
  for (const auto& [t, v] : overrides) sig = with_override(sig, t, v);
  return sig;
}

struct CommonArgs {
  std::string scenario;
  std::string system_file;
  double c = 1.0;
  double delta = 0.2;
  std::string out_dir;
  unsigned seed = 0;
  int jobs = 1;
};

struct LoadedSystem {
  HybridSystem system;
  bool prefer_flow = false;
  std::string label;
  json inputs_echo;
};

LoadedSystem load_system(const CommonArgs& a) {
  if (!a.system_file.empty()) {
    json j = json::parse(read_text_file(a.system_file));
    LoadedSystem ls{system_from_json(j), false, j.value("name", "custom"), json{}};
    ls.inputs_echo["system_file"] = a.system_file;
    ls.inputs_echo["system"] = j;
    return ls;
  }
  if (a.scenario.empty()) fail(errc::bad_config, "need --scenario or --system");
  Scenario sc = make_scenario(a.scenario, {{"c", a.c}, {"delta", a.delta}});
  LoadedSystem ls{sc.system, sc.prefer_flow, sc.key, json{}};
  ls.inputs_echo["scenario"] = sc.key;
  if (a.scenario == "ex2c") {
    ls.inputs_echo["c"] = a.c;
    ls.inputs_echo["delta"] = a.delta;
  }
  return ls;
}

fs::path ensure_out_dir(const CommonArgs& a) {
  std::string dir = a.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("HYSIM_OUT_DIR");
    dir = env != nullptr ? env : "out";
  }
  fs::create_directories(dir);
  return dir;
}

int exit_from_verdict(VcStatus s) {
  switch (s) {
    case VcStatus::Holds: return kExitOk;
    case VcStatus::Inconclusive: return kExitInconclusive;
    case VcStatus::FailsWithWitness: return kExitDeadOrFails;
  }
  return kExitInternal;
}

int exit_from_report(const SolutionReport& rep) {
  switch (rep.termination.kind) {
    case Termination::Kind::BudgetExhausted: return kExitOk;
    case Termination::Kind::DeadState: return kExitDeadOrFails;
    case Termination::Kind::EndsWithFlowBlowup: return kExitBlowup;
    case Termination::Kind::ZenoSuspected: return kExitInconclusive;
  }
  return kExitInternal;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--scenario", a.scenario, "builtin scenario key (see `hysim scenario list`)");
  cmd->add_option("--system", a.system_file, "custom system config (JSON)");
  cmd->add_option("--c", a.c, "flow bound c for ex2c");
  cmd->add_option("--delta", a.delta, "input half-width for ex2c");
  cmd->add_option("--out", a.out_dir, "output directory (default $HYSIM_OUT_DIR or ./out)");
  cmd->add_option("--seed", a.seed, "seed for sampled fallbacks");
  cmd->add_option("--jobs", a.jobs, "parallel workers for region sweeps");
}

SolveMode parse_mode(const std::string& m) {
  if (m == "e") return SolveMode::E;
  if (m == "ae") return SolveMode::AE;
  fail(errc::bad_config, "--mode must be e or ae");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hysim: simulation and viability analysis of hybrid systems with inputs"};
  app.require_subcommand(1);

  // ---- scenario ----
  auto* scen = app.add_subcommand("scenario", "scenario registry");
  scen->add_subcommand("list", "list builtin scenarios");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "construct a solution and classify its termination");
  CommonArgs sim_args;
  add_common(sim, sim_args);
  std::string sim_xi, sim_w, sim_mode = "e", sim_priority;
  SimConfig sim_cfg;
  sim->add_option("--xi", sim_xi, "initial state (comma-separated)")->required();
  sim->add_option("--w", sim_w, "input signal (mini-language or @file.json)")->required();
  sim->add_option("--mode", sim_mode, "solution concept: e or ae (default e)");
  sim->add_option("--priority", sim_priority, "jump|flow|both at C/D overlaps");
  sim->add_option("--t-max", sim_cfg.t_max, "flow-time budget");
  sim->add_option("--j-max", sim_cfg.j_max, "jump budget");
  sim->add_option("--event-tol", sim_cfg.event_tol, "event location tolerance");
  sim->add_option("--branch-budget", sim_cfg.branch_budget, "max branches under --priority both");

  // ---- check-existence ----
  auto* chkex = app.add_subcommand("check-existence", "nontrivial-solution existence");
  CommonArgs ex_args;
  add_common(chkex, ex_args);
  std::string ex_xi, ex_w, ex_mode = "e", ex_xi0;
  int ex_grid = 50;
  chkex->add_option("--xi", ex_xi, "initial state (point check)");
  chkex->add_option("--w", ex_w, "input signal (point check)");
  chkex->add_option("--mode", ex_mode, "e or ae");
  chkex->add_option("--xi0", ex_xi0, "region lo,hi per axis as lo1,hi1[,lo2,hi2...] (region check)");
  chkex->add_option("--grid", ex_grid, "region grid points per axis");

  // ---- check-viability ----
  auto* chkv = app.add_subcommand("check-viability", "viability condition checkers");
  CommonArgs v_args;
  add_common(chkv, v_args);
  std::string v_check, v_xi, v_w, v_w1, v_w2, v_mode = "e";
  double v_uradius = 1e-2, v_eps = 1e-2;
  std::string v_deltas;
  chkv->add_option("--check", v_check, "probe|tangent-ac|tangent-cont|split|ball")->required();
  chkv->add_option("--xi", v_xi, "initial state")->required();
  chkv->add_option("--w", v_w, "input signal (probe/tangent checks)");
  chkv->add_option("--w1", v_w1, "AC input entering C (split check)");
  chkv->add_option("--w2", v_w2, "measurable input not entering C (split check)");
  chkv->add_option("--mode", v_mode, "e or ae (probe)");
  chkv->add_option("--u-radius", v_uradius, "neighborhood radius");
  chkv->add_option("--eps", v_eps, "time window");
  chkv->add_option("--delta-grid", v_deltas, "ball radii, comma-separated");

  // ---- check-setcond ----
  auto* chks = app.add_subcommand("check-setcond", "output-form set condition");
  CommonArgs s_args;
  add_common(chks, s_args);
  std::string s_range_lo, s_range_hi;
  chks->add_option("--range-lo", s_range_lo, "range(h) lower corner (default unbounded)");
  chks->add_option("--range-hi", s_range_hi, "range(h) upper corner");

  // ---- validate-arc ----
  auto* val = app.add_subcommand("validate-arc", "a-posteriori solution check of an arc file");
  CommonArgs va_args;
  add_common(val, va_args);
  std::string va_arc, va_signal, va_mode = "e";
  val->add_option("--arc", va_arc, "arc file (.json or .csv)")->required();
  val->add_option("--signal", va_signal, "signal config (JSON)")->required();
  val->add_option("--mode", va_mode, "e or ae");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (scen->parsed()) {
      for (const auto& [key, summary] : scenario_list())
        std::cout << key << "  -  " << summary << "\n";
      return kExitOk;
    }

    if (sim->parsed()) {
      LoadedSystem ls = load_system(sim_args);
      sim_cfg.mode = parse_mode(sim_mode);
      if (sim_priority.empty())
        sim_cfg.priority = ls.prefer_flow ? Priority::Flow : Priority::Jump;
      else if (sim_priority == "jump")
        sim_cfg.priority = Priority::Jump;
      else if (sim_priority == "flow")
        sim_cfg.priority = Priority::Flow;
      else if (sim_priority == "both")
        sim_cfg.priority = Priority::EnumerateBoth;
      else
        fail(errc::bad_config, "--priority must be jump|flow|both");

      const Vec xi = parse_nums(sim_xi);
      const Signal w = parse_signal_spec(sim_w, ls.system.input_set(), sim_cfg.t_max);
      const fs::path dir = ensure_out_dir(sim_args);

      const auto reports = solve_all(ls.system, xi, w, sim_cfg);
      write_text_file((dir / "signal.json").string(), to_json(w).dump(2) + "\n");
      for (size_t k = 0; k < reports.size(); ++k) {
        const auto& rep = reports[k];
        const std::string suffix = reports.size() > 1 ? "_" + std::to_string(k) : "";
        const std::string cls = classification_name(classify_termination(rep, ls.system, w));
        write_text_file((dir / ("report" + suffix + ".json")).string(),
                        report_to_json(rep, cls).dump(2) + "\n");
        write_text_file((dir / ("arc" + suffix + ".json")).string(), to_json(rep.arc).dump(2) + "\n");
        write_text_file((dir / ("arc" + suffix + ".csv")).string(), arc_to_csv(rep.arc));
      }
      const auto& rep = reports.front();
      const auto sup = rep.arc.domain().sup();
      std::cout << "simulate " << ls.label << " xi=" << sim_xi << " mode=" << sim_mode << ": "
                << termination_name(rep.termination.kind) << " ("
                << classification_name(classify_termination(rep, ls.system, w)) << ") sup_t=" << sup.sup_t
                << " sup_j=" << sup.sup_j << (reports.size() > 1 ? " branches=" + std::to_string(reports.size()) : "")
                << " -> " << dir.string() << "\n";
      return exit_from_report(rep);
    }

    if (chkex->parsed()) {
      LoadedSystem ls = load_system(ex_args);
      const fs::path dir = ensure_out_dir(ex_args);
      if (!ex_xi0.empty()) {
        const auto nums = parse_nums(ex_xi0);
        if (nums.size() % 2 != 0) fail(errc::bad_config, "--xi0 needs lo,hi pairs");
        Vec lo, hi;
        for (size_t i = 0; i < nums.size(); i += 2) {
          lo.push_back(nums[i]);
          hi.push_back(nums[i + 1]);
        }
        const RegionReport rr =
            existence_over_region(ls.system, Box::closed(lo, hi), ex_grid, {0.1, 0.05, 0.01, 0.001},
                                  ex_args.jobs);
        json doc = to_json(rr);
        doc["schema"] = "hysim/region-v1";
        write_text_file((dir / "region.json").string(), doc.dump(2) + "\n");
        std::cout << "check-existence region " << ls.label << " " << rr.region << ": "
                  << vc_status_name(rr.status) << " (" << rr.holds_points << "/" << rr.grid_points
                  << " grid points)" << (rr.vacuous ? " [vacuous]" : "") << " -> " << dir.string()
                  << "\n";
        return exit_from_verdict(rr.status);
      }
      if (ex_xi.empty() || ex_w.empty()) fail(errc::bad_config, "point check needs --xi and --w");
      const Vec xi = parse_nums(ex_xi);
      const Signal w = parse_signal_spec(ex_w, ls.system.input_set(), 10.0);
      const Verdict v = nontrivial_existence(ls.system, xi, w, parse_mode(ex_mode));
      json inputs = ls.inputs_echo;
      inputs["xi"] = xi;
      inputs["w"] = to_json(w);
      inputs["mode"] = ex_mode;
      write_text_file((dir / "certificate.json").string(),
                      certificate_json("nontrivial-existence", inputs, v).dump(2) + "\n");
      std::cout << "check-existence " << ls.label << " xi=" << ex_xi << " mode=" << ex_mode << ": "
                << vc_status_name(v.status) << " -> " << dir.string() << "\n";
      return exit_from_verdict(v.status);
    }

    if (chkv->parsed()) {
      LoadedSystem ls = load_system(v_args);
      const fs::path dir = ensure_out_dir(v_args);
      const Vec xi = parse_nums(v_xi);
      Verdict v;
      json inputs = ls.inputs_echo;
      inputs["check"] = v_check;
      inputs["xi"] = xi;
      if (v_check == "probe") {
        const Signal w = parse_signal_spec(v_w, ls.system.input_set(), 1.0);
        inputs["w"] = to_json(w);
        v = vc_probe(ls.system, xi, w, parse_mode(v_mode));
      } else if (v_check == "tangent-ac") {
        const Signal w = parse_signal_spec(v_w, ls.system.input_set(), 1.0);
        inputs["w"] = to_json(w);
        TangentCheckConfig tc;
        tc.u_radius = v_uradius;
        tc.eps = v_eps;
        v = vc_tangent_ac(ls.system, xi, w, tc);
      } else if (v_check == "tangent-cont") {
        const Signal w = parse_signal_spec(v_w, ls.system.input_set(), 1.0);
        inputs["w"] = to_json(w);
        TangentCheckConfig tc;
        tc.u_radius = v_uradius;
        tc.eps = v_eps;
        v = vc_tangent_continuous(ls.system, xi, w, tc);
      } else if (v_check == "split") {
        // scalar mini-language: w1 (when present) takes the first input axis,
        // w2 the rest
        std::optional<Signal> w1;
        if (!v_w1.empty() && v_w1 != "none")
          w1 = parse_signal_spec(v_w1, Box{{ls.system.input_set().iv[0]}}, 1.0);
        Box W2;
        for (int k = w1 ? 1 : 0; k < ls.system.n_w(); ++k)
          W2.iv.push_back(ls.system.input_set().iv[static_cast<size_t>(k)]);
        const Signal w2 = parse_signal_spec(v_w2, W2, 1.0);
        inputs["w2"] = to_json(w2);
        if (w1) inputs["w1"] = to_json(*w1);
        TangentCheckConfig tc;
        tc.u_radius = v_uradius;
        tc.eps = v_eps;
        v = vc_split(ls.system, xi, w1, w2, tc);
      } else if (v_check == "ball") {
        std::vector<double> deltas = {0.1, 0.05, 0.01, 0.001};
        if (!v_deltas.empty()) deltas = parse_nums(v_deltas);
        inputs["delta_grid"] = deltas;
        v = vc_ball_margin(ls.system, xi, deltas);
      } else {
        fail(errc::bad_config, "--check must be probe|tangent-ac|tangent-cont|split|ball");
      }
      write_text_file((dir / "certificate.json").string(),
                      certificate_json("vc-" + v_check, inputs, v).dump(2) + "\n");
      std::cout << "check-viability " << v_check << " " << ls.label << " xi=" << v_xi << ": "
                << vc_status_name(v.status) << " [" << v.method << "] -> " << dir.string() << "\n";
      return exit_from_verdict(v.status);
    }

    if (chks->parsed()) {
      LoadedSystem ls = load_system(s_args);
      const fs::path dir = ensure_out_dir(s_args);
      Box range = Box::whole(1);
      if (!s_range_lo.empty() || !s_range_hi.empty()) {
        const Vec lo = parse_nums(s_range_lo);
        const Vec hi = parse_nums(s_range_hi);
        if (lo.size() != hi.size()) fail(errc::bad_config, "range lo/hi dims differ");
        range = Box::closed(lo, hi);
      }
      const OutputFormVerdict ov = output_form_existence(ls.system, range);
      json inputs = ls.inputs_echo;
      inputs["range_h"] = to_json(range);
      json doc = certificate_json("output-set-condition", inputs, ov.verdict);
      doc["chain"] = to_json(ov.chain);
      write_text_file((dir / "certificate.json").string(), doc.dump(2) + "\n");
      std::cout << "check-setcond " << ls.label << ": " << vc_status_name(ov.verdict.status)
                << " (lhs=" << ov.chain.lhs.str() << " vs " << ov.chain.int_cy_pont_w.str() << ")"
                << " -> " << dir.string() << "\n";
      return exit_from_verdict(ov.verdict.status);
    }

    if (val->parsed()) {
      LoadedSystem ls = load_system(va_args);
      const fs::path dir = ensure_out_dir(va_args);
      const std::string text = read_text_file(va_arc);
      const HybridArc arc = va_arc.size() > 4 && va_arc.substr(va_arc.size() - 4) == ".csv"
                                ? arc_from_csv(text)
                                : arc_from_json(json::parse(text));
      const Signal w = signal_from_json(json::parse(read_text_file(va_signal)));
      const ArcCheck chk = validate_arc(ls.system, arc, w, parse_mode(va_mode));
      json doc;
      doc["schema"] = "hysim/arc-verdict-v1";
      doc["valid"] = chk.valid;
      json viols = json::array();
      for (const auto& viol : chk.violations)
        viols.push_back(json{{"kind", viol.kind}, {"t", viol.t}, {"j", viol.j}, {"value", viol.value}, {"note", viol.note}});
      doc["violations"] = viols;
      write_text_file((dir / "arc_verdict.json").string(), doc.dump(2) + "\n");
      std::cout << "validate-arc " << va_arc << " mode=" << va_mode << ": "
                << (chk.valid ? "valid" : "invalid (" + std::to_string(chk.violations.size()) + " violations)")
                << " -> " << dir.string() << "\n";
      return chk.valid ? kExitOk : kExitDeadOrFails;
    }
  } catch (const error& e) {
    switch (e.code()) {
      case errc::bad_config:
      case errc::bad_signal_config:
      case errc::io_failure:
      case errc::value_outside_input_set:
      case errc::dimension_mismatch:
      // the requested check does not apply to the configured system/signal
      case errc::flow_set_not_split:
      case errc::not_output_form:
      case errc::unsupported_variant:
      case errc::unsupported_signal_shape:
      case errc::not_absolutely_continuous:
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      default:
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}
