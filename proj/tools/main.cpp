// tds: stability analysis and delayed-feedback design for linear retarded
// time-delay systems. See README.md for the file format and examples.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tds/analysis.hpp"
#include "tds/feedback.hpp"
#include "tds/invariant.hpp"
#include "tds/quasipoly.hpp"
#include "tds/simulate.hpp"
#include "tds/system_io.hpp"

namespace {

using tds::Json;

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitSchema = 3;
constexpr int kExitValidation = 4;
constexpr int kExitDegenerate = 5;
constexpr int kExitNumerical = 6;
constexpr int kExitUsage = 64;

struct CommonOpts {
  std::string file;
  std::string format = "json";
  std::string out;
  double tau_max = 4.0;
  double omega_max = 0.0;  // 0 = auto
  int grid = 2000;
  int nodes = 64;
  double rank_tol = 1e-8;
  double cluster_tol = 1e-6;
  double residual_tol = 1e-8;
};

tds::ToleranceConfig tolerances(const CommonOpts& o) {
  tds::ToleranceConfig cfg;
  cfg.rank_tol = o.rank_tol;
  cfg.eig_cluster_tol = o.cluster_tol;
  cfg.residual_tol = o.residual_tol;
  return cfg;
}

Json base_config(const CommonOpts& o) {
  Json c;
  c["rank_tol"] = o.rank_tol;
  c["eig_cluster_tol"] = o.cluster_tol;
  c["residual_tol"] = o.residual_tol;
  c["format"] = o.format;
  return c;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("file", o.file, "system description (JSON)")->required();
  cmd->add_option("--format", o.format, "output format: json or csv");
  cmd->add_option("--out", o.out, "output path (default: stdout)");
  cmd->add_option("--rank-tol", o.rank_tol, "relative singular-value threshold");
  cmd->add_option("--cluster-tol", o.cluster_tol, "eigenvalue grouping radius");
  cmd->add_option("--residual-tol", o.residual_tol, "block-zero acceptance, relative");
  cmd->add_option("--tol", o.rank_tol, "shorthand for --rank-tol");
}

tds::Complex parse_pole(const std::string& text) {
  // a+bj with nonzero b, e.g. -0.3254+0.3254j
  std::string s = text;
  if (s.empty() || (s.back() != 'j' && s.back() != 'i')) {
    throw tds::ValidationError("--pole: expected a+bj, got '" + text + "'");
  }
  s.pop_back();
  size_t split = std::string::npos;
  for (size_t i = 1; i < s.size(); ++i) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') split = i;
  }
  if (split == std::string::npos) {
    throw tds::ValidationError("--pole: expected a real and an imaginary part in '" + text + "'");
  }
  try {
    const double re = std::stod(s.substr(0, split));
    const double im = std::stod(s.substr(split));
    if (im == 0.0) {
      throw tds::ValidationError("--pole: imaginary part must be nonzero");
    }
    return {re, im};
  } catch (const std::invalid_argument&) {
    throw tds::ValidationError("--pole: cannot parse '" + text + "'");
  }
}

std::vector<double> parse_csv_doubles(const std::string& text, const std::string& flag) {
  std::vector<double> vals;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      vals.push_back(std::stod(tok));
    } catch (...) {
      throw tds::ValidationError(flag + ": cannot parse '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return vals;
}

const tds::TimeDelaySystem& need_system(const tds::SystemFile& f) {
  if (!f.system) throw tds::ValidationError("this command needs a \"terms\" block in the file");
  return *f.system;
}

const tds::Plant& need_plant(const tds::SystemFile& f) {
  if (!f.plant) throw tds::ValidationError("this command needs a \"plant\" block in the file");
  return *f.plant;
}

Json crossing_to_json(const tds::CrossingPoint& c, double tau_max) {
  Json j;
  j["omega"] = c.omega;
  j["theta"] = c.theta;
  j["tendency"] = c.tendency;
  j["kind"] = c.kind == tds::CrossingKind::kTransversal
                  ? "transversal"
                  : (c.kind == tds::CrossingKind::kTangential ? "tangential" : "degenerate");
  j["delays"] = c.delays(tau_max);
  return j;
}

Json map_to_json(const tds::StabilityMap& m) {
  Json j;
  j["nu0"] = m.nu0;
  Json events = Json::array();
  for (const auto& e : m.events) {
    events.push_back(Json{{"tau", e.tau}, {"delta_nu", e.delta_nu}, {"omega", e.omega}});
  }
  j["events"] = std::move(events);
  Json intervals = Json::array();
  for (const auto& iv : m.intervals) {
    intervals.push_back(Json{{"tau_lo", iv.lo}, {"tau_hi", iv.hi}, {"nu", iv.nu}});
  }
  j["intervals"] = std::move(intervals);
  Json stable = Json::array();
  for (const auto& iv : m.stable_intervals()) stable.push_back(Json::array({iv.lo, iv.hi}));
  j["stable_intervals"] = std::move(stable);
  j["degenerate"] = m.degenerate;
  j["degenerate_frequencies"] = m.degenerate_frequencies;
  return j;
}

Json design_to_json(const tds::GainDesign& d) {
  Json j;
  std::vector<double> k(d.K.data(), d.K.data() + d.K.size());
  j["K"] = k;
  j["tau"] = d.tau;
  Json ivs = Json::array();
  for (const auto& [lo, hi] : d.stable_intervals) ivs.push_back(Json::array({lo, hi}));
  j["stable_intervals"] = std::move(ivs);
  Json poles = Json::array();
  for (const auto& p : d.placed_poles) poles.push_back(Json::array({p.real(), p.imag()}));
  j["placed_poles"] = std::move(poles);
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"analysis and delayed-feedback stabilization of linear retarded time-delay systems"};
  app.require_subcommand(1);

  CommonOpts o;
  double tau = 0.0, dt = 0.0, t_end = 100.0, band = 0.02, beta = 2.0;
  std::string gain_text, pole_text, history_text = "const:1", gain_grid_text;
  bool no_decompose = false;
  std::optional<int> k_wanted;

  auto* c_decompose = app.add_subcommand("decompose", "split via a common invariant subspace");
  add_common(c_decompose, o);
  int k_flag = 0;
  c_decompose->add_option("--k", k_flag, "requested subspace dimension (0 = smallest found)");

  auto* c_crossings = app.add_subcommand("crossings", "imaginary-axis crossings of the "
                                                      "characteristic function");
  add_common(c_crossings, o);
  c_crossings->add_option("--tau-max", o.tau_max, "delay horizon for the listed delays");
  c_crossings->add_option("--omega-max", o.omega_max, "frequency sweep ceiling (0 = auto)");
  c_crossings->add_option("--grid", o.grid, "frequency grid points");

  auto* c_stability = app.add_subcommand("stability", "delay-dependent unstable-pole map NU(tau)");
  add_common(c_stability, o);
  c_stability->add_option("--tau-max", o.tau_max, "delay horizon");
  c_stability->add_option("--omega-max", o.omega_max, "frequency sweep ceiling (0 = auto)");
  c_stability->add_option("--grid", o.grid, "frequency grid points");
  c_stability->add_option("--nodes", o.nodes, "collocation nodes for NU(0) with fixed delays");
  c_stability->add_flag("--no-decompose", no_decompose, "fail on degenerate crossings instead of "
                                                        "decomposing");

  auto* c_design_s = app.add_subcommand("design-stabilize", "certify stabilizing delay intervals "
                                                            "for Pyragas feedback gains");
  add_common(c_design_s, o);
  c_design_s->add_option("--tau-max", o.tau_max, "delay horizon");
  c_design_s->add_option("--gain", gain_text, "gain row k1,k2,...");
  c_design_s->add_option("--gain-grid", gain_grid_text,
                         "grid search lo:hi:n[,lo:hi:n...], one range per gain entry");
  c_design_s->add_option("--beta", beta, "frequency bound for the low-frequency gain screen");
  c_design_s->add_option("--nodes", o.nodes, "collocation nodes for NU(0)");

  auto* c_design_p = app.add_subcommand("design-place", "place a conjugate pole pair");
  add_common(c_design_p, o);
  c_design_p->add_option("--tau", tau, "feedback delay")->required();
  c_design_p->add_option("--pole", pole_text, "target pole a+bj with b != 0")->required();

  auto* c_simulate = app.add_subcommand("simulate", "integrate the system response");
  add_common(c_simulate, o);
  c_simulate->add_option("--tau", tau, "value bound to the variable delay");
  c_simulate->add_option("--dt", dt, "step size (default: min positive delay / 50)");
  c_simulate->add_option("--t-end", t_end, "horizon");
  c_simulate->add_option("--history", history_text, "initial function, const:v or const:v1,v2,...");
  c_simulate->add_option("--gain", gain_text, "close the plant loop with this gain row");
  c_simulate->add_option("--band", band, "settling band reported with the trajectory");

  auto* c_roots = app.add_subcommand("roots", "rightmost characteristic roots");
  add_common(c_roots, o);
  c_roots->add_option("--tau", tau, "value bound to the variable delay");
  c_roots->add_option("--nodes", o.nodes, "Chebyshev collocation nodes");

  auto* c_check = app.add_subcommand("check-controllable", "Kalman rank test on (A0 + A1, B)");
  add_common(c_check, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    const tds::SystemFile file = tds::load_system(o.file);
    const tds::ToleranceConfig cfg = tolerances(o);
    tds::Report report;
    report.config = base_config(o);
    report.config["file"] = o.file;

    if (*c_decompose) {
      report.command = "decompose";
      const auto& sys = need_system(file);
      if (k_flag > 0) report.config["k"] = k_flag;
      const auto subspaces = tds::find_common_invariant_subspaces(
          sys.terms[0].A, sys.terms[1].A, cfg,
          k_flag > 0 ? std::optional<int>(k_flag) : std::nullopt);
      if (subspaces.empty()) {
        throw tds::NoDecomposition("no common invariant subspace found" +
                                   std::string(k_flag > 0 ? " with the requested dimension" : ""));
      }
      const auto dec = tds::block_triangularize({sys.terms[0].A, sys.terms[1].A},
                                                subspaces.front(), cfg);
      Json r;
      r["k"] = dec.k;
      r["dims"] = Json::array({dec.k, sys.dim() - dec.k});
      r["Q"] = tds::matrix_to_json(dec.Q);
      r["Qinv"] = tds::matrix_to_json(dec.Q_inv);
      Json blocks = Json::array();
      for (const auto& b : dec.blocks) {
        blocks.push_back(Json{{"top_left", tds::matrix_to_json(b.top_left)},
                              {"coupling", tds::matrix_to_json(b.coupling)},
                              {"bottom_right", tds::matrix_to_json(b.bottom_right)}});
      }
      r["blocks"] = std::move(blocks);
      r["residual"] = dec.residual;
      report.result = std::move(r);
    } else if (*c_crossings) {
      report.command = "crossings";
      const auto& sys = need_system(file);
      const auto F = tds::char_function(sys);
      const double wmax = o.omega_max > 0.0 ? o.omega_max : tds::default_omega_max(sys);
      report.config["tau_max"] = o.tau_max;
      report.config["omega_max"] = wmax;
      report.config["grid"] = o.grid;
      const auto crossings = tds::crossing_sweep(F, wmax, o.grid);
      Json arr = Json::array();
      for (const auto& c : crossings) arr.push_back(crossing_to_json(c, o.tau_max));
      report.result = Json{{"crossings", std::move(arr)}};
      report.csv_header = {"omega", "theta", "tau_0", "tau_1", "tendency"};
      for (const auto& c : crossings) {
        const auto delays = c.delays(o.tau_max);
        report.csv_rows.push_back({tds::format_double(c.omega), tds::format_double(c.theta),
                                   delays.size() > 0 ? tds::format_double(delays[0]) : "",
                                   delays.size() > 1 ? tds::format_double(delays[1]) : "",
                                   std::to_string(c.tendency)});
      }
    } else if (*c_stability) {
      report.command = "stability";
      const auto& sys = need_system(file);
      report.config["tau_max"] = o.tau_max;
      report.config["omega_max"] = o.omega_max;
      report.config["grid"] = o.grid;
      report.config["nodes"] = o.nodes;
      report.config["auto_decompose"] = !no_decompose;
      const auto analysis = tds::analyze_stability(sys, o.tau_max, cfg, !no_decompose,
                                                   o.omega_max, o.grid, o.nodes);
      report.warnings = analysis.warnings;
      Json r;
      r["decomposed"] = analysis.decomposed;
      Json dims = Json::array();
      for (const auto& b : analysis.blocks) dims.push_back(b.system.dim());
      r["block_dims"] = std::move(dims);
      if (analysis.decomposition) r["decomposition_residual"] = analysis.decomposition->residual;
      Json blocks = Json::array();
      for (const auto& b : analysis.blocks) {
        Json bj;
        bj["dim"] = b.system.dim();
        Json arr = Json::array();
        for (const auto& c : b.crossings) arr.push_back(crossing_to_json(c, o.tau_max));
        bj["crossings"] = std::move(arr);
        bj["map"] = map_to_json(b.map);
        blocks.push_back(std::move(bj));
      }
      r["blocks"] = std::move(blocks);
      r["combined"] = map_to_json(analysis.combined);
      report.result = std::move(r);
      report.csv_header = {"tau_lo", "tau_hi", "NU"};
      for (const auto& iv : analysis.combined.intervals) {
        report.csv_rows.push_back({tds::format_double(iv.lo), tds::format_double(iv.hi),
                                   std::to_string(iv.nu)});
      }
    } else if (*c_design_s) {
      report.command = "design-stabilize";
      const auto& plant = need_plant(file);
      report.config["tau_max"] = o.tau_max;
      report.config["nodes"] = o.nodes;
      report.config["beta"] = beta;
      if (!gain_grid_text.empty()) {
        report.config["gain_grid"] = gain_grid_text;
        // ranges lo:hi:n per gain entry
        std::vector<std::array<double, 3>> ranges;
        size_t pos = 0;
        while (pos <= gain_grid_text.size()) {
          const size_t comma = gain_grid_text.find(',', pos);
          const std::string tok =
              gain_grid_text.substr(pos, comma == std::string::npos ? comma : comma - pos);
          double lo, hi;
          int cnt;
          if (std::sscanf(tok.c_str(), "%lf:%lf:%d", &lo, &hi, &cnt) != 3 || cnt < 1) {
            throw tds::ValidationError("--gain-grid: cannot parse range '" + tok + "'");
          }
          ranges.push_back({lo, hi, static_cast<double>(cnt)});
          if (comma == std::string::npos) break;
          pos = comma + 1;
        }
        if (static_cast<int>(ranges.size()) != plant.dim()) {
          throw tds::ValidationError("--gain-grid: need one range per gain entry");
        }
        std::vector<tds::RowVector> gains;
        std::vector<int> idx(ranges.size(), 0);
        while (true) {
          tds::RowVector K(plant.dim());
          for (size_t i = 0; i < ranges.size(); ++i) {
            const int cnt = static_cast<int>(ranges[i][2]);
            K(i) = cnt == 1 ? ranges[i][0]
                            : ranges[i][0] + (ranges[i][1] - ranges[i][0]) * idx[i] / (cnt - 1);
          }
          gains.push_back(K);
          size_t p = 0;
          while (p < idx.size() && ++idx[p] >= static_cast<int>(ranges[p][2])) idx[p++] = 0;
          if (p == idx.size()) break;
        }
        const auto designs = tds::gain_search(plant, gains, o.tau_max, beta, cfg, o.nodes);
        Json arr = Json::array();
        for (const auto& d : designs) arr.push_back(design_to_json(d));
        report.result = Json{{"designs", std::move(arr)}};
      } else {
        if (gain_text.empty()) {
          throw tds::ValidationError("design-stabilize needs --gain or --gain-grid");
        }
        const auto kv = parse_csv_doubles(gain_text, "--gain");
        if (static_cast<int>(kv.size()) != plant.dim()) {
          throw tds::ValidationError("--gain: expected " + std::to_string(plant.dim()) +
                                     " entries");
        }
        report.config["gain"] = kv;
        tds::RowVector K(kv.size());
        for (size_t i = 0; i < kv.size(); ++i) K(i) = kv[i];
        const auto design = tds::stabilizing_intervals(plant, K, o.tau_max, cfg,
                                                       tds::TendencyPolicy::kAnalytic, o.nodes);
        report.result = design_to_json(design);
      }
    } else if (*c_design_p) {
      report.command = "design-place";
      const auto& plant = need_plant(file);
      const tds::Complex pole = parse_pole(pole_text);
      report.config["tau"] = tau;
      report.config["pole"] = Json::array({pole.real(), pole.imag()});
      const tds::RowVector K = tds::place_pole_pair(plant, tau, pole, cfg);
      tds::GainDesign d;
      d.K = K;
      d.tau = tau;
      d.placed_poles = {pole, std::conj(pole)};
      Json r = design_to_json(d);
      const auto F = tds::closed_loop_char(plant, K);
      r["residual"] = std::abs(F.evaluate(pole, tau));
      r["residual_scale"] = F.scale(pole, tau);
      report.result = std::move(r);
    } else if (*c_simulate) {
      report.command = "simulate";
      tds::TimeDelaySystem sys;
      if (!gain_text.empty()) {
        const auto& plant = need_plant(file);
        const auto kv = parse_csv_doubles(gain_text, "--gain");
        if (static_cast<int>(kv.size()) != plant.dim()) {
          throw tds::ValidationError("--gain: expected " + std::to_string(plant.dim()) +
                                     " entries");
        }
        report.config["gain"] = kv;
        tds::RowVector K(kv.size());
        for (size_t i = 0; i < kv.size(); ++i) K(i) = kv[i];
        sys = plant.closed_loop(K);
      } else {
        sys = need_system(file);
      }
      const int n = sys.dim();
      if (history_text.rfind("const:", 0) != 0) {
        throw tds::ValidationError("--history: only const:<v> histories are supported");
      }
      const auto hv = parse_csv_doubles(history_text.substr(6), "--history");
      tds::Vector h0(n);
      if (hv.size() == 1) {
        h0.setConstant(hv[0]);
      } else if (static_cast<int>(hv.size()) == n) {
        for (int i = 0; i < n; ++i) h0(i) = hv[i];
      } else {
        throw tds::ValidationError("--history: expected 1 or " + std::to_string(n) + " values");
      }
      double step = dt;
      if (step <= 0.0) {
        const double md = sys.min_positive_delay(tau);
        step = std::isfinite(md) ? md / 50.0 : t_end / 5000.0;
      }
      report.config["tau"] = tau;
      report.config["dt"] = step;
      report.config["t_end"] = t_end;
      report.config["history"] = history_text;
      report.config["band"] = band;
      const auto traj = tds::integrate(sys, tau, tds::HistoryFunction::constant(h0), t_end, step);
      const auto settle = tds::settling_time(traj, band);
      Json r;
      r["settling_time"] = settle ? Json(*settle) : Json();
      r["t"] = traj.times;
      Json xs = Json::array();
      for (const auto& x : traj.states) {
        Json row = Json::array();
        for (int i = 0; i < x.size(); ++i) row.push_back(x(i));
        xs.push_back(std::move(row));
      }
      r["x"] = std::move(xs);
      report.result = std::move(r);
      report.csv_header = {"t"};
      for (int i = 1; i <= n; ++i) report.csv_header.push_back("x" + std::to_string(i));
      for (size_t k = 0; k < traj.times.size(); ++k) {
        std::vector<std::string> row{tds::format_double(traj.times[k])};
        for (int i = 0; i < n; ++i) row.push_back(tds::format_double(traj.states[k](i)));
        report.csv_rows.push_back(std::move(row));
      }
    } else if (*c_roots) {
      report.command = "roots";
      tds::TimeDelaySystem sys = file.system ? *file.system : need_plant(file).open_loop();
      report.config["tau"] = tau;
      report.config["nodes"] = o.nodes;
      int dropped = 0;
      const auto roots = tds::rightmost_roots(sys, tau, o.nodes, &dropped);
      if (dropped > 0) {
        report.warnings.push_back(std::to_string(dropped) +
                                  " collocation eigenvalues failed Newton refinement");
      }
      Json arr = Json::array();
      int unstable = 0;
      for (const auto& s : roots) {
        arr.push_back(Json::array({s.real(), s.imag()}));
        if (s.real() > 1e-9) ++unstable;
      }
      report.result = Json{{"roots", std::move(arr)}, {"unstable_count", unstable}};
      report.csv_header = {"re", "im"};
      for (const auto& s : roots) {
        report.csv_rows.push_back({tds::format_double(s.real()), tds::format_double(s.imag())});
      }
    } else if (*c_check) {
      report.command = "check-controllable";
      const auto& plant = need_plant(file);
      const bool ok = tds::is_controllable(plant.A0, plant.A1, plant.B, cfg);
      report.result = Json{{"controllable", ok}};
    }

    tds::emit(report, o.format, o.out);
    return kExitOk;
  } catch (const tds::ParseError& e) {
    std::fprintf(stderr, "error (parse): %s\n", e.what());
    return kExitParse;
  } catch (const tds::SchemaError& e) {
    std::fprintf(stderr, "error (schema): %s\n", e.what());
    return kExitSchema;
  } catch (const tds::ValidationError& e) {
    std::fprintf(stderr, "error (validation): %s\n", e.what());
    return kExitValidation;
  } catch (const tds::DegenerateCrossing& e) {
    std::fprintf(stderr, "error (degenerate): %s\n", e.what());
    return kExitDegenerate;
  } catch (const tds::NoDecomposition& e) {
    std::fprintf(stderr, "error (degenerate): %s\n", e.what());
    return kExitDegenerate;
  } catch (const tds::SingularPlacement& e) {
    std::fprintf(stderr, "error (numerical): %s\n", e.what());
    return kExitNumerical;
  } catch (const tds::NumericalError& e) {
    std::fprintf(stderr, "error (numerical): %s\n", e.what());
    return kExitNumerical;
  } catch (const tds::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
