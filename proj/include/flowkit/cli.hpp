#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowkit/config.hpp"
#include "flowkit/experiments.hpp"
#include "flowkit/report.hpp"

namespace flowkit::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numerical = 3;

inline constexpr const char* default_output_dir = "flowkit_out";

/// Flag values as typed; empty means "not given".
struct Overrides {
  std::string config;
  std::string system;
  std::vector<std::string> seeds;
  std::string sampler;
  std::string rng_seed;
  std::string h;
  std::string horizons;
  std::vector<std::string> observables;
  std::vector<std::string> invariants;
  std::string out;
  std::vector<std::string> extras;  // --<param> <value> pairs
};

namespace detail {

// Strip "seconds" entries so reports compare byte for byte; they go to a
// side file instead.
inline void take_timings(Json& j, const std::string& prefix, std::vector<std::pair<std::string, double>>& out) {
  if (!j.is_object()) return;
  if (j.contains("seconds")) {
    out.emplace_back(prefix.empty() ? "total" : prefix, j["seconds"].get<double>());
    j.erase("seconds");
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    take_timings(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
}

inline void write_timings(const std::filesystem::path& dir, const std::vector<std::pair<std::string, double>>& t) {
  std::ofstream os(dir / "timing.csv");
  os << "part,seconds\n";
  for (const auto& [k, v] : t) os << k << "," << v << "\n";
}

inline std::vector<std::pair<std::string, std::string>> param_pairs(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    require(a.rfind("--", 0) == 0 && a.size() > 2, ErrorCode::config_error, "unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      require(i + 1 < extras.size(), ErrorCode::config_error, "option " + a + " needs a value");
      out.emplace_back(a.substr(2), extras[++i]);
    }
  }
  return out;
}

inline ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_ini_file(o.config);
  if (!o.system.empty()) cfg.set("system", "name", o.system);
  for (const auto& [k, v] : param_pairs(o.extras)) cfg.set("system", k, v);
  if (!o.seeds.empty()) {
    std::string joined;
    for (const auto& s : o.seeds) joined += (joined.empty() ? "" : ";") + s;
    cfg.set("seeds", "points", joined);
  }
  if (!o.sampler.empty()) cfg.set("seeds", "sampler", o.sampler);
  if (!o.rng_seed.empty()) cfg.set("seeds", "rng_seed", o.rng_seed);
  if (!o.h.empty()) cfg.set("grid", "h", o.h);
  if (!o.horizons.empty()) cfg.set("horizons", "schedule", o.horizons);
  if (!o.observables.empty()) cfg.observables = o.observables;
  if (!o.invariants.empty()) cfg.invariants = o.invariants;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  // Probes are seeded even without a sampler; record the seed they used.
  if (!cfg.rng_seed) cfg.rng_seed = 1;
  return cfg;
}

inline std::filesystem::path output_base(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("FLOWKIT_OUT"); env && *env) return env;
  return default_output_dir;
}

inline Json closure_json(const ClosureCloud& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["period"] = c.period ? Json(*c.period) : Json(nullptr);
  j["converged"] = c.converged;
  j["horizon"] = c.horizon;
  j["cells"] = c.grid.occupied_count();
  j["cell_counts"] = c.cell_counts;
  return j;
}

inline std::vector<Point> require_seeds(const ExperimentConfig& cfg, const FlowSystem& s) {
  auto seeds = cfg.seeds(s);
  require(!seeds.empty(), ErrorCode::config_error, "no seeds: give --seed, --seeds or [seeds]");
  return seeds;
}

inline std::uint64_t rng_of(const ExperimentConfig& cfg) { return cfg.rng_seed.value_or(1); }

inline ClassifyConfig classify_config(const ExperimentConfig& cfg) {
  ClassifyConfig c;
  c.grid_h = cfg.grid_h;
  c.schedule = cfg.schedule;
  c.burn_in = cfg.burn_in;
  c.eps_grid = cfg.eps_grid;
  c.probes = cfg.probes;
  c.tail = {cfg.tail_t0, cfg.tail_t1};
  c.rng_seed = rng_of(cfg);
  c.dt = cfg.sample_step;
  c.t_step = cfg.t_step;
  c.closure.saturation = cfg.saturation;
  return c;
}

inline ClosureOptions closure_options(const ExperimentConfig& cfg) {
  ClosureOptions o;
  o.saturation = cfg.saturation;
  return o;
}

// ---- subcommands ----

inline void cmd_classify(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  const auto cc = classify_config(cfg);
  Json rows = Json::array();
  const auto seeds = require_seeds(cfg, sys);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto c = classify_state(sys, seeds[i], cc);
    const auto ms = max_sensitivity_probe(c.closure, c.scan);
    Json row;
    row["seed"] = seeds[i];
    row["kind"] = to_string(c.kind);
    row["period"] = c.period ? Json(*c.period) : Json(nullptr);
    row["delta_hat"] = c.score();
    row["coherent"] = c.coherent();
    row["scc_count"] = c.coherence ? Json(c.coherence->scc_count) : Json(nullptr);
    row["tension"] = c.tension;
    row["max_sensitivity_ratio"] = ms.ratio;
    row["closure"] = closure_json(c.closure);
    rows.push_back(row);
    r.write_cloud("closure_" + std::to_string(i), c.closure.cloud);
    std::vector<std::vector<double>> w;
    for (const auto& x : c.scan.witnesses) w.push_back({x.eps, x.separation, x.time, x.qualified ? 1.0 : 0.0});
    r.write_series("witnesses_" + std::to_string(i), {"eps", "late_separation", "time", "qualified"}, w);
    if (c.tension)
      r.flag("trichotomy-tension", "seed " + std::to_string(i) + ": non-trivial closure without measured sensitivity");
  }
  r.results()["states"] = rows;
}

inline void cmd_partition(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  const auto seeds = require_seeds(cfg, sys);
  const auto p = build_natural_partition(sys, seeds, cfg.grid_h, cfg.schedule, cfg.equivalence_cells,
                                         closure_options(cfg));
  r.results()["representatives"] = p.representatives.size();
  r.results()["assignment"] = p.assignment;
  r.results()["assignment_distance"] = p.assignment_distance;
  Json reps = Json::array();
  for (std::size_t k = 0; k < p.representatives.size(); ++k) {
    Json j = closure_json(p.representatives[k]);
    j["seed_index"] = p.representative_seed[k];
    reps.push_back(j);
    r.write_cloud("representative_" + std::to_string(k), p.representatives[k].cloud);
  }
  r.results()["classes"] = reps;
}

inline void cmd_averages(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  require(!cfg.observables.empty(), ErrorCode::config_error, "averages needs at least one observable");
  std::vector<Observable> obs;
  for (const auto& o : cfg.observables) obs.push_back(observables::parse(o, sys));
  const auto seeds = require_seeds(cfg, sys);
  Json rows = Json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    Json row;
    row["seed"] = seeds[i];
    Json means = Json::array();
    for (std::size_t k = 0; k < obs.size(); ++k) {
      BirkhoffOptions bo;
      bo.dt = cfg.sample_step;
      const auto t = time_vs_space_report(sys, seeds[i], obs[k], cfg.grid_h, cfg.schedule, cfg.average_tol, bo);
      means.push_back({{"observable", t.observable},
                       {"time_plain", t.time_plain},
                       {"time_speed_normalized", t.time_speed_normalized},
                       {"space", t.space},
                       {"gap_plain", t.gap_plain},
                       {"gap_speed", t.gap_speed},
                       {"converged", t.converged},
                       {"fixed_point", t.fixed_point},
                       {"closure_cells", t.closure_cells}});
      if (!t.fixed_point) {
        const auto b = birkhoff_average(sys, seeds[i], obs[k], Weight::plain, cfg.schedule, cfg.average_tol, bo);
        std::vector<std::vector<double>> s;
        for (std::size_t j = 0; j < b.raw.horizons.size(); ++j) s.push_back({b.raw.horizons[j], b.raw.partials[j][0]});
        r.write_series("partials_" + std::to_string(i) + "_" + std::to_string(k), {"T", "time_mean"}, s);
      }
    }
    row["observables"] = means;
    const auto omega = kinecentric_field(sys, seeds[i], cfg.schedule, cfg.average_tol, cfg.sample_step);
    row["kinecentric"] = {{"value", omega.value}, {"cauchy_gap", omega.cauchy_gap}, {"converged", omega.converged}};
    rows.push_back(row);
  }
  r.results()["states"] = rows;
}

inline void cmd_invariants(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  require(!cfg.invariants.empty(), ErrorCode::config_error, "invariants needs at least one invariant");
  std::vector<Observable> inv;
  Json certs = Json::array();
  for (const auto& s : cfg.invariants) {
    inv.push_back(observables::parse(s, sys));
    const auto c = certify_invariant(sys, inv.back(), 1000, cfg.certify_tol, rng_of(cfg));
    certs.push_back({{"invariant", s},
                     {"verdict", c.verdict},
                     {"max_residual", c.max_residual},
                     {"residual_within_residual_tol", c.max_residual < cfg.residual_tol},
                     {"constancy_gap", c.constancy_gap},
                     {"points", c.points},
                     {"orbits", c.orbits}});
    if (!c.verdict) r.flag("not-invariant", s + " failed certification; its level sets are still intersected");
  }
  r.results()["certificates"] = certs;
  const auto seeds = require_seeds(cfg, sys);
  Json rows = Json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto manifold = minimal_invariant_manifold(inv, seeds[i], OccupancyGrid(sys.space(), cfg.grid_h));
    const auto closure = approximate_closure(sys, seeds[i], cfg.grid_h, cfg.schedule, closure_options(cfg));
    const auto cmp = compare_manifold_to_zimmer(manifold, closure);
    rows.push_back({{"seed", seeds[i]},
                    {"manifold_cells", cmp.manifold_cells},
                    {"closure_cells", cmp.closure_cells},
                    {"subset_gap", cmp.subset_gap},
                    {"hausdorff_gap", cmp.hausdorff_gap},
                    {"closure", closure_json(closure)}});
    r.write_cloud("manifold_" + std::to_string(i), manifold.centers());
    r.write_cloud("closure_" + std::to_string(i), closure.cloud);
  }
  r.results()["states"] = rows;
}

inline void cmd_regularity(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  const auto seeds = require_seeds(cfg, sys);
  RegularityOptions o;
  o.pair_budget = cfg.pair_budget;
  o.probes = cfg.regularity_probes;
  o.immanence_eps = cfg.immanence_eps;
  o.horizon = cfg.regularity_horizon;
  o.deltas = cfg.deltas;
  o.comanence_times = {cfg.comanence_time};
  o.laplace_horizon = cfg.laplace_horizon;
  o.rng_seed = rng_of(cfg);
  o.dt = cfg.sample_step;
  const auto rep = regularity_report(sys, seeds, o);
  auto& res = r.results();
  res["kappa_hat"] = rep.kappa_hat;
  res["pair_budget"] = rep.pair_budget;
  res["probe_count"] = rep.probe_count;
  std::vector<std::vector<double>> t;
  Json imm = Json::array();
  for (const auto& e : rep.immanence_table) imm.push_back({{"x", e.x}, {"eps", e.eps}, {"a_hat", e.value}});
  res["immanence_table"] = imm;
  Json glob = Json::array();
  for (const auto& [eps, a] : rep.global_immanence) {
    glob.push_back({{"eps", eps}, {"A_hat", a}});
    t.push_back({eps, a});
  }
  res["global_immanence"] = glob;
  r.write_series("global_immanence", {"eps", "A_hat"}, t);
  t.clear();
  Json com = Json::array();
  for (const auto& e : rep.comanence_table) {
    com.push_back({{"delta", e.delta}, {"t", e.t}, {"b_hat", e.value}});
    t.push_back({e.delta, e.t, e.value});
  }
  res["comanence_table"] = com;
  r.write_series("comanence", {"delta", "t", "b_hat"}, t);
  t.clear();
  Json beg = Json::array();
  for (const auto& b : rep.begleit_table) {
    beg.push_back({{"delta", b.delta}, {"A_hat_delta_over_3", b.immanence}, {"B_hat", b.value}});
    t.push_back({b.delta, b.immanence, b.value});
  }
  res["begleit_table"] = beg;
  r.write_series("begleit", {"delta", "A_hat_delta_over_3", "B_hat"}, t);
  Json lap = Json::array();
  for (const auto& v : rep.laplace) {
    Json w = Json::array();
    for (const auto& x : v.witnesses)
      w.push_back({{"delta", x.delta},
                   {"epsilon", x.epsilon},
                   {"failure_time", x.failure_time},
                   {"failure_separation", x.failure_separation}});
    lap.push_back({{"z", v.z}, {"continuous", v.continuous}, {"witnesses", w}});
  }
  res["laplace"] = lap;
  Json sens = Json::array();
  for (const auto& x : seeds) {
    const auto scan = resolution_field(sys, x, cfg.eps_grid, cfg.probes, {cfg.tail_t0, cfg.tail_t1}, rng_of(cfg),
                                       cfg.sample_step);
    sens.push_back({{"x", x}, {"delta_hat", scan.delta_hat}});
  }
  res["sensitivity"] = sens;
}

inline void cmd_sensitivity(const ExperimentConfig& cfg, Report& r) {
  const auto sys = cfg.make_system();
  const auto seeds = require_seeds(cfg, sys);
  Json rows = Json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto scan = resolution_field(sys, seeds[i], cfg.eps_grid, cfg.probes, {cfg.tail_t0, cfg.tail_t1},
                                       rng_of(cfg), cfg.sample_step);
    Json w = Json::array();
    std::vector<std::vector<double>> t;
    for (const auto& x : scan.witnesses) {
      w.push_back({{"eps", x.eps},
                   {"probe", x.probe},
                   {"separation", x.separation},
                   {"time", x.time},
                   {"qualified", x.qualified}});
      t.push_back({x.eps, x.separation, x.time});
    }
    rows.push_back({{"seed", seeds[i]}, {"delta_hat", scan.delta_hat}, {"sentinel", scan.sentinel()}, {"witnesses", w}});
    r.write_series("witnesses_" + std::to_string(i), {"eps", "late_separation", "time"}, t);
  }
  r.results()["states"] = rows;
}

}  // namespace detail

int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

/// 12. Two reproduce runs of the same criteria give byte-identical files.
inline bool determinism(Json& d, Report* report) {
  namespace fs = std::filesystem;
  const fs::path base = (report ? report->dir() : fs::temp_directory_path() / "flowkit_determinism") / "runs";
  fs::remove_all(base);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  bool ok = true;
  Json rows = Json::array();
  for (const std::string id : {"4", "5", "8"}) {
    std::ostringstream sink;
    const fs::path a = base / ("a_" + id), b = base / ("b_" + id);
    const int ca = run_command({"reproduce", id, "--out", a.string()}, sink, sink);
    const int cb = run_command({"reproduce", id, "--out", b.string()}, sink, sink);
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (!e.is_regular_file() || e.path().filename() == "timing.csv") continue;
      ++files;
      const fs::path other = b / fs::relative(e.path(), a);
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
    const bool pass = ca == exit_ok && cb == exit_ok && files > 0 && differing == 0;
    rows.push_back({{"criterion", id}, {"files_compared", files}, {"differing", differing}, {"pass", pass}});
    ok = ok && pass;
  }
  d["runs"] = rows;
  return ok;
}

inline std::vector<experiments::Criterion> all_criteria() {
  auto c = experiments::numeric_criteria();
  c.push_back({12, "determinism", "reproduce twice, byte-identical output", determinism});
  return c;
}

inline std::optional<experiments::Criterion> find_criterion(const std::string& id) {
  for (auto& c : all_criteria())
    if (std::to_string(c.id) == id || c.key == id) return c;
  return std::nullopt;
}

namespace detail {

inline int reproduce(const std::string& id, const std::string& out_dir, std::ostream& out) {
  const auto c = find_criterion(id);
  if (!c) {
    std::string keys;
    for (const auto& k : all_criteria()) keys += (keys.empty() ? "" : ", ") + std::to_string(k.id) + "/" + k.key;
    throw Error(ErrorCode::config_error, "unknown criterion '" + id + "'; known: " + keys);
  }
  Report r("reproduce", output_base(out_dir) / c->key);
  r.set_config({{"criterion", {{"id", c->id}, {"key", c->key}, {"title", c->title}}}});
  Json details = Json::object();
  experiments::detail::Stopwatch sw;
  bool pass = false;
  try {
    pass = c->run(details, &r);
  } catch (...) {
    r.results() = details;
    r.set_status("error");
    r.mark_partial();
    r.write();
    throw;
  }
  std::vector<std::pair<std::string, double>> timings;
  take_timings(details, "", timings);
  timings.emplace_back("wall", sw.seconds());
  write_timings(r.dir(), timings);
  r.results() = details;
  r.results()["pass"] = pass;
  r.set_status(pass ? "pass" : "fail");
  const auto path = r.write();
  out << c->id << " " << c->key << " " << (pass ? "PASS" : "FAIL") << " " << path.string() << "\n";
  return pass ? exit_ok : exit_numerical;
}

using Command = void (*)(const ExperimentConfig&, Report&);

inline int run_experiment(const std::string& name, Command cmd, const Overrides& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve(o);
  Report r(name, output_base(cfg.output_dir) / name);
  r.set_config(cfg.to_json());
  try {
    cmd(cfg, r);
  } catch (const Error& e) {
    r.set_status("error");
    r.results()["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    r.mark_partial();
    r.write();
    throw;
  }
  const auto path = r.write();
  out << path.string() << "\n";
  return exit_ok;
}

}  // namespace detail

/// Parses and runs one subcommand; args exclude the program name.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowkit: orbit closures, invariants, averages and sensitivity of flows", "flowkit"};
  app.set_help_flag("--help", "print this help");
  app.set_version_flag("--version", FLOWKIT_VERSION);
  app.require_subcommand(1);
  Overrides o;
  std::string criterion;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI config file");
    sub->add_option("--system", o.system, "registered system name");
    sub->add_option("--seed", o.seeds, "seed point as comma list, repeatable")->expected(1);
    sub->add_option("--seeds", o.sampler, "seed sampler, random:N");
    sub->add_option("--rng-seed", o.rng_seed, "sampler and probe RNG seed");
    sub->add_option("--h", o.h, "grid cell width");
    sub->add_option("--horizons", o.horizons, "horizon schedule, comma list");
    sub->add_option("--observable", o.observables, "observable, repeatable")->expected(1);
    sub->add_option("--invariant", o.invariants, "invariant, repeatable")->expected(1);
    sub->add_option("--out", o.out, "output directory (default $FLOWKIT_OUT or ./flowkit_out)");
    sub->allow_extras();
    sub->footer("Other --name value pairs set system parameters, e.g. --alpha 0.618 for torus_flow.");
  };

  struct Entry {
    const char* name;
    const char* help;
    detail::Command cmd;
  };
  const Entry entries[] = {
      {"classify", "fixed point / cycle / sensitive attractor per seed", detail::cmd_classify},
      {"partition", "natural partition of the seeds into closures", detail::cmd_partition},
      {"averages", "time and space means, kinecentric field", detail::cmd_averages},
      {"invariants", "certify invariants, build and compare the manifold", detail::cmd_invariants},
      {"regularity", "flow exponent, immanence, comanence, Begleit and Laplace tables", detail::cmd_regularity},
      {"sensitivity", "resolution field scans", detail::cmd_sensitivity},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    subs.push_back(app.add_subcommand(e.name, e.help));
    add_common(subs.back());
  }
  auto* rep = app.add_subcommand("reproduce", "run one acceptance experiment end to end");
  rep->add_option("criterion", criterion, "criterion number or key")->required();
  rep->add_option("--out", o.out, "output directory (default $FLOWKIT_OUT or ./flowkit_out)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << FLOWKIT_VERSION << "\n";
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "flowkit: " << e.what() << "\n";
    return exit_config;
  }

  try {
    if (rep->parsed()) return detail::reproduce(criterion, o.out, out);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      o.extras = subs[i]->remaining();
      return detail::run_experiment(entries[i].name, entries[i].cmd, o, out);
    }
  } catch (const Error& e) {
    err << "flowkit: " << e.what() << "\n";
    return e.is_config_error() ? exit_config : exit_numerical;
  } catch (const std::exception& e) {
    err << "flowkit: " << e.what() << "\n";
    return exit_numerical;
  }
  return exit_config;
}

}  // namespace flowkit::cli
