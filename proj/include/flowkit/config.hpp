#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowkit/errors.hpp"
#include "flowkit/systems.hpp"

namespace flowkit {

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

// Splits on sep outside parentheses, so "bump(0.5,0.5;0.25)" stays whole.
inline std::vector<std::string> split_outside_parens(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(item));
      item.clear();
    } else {
      item += c;
    }
  }
  out.push_back(trim(item));
  return out;
}

inline double number(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  require(!t.empty() && end == t.c_str() + t.size() && std::isfinite(v), ErrorCode::config_error,
          where + ": '" + text + "' is not a finite number");
  return v;
}

inline std::uint64_t integer(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(!t.empty() && ec == std::errc{} && p == t.data() + t.size(), ErrorCode::config_error,
          where + ": '" + text + "' is not a nonnegative integer");
  return v;
}

inline std::vector<double> numbers(const std::string& where, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(number(where, item));
  require(!out.empty(), ErrorCode::config_error, where + ": empty list");
  return out;
}

}  // namespace config_detail

/// Everything a subcommand needs. Defaults apply to keys the file omits.
struct ExperimentConfig {
  std::string system = "harmonic_oscillator";
  systems::Params params;

  std::vector<Point> seed_points;
  std::string sampler;  // "random:N" or empty
  std::optional<std::uint64_t> rng_seed;

  double grid_h = 0.02;
  std::vector<double> schedule{100.0, 200.0, 400.0};

  double equivalence_cells = 2.0;
  double average_tol = 1e-3;
  double residual_tol = 1e-10;
  // Residual and orbit drift together; the drift is bounded by the
  // integrator, so this is looser than residual_tol.
  double certify_tol = 1e-6;

  std::vector<std::string> observables;
  std::vector<std::string> invariants;

  // sensitivity / classify
  std::vector<double> eps_grid{1e-2, 1e-4, 1e-6, 1e-8};
  std::size_t probes = 8;
  double tail_t0 = 20.0, tail_t1 = 60.0;
  double burn_in = 50.0;
  double t_step = 0.0;  // 0: automatic
  double saturation = 0.005;

  // regularity
  std::size_t pair_budget = 200;
  std::size_t regularity_probes = 16;
  double regularity_horizon = 200.0;
  std::vector<double> immanence_eps{0.3, 0.1};
  std::vector<double> deltas{0.3};
  double comanence_time = 1.0;
  double laplace_horizon = 50.0;

  // integrator overrides; 0 keeps the system default
  double rel_tol = 0.0, abs_tol = 0.0, max_step = 0.0;

  double sample_step = 0.01;  // time step of CSV series and averages
  std::string output_dir;

  FlowSystem make_system() const {
    FlowSystem s = systems::make(system, params);
    if (rel_tol > 0) s.integrator.rel_tol = rel_tol;
    if (abs_tol > 0) s.integrator.abs_tol = abs_tol;
    if (max_step > 0) s.integrator.max_step = max_step;
    return s;
  }

  /// Explicit points followed by sampled ones, checked against the system.
  std::vector<Point> seeds(const FlowSystem& s) const {
    std::vector<Point> out;
    for (const auto& p : seed_points) {
      require(p.size() == s.dim(), ErrorCode::config_error,
              "seed has " + std::to_string(p.size()) + " coordinates, system " + s.name() + " has dimension " +
                  std::to_string(s.dim()));
      out.push_back(p);
    }
    if (!sampler.empty()) {
      const auto n = sampled_count();
      std::mt19937_64 rng(*rng_seed);
      for (std::uint64_t i = 0; i < n; ++i) out.push_back(s.sample_point(rng));
    }
    return out;
  }

  std::uint64_t sampled_count() const {
    require(sampler.rfind("random:", 0) == 0, ErrorCode::config_error,
            "seed sampler must look like random:N, got '" + sampler + "'");
    const auto n = config_detail::integer("seeds.sampler", sampler.substr(7));
    require(n > 0, ErrorCode::config_error, "seeds.sampler needs at least one point");
    return n;
  }

  /// Cross-field checks; run after every load or override.
  void validate() const {
    if (!sampler.empty()) {
      sampled_count();
      require(rng_seed.has_value(), ErrorCode::config_error, "seeds.rng_seed is mandatory when a sampler is used");
    }
    require(grid_h > 0, ErrorCode::config_error, "grid.h must be positive");
    for (std::size_t i = 0; i < schedule.size(); ++i)
      require(schedule[i] > 0 && (i == 0 || schedule[i] > schedule[i - 1]), ErrorCode::config_error,
              "horizons.schedule must be positive and increasing");
    for (double t : {equivalence_cells, average_tol, residual_tol, certify_tol})
      require(t > 0, ErrorCode::config_error, "tolerances must be positive");
    for (std::size_t i = 0; i < eps_grid.size(); ++i)
      require(eps_grid[i] > 0 && (i == 0 || eps_grid[i] < eps_grid[i - 1]), ErrorCode::config_error,
              "sensitivity.eps must be positive and decreasing");
    require(probes > 0 && regularity_probes > 0 && pair_budget > 0, ErrorCode::config_error,
            "probe counts must be positive");
    require(0 <= tail_t0 && tail_t0 < tail_t1, ErrorCode::config_error, "sensitivity.tail needs 0 <= T0 < T1");
    require(saturation > 0 && sample_step > 0 && regularity_horizon > 0 && laplace_horizon > 0 && comanence_time > 0,
            ErrorCode::config_error, "saturation, steps and horizons must be positive");
    for (double e : immanence_eps) require(e > 0, ErrorCode::config_error, "regularity.eps must be positive");
    for (double d : deltas) require(d > 0, ErrorCode::config_error, "regularity.deltas must be positive");
    for (double t : {rel_tol, abs_tol, max_step, burn_in, t_step})
      require(t >= 0, ErrorCode::config_error, "integrator settings, burn_in and t_step must be nonnegative");
  }

  /// Sets one key; unknown sections or keys are errors.
  void set(const std::string& section, const std::string& key, const std::string& value) {
    namespace cd = config_detail;
    const std::string where = section + "." + key;
    auto count = [&](const std::string& v) { return static_cast<std::size_t>(cd::integer(where, v)); };
    using Setter = std::function<void(const std::string&)>;
    static const std::set<std::string> sections = {"system",       "seeds",      "grid",       "horizons",
                                                   "tolerances",   "observables", "invariants", "sensitivity",
                                                   "regularity",   "integrator", "output"};
    require(sections.contains(section), ErrorCode::config_error, "unknown section [" + section + "]");
    const std::map<std::string, Setter> table = {
        {"seeds.points",
         [&](const std::string& v) {
           seed_points.clear();
           for (const auto& p : cd::split(v, ';'))
             if (!p.empty()) seed_points.push_back(cd::numbers(where, p));
         }},
        {"seeds.sampler", [&](const std::string& v) { sampler = cd::trim(v); }},
        {"seeds.rng_seed", [&](const std::string& v) { rng_seed = cd::integer(where, v); }},
        {"grid.h", [&](const std::string& v) { grid_h = cd::number(where, v); }},
        {"horizons.schedule", [&](const std::string& v) { schedule = cd::numbers(where, v); }},
        {"tolerances.equivalence_cells", [&](const std::string& v) { equivalence_cells = cd::number(where, v); }},
        {"tolerances.average_tol", [&](const std::string& v) { average_tol = cd::number(where, v); }},
        {"tolerances.residual_tol", [&](const std::string& v) { residual_tol = cd::number(where, v); }},
        {"tolerances.certify_tol", [&](const std::string& v) { certify_tol = cd::number(where, v); }},
        {"observables.list",
         [&](const std::string& v) {
           observables.clear();
           for (const auto& o : cd::split_outside_parens(v, ';'))
             if (!o.empty()) observables.push_back(o);
         }},
        {"invariants.list",
         [&](const std::string& v) {
           invariants.clear();
           for (const auto& o : cd::split_outside_parens(v, ';'))
             if (!o.empty()) invariants.push_back(o);
         }},
        {"sensitivity.eps", [&](const std::string& v) { eps_grid = cd::numbers(where, v); }},
        {"sensitivity.probes", [&](const std::string& v) { probes = count(v); }},
        {"sensitivity.tail",
         [&](const std::string& v) {
           const auto t = cd::numbers(where, v);
           require(t.size() == 2, ErrorCode::config_error, where + " needs two values T0, T1");
           tail_t0 = t[0];
           tail_t1 = t[1];
         }},
        {"sensitivity.burn_in", [&](const std::string& v) { burn_in = cd::number(where, v); }},
        {"sensitivity.t_step", [&](const std::string& v) { t_step = cd::number(where, v); }},
        {"sensitivity.saturation", [&](const std::string& v) { saturation = cd::number(where, v); }},
        {"regularity.pair_budget", [&](const std::string& v) { pair_budget = count(v); }},
        {"regularity.probes", [&](const std::string& v) { regularity_probes = count(v); }},
        {"regularity.horizon", [&](const std::string& v) { regularity_horizon = cd::number(where, v); }},
        {"regularity.eps", [&](const std::string& v) { immanence_eps = cd::numbers(where, v); }},
        {"regularity.deltas", [&](const std::string& v) { deltas = cd::numbers(where, v); }},
        {"regularity.comanence_time", [&](const std::string& v) { comanence_time = cd::number(where, v); }},
        {"regularity.laplace_horizon", [&](const std::string& v) { laplace_horizon = cd::number(where, v); }},
        {"integrator.rel_tol", [&](const std::string& v) { rel_tol = cd::number(where, v); }},
        {"integrator.abs_tol", [&](const std::string& v) { abs_tol = cd::number(where, v); }},
        {"integrator.max_step", [&](const std::string& v) { max_step = cd::number(where, v); }},
        {"integrator.sample_step", [&](const std::string& v) { sample_step = cd::number(where, v); }},
        {"output.directory", [&](const std::string& v) { output_dir = cd::trim(v); }},
    };
    if (section == "system") {
      if (key == "name") {
        system = cd::trim(value);
      } else {
        // System parameters are checked against the registry when the
        // system is built.
        params[key] = cd::number(where, value);
      }
      return;
    }
    auto it = table.find(where);
    require(it != table.end(), ErrorCode::config_error, "unknown key '" + key + "' in [" + section + "]");
    it->second(value);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["system"]["name"] = system;
    auto p = nlohmann::ordered_json::object();
    for (const auto& [k, v] : systems::resolved_params(system, params)) p[k] = v;
    j["system"]["params"] = p;
    j["seeds"]["points"] = seed_points;
    j["seeds"]["sampler"] = sampler;
    j["seeds"]["rng_seed"] = rng_seed ? nlohmann::ordered_json(*rng_seed) : nlohmann::ordered_json(nullptr);
    j["grid"]["h"] = grid_h;
    j["horizons"]["schedule"] = schedule;
    j["tolerances"] = {{"equivalence_cells", equivalence_cells}, {"average_tol", average_tol},
                       {"residual_tol", residual_tol}, {"certify_tol", certify_tol}};
    j["observables"] = observables;
    j["invariants"] = invariants;
    j["sensitivity"] = {{"eps", eps_grid}, {"probes", probes},       {"tail", {tail_t0, tail_t1}},
                        {"burn_in", burn_in}, {"t_step", t_step}, {"saturation", saturation}};
    j["regularity"] = {{"pair_budget", pair_budget},   {"probes", regularity_probes},
                       {"horizon", regularity_horizon}, {"eps", immanence_eps},
                       {"deltas", deltas},             {"comanence_time", comanence_time},
                       {"laplace_horizon", laplace_horizon}};
    j["integrator"] = {{"rel_tol", rel_tol}, {"abs_tol", abs_tol}, {"max_step", max_step},
                       {"sample_step", sample_step}};
    j["output"]["directory"] = output_dir;
    return j;
  }
};

/// Strict INI: [section] headers, key = value lines, '#' or ';' at line start
/// for comments. Duplicate keys are errors.
inline void load_ini(ExperimentConfig& cfg, std::istream& is, const std::string& origin = "config") {
  std::string line, section;
  std::set<std::string> seen;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const std::string t = config_detail::trim(line);
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      require(t.back() == ']' && t.size() > 2, ErrorCode::config_error, where + ": malformed section header");
      section = config_detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorCode::config_error, where + ": expected key = value");
    require(!section.empty(), ErrorCode::config_error, where + ": key outside of any section");
    const std::string key = config_detail::trim(t.substr(0, eq));
    require(!key.empty(), ErrorCode::config_error, where + ": empty key");
    require(seen.insert(section + "." + key).second, ErrorCode::config_error,
            where + ": duplicate key " + section + "." + key);
    try {
      cfg.set(section, key, t.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::config_error, where + ": " + e.what());
    }
  }
}

inline ExperimentConfig load_ini_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::config_error, "cannot open config file " + path);
  ExperimentConfig cfg;
  load_ini(cfg, in, path);
  cfg.validate();
  return cfg;
}

}  // namespace flowkit
