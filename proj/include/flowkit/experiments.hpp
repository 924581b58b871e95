#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "flowkit/ergodic.hpp"
#include "flowkit/invariants.hpp"
#include "flowkit/observables.hpp"
#include "flowkit/regularity.hpp"
#include "flowkit/report.hpp"
#include "flowkit/sensitivity.hpp"
#include "flowkit/systems.hpp"
#include "flowkit/zimmer.hpp"

namespace flowkit::experiments {

inline const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
inline constexpr double pi = std::numbers::pi;

/// One desk-scale acceptance experiment. run() fills details and returns
/// the verdict; report, when given, receives CSV artifacts.
struct Criterion {
  int id = 0;
  std::string key;
  std::string title;
  std::function<bool(Json& details, Report* report)> run;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<double> doubling(double first, double last) {
  std::vector<double> out;
  for (double t = first; t <= last * (1 + 1e-12); t *= 2) out.push_back(t);
  return out;
}

inline Json point_json(std::span<const double> p) { return Json(std::vector<double>(p.begin(), p.end())); }

// Fixed-step RK4 twin integration, independent of the adaptive integrator.
inline double twin_divergence_oracle(const FlowSystem& s, Point x, double eps, double t0, double t1, double dt) {
  const std::size_t n = x.size();
  Point y = x;
  y[0] += eps;
  auto rk4 = [&](Point& z) {
    Point k1 = s.field(z), tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * dt * k1[i];
    Point k2 = s.field(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + 0.5 * dt * k2[i];
    Point k3 = s.field(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + dt * k3[i];
    Point k4 = s.field(tmp);
    for (std::size_t i = 0; i < n; ++i) z[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  };
  double best = 0.0;
  const auto steps = static_cast<std::size_t>(std::llround(t1 / dt));
  for (std::size_t k = 1; k <= steps; ++k) {
    rk4(x);
    rk4(y);
    if (static_cast<double>(k) * dt >= t0) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
      best = std::max(best, std::sqrt(d));
    }
  }
  return best;
}

}  // namespace detail

// 1. Natural partition: one class for the dense torus flow, one per circle
// for the oscillator.
inline bool zimmer_partition(Json& d, Report* report) {
  bool ok = true;
  {
    detail::Stopwatch sw;
    const auto torus = systems::torus_flow(golden);
    std::mt19937_64 rng(101);
    std::vector<Point> seeds;
    for (int k = 0; k < 10; ++k) seeds.push_back(torus.sample_point(rng));
    const double h = 0.02;
    const auto sched = detail::doubling(1250.0, 1e4);
    const auto part = build_natural_partition(torus, seeds, h, sched, 2.0);
    const double secs = sw.seconds();
    const bool pass = part.representatives.size() == 1 && secs < 180.0;
    d["torus"] = {{"alpha", golden},          {"seeds", seeds.size()},
                  {"h", h},                   {"horizon", sched.back()},
                  {"representatives", part.representatives.size()},
                  {"max_assignment_distance", *std::max_element(part.assignment_distance.begin(), part.assignment_distance.end())},
                  {"seconds", secs},          {"pass", pass}};
    if (report) report->write_cloud("torus_closure", part.representatives.front().cloud);
    ok = ok && pass;
  }
  {
    detail::Stopwatch sw;
    const auto osc = systems::harmonic_oscillator();
    std::vector<Point> seeds;
    for (int k = 0; k < 20; ++k) seeds.push_back({0.1 + 0.07 * k, 0.0});
    const double h = 0.02;
    const double sched[] = {4 * pi, 8 * pi};
    const auto part = build_natural_partition(osc, seeds, h, sched, 2.0);
    double closest = unbounded;
    for (std::size_t i = 0; i < part.representatives.size(); ++i)
      for (std::size_t j = i + 1; j < part.representatives.size(); ++j)
        closest = std::min(closest, closure_distance(part.representatives[i], part.representatives[j]));
    const double secs = sw.seconds();
    const bool pass = part.representatives.size() == 20 && closest > 2.0 * h && secs < 180.0;
    d["oscillator"] = {{"seeds", seeds.size()},
                       {"h", h},
                       {"representatives", part.representatives.size()},
                       {"closest_pair_distance", closest},
                       {"tolerance", 2.0 * h},
                       {"seconds", secs},
                       {"pass", pass}};
    ok = ok && pass;
  }
  return ok;
}

// 2. Closures do not depend on where along the orbit they start.
inline bool closure_orbit_invariance(Json& d, Report*) {
  struct Case {
    FlowSystem system;
    double h;
    std::vector<double> schedule;
  };
  const std::vector<Case> cases = {
      {systems::harmonic_oscillator(), 0.02, {4 * pi, 8 * pi, 16 * pi}},
      {systems::pendulum(), 0.05, {50.0, 100.0, 200.0, 400.0}},
      {systems::torus_flow(golden), 0.02, {250.0, 500.0, 1000.0}},
      {systems::coupled_oscillators(1.0, std::numbers::sqrt2), 0.1, {250.0, 500.0, 1000.0, 2000.0}},
      {systems::circle_family(), 0.02, {20.0, 40.0, 80.0}},
  };
  const double shifts[] = {0.37, 5.1, -12.4};
  detail::Stopwatch sw;
  std::size_t failures = 0, checked = 0;
  Json rows = Json::array();
  for (const auto& c : cases) {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Point x = c.system.sample_point(rng);
      const auto base = approximate_closure(c.system, x, c.h, c.schedule);
      for (double s : shifts) {
        const auto moved = approximate_closure(c.system, evaluate(c.system, x, s), c.h, c.schedule);
        const double dist = closure_distance(base, moved);
        worst = std::max(worst, dist);
        ++checked;
        if (dist > 2.0 * c.h) ++failures;
      }
    }
    rows.push_back({{"system", c.system.name()}, {"h", c.h}, {"worst_distance", worst}, {"tolerance", 2.0 * c.h}});
  }
  const double secs = sw.seconds();
  d["systems"] = rows;
  d["checked"] = checked;
  d["failures"] = failures;
  d["seconds"] = secs;
  return failures == 0 && checked == 75 && secs < 300.0;
}

// 3. Invariant manifolds against closures on the coupled oscillators.
inline bool manifold_closure_identity(Json& d, Report* report) {
  detail::Stopwatch sw;
  const double h = 0.05;
  const Point seed{1, 1, 0, 0};  // I1 = I2 = 1/2
  auto run = [&](double w2, const std::vector<double>& sched) {
    const auto sys = systems::coupled_oscillators(1.0, w2);
    const Observable inv[] = {observables::mode_energy(0, 2), observables::mode_energy(1, 2)};
    const auto manifold = minimal_invariant_manifold(inv, seed, OccupancyGrid(sys.space(), h));
    const auto closure = approximate_closure(sys, seed, h, sched);
    return std::pair{compare_manifold_to_zimmer(manifold, closure), closure};
  };
  const auto [irr, irr_closure] = run(std::numbers::sqrt2, {5000.0, 1e4});
  const auto [res, res_closure] = run(1.0, {100.0, 200.0});
  const double secs = sw.seconds();
  auto row = [](const ManifoldComparison& c) {
    return Json{{"subset_gap", c.subset_gap},
                {"hausdorff_gap", c.hausdorff_gap},
                {"manifold_cells", c.manifold_cells},
                {"closure_cells", c.closure_cells}};
  };
  const bool irr_pass = irr.hausdorff_gap <= 4 * h;
  const bool res_pass = res.subset_gap == 0.0 && res.hausdorff_gap > 20 * h && res_closure.kind == ClosureKind::cycle;
  d["h"] = h;
  d["irrational"] = row(irr);
  d["irrational"]["bound"] = 4 * h;
  d["irrational"]["pass"] = irr_pass;
  d["resonant"] = row(res);
  d["resonant"]["closure_kind"] = to_string(res_closure.kind);
  d["resonant"]["lower_bound"] = 20 * h;
  d["resonant"]["pass"] = res_pass;
  d["seconds"] = secs;
  if (report) report->write_cloud("resonant_cycle", res_closure.cloud);
  return irr_pass && res_pass && secs < 300.0;
}

// 4. Lattice closure against exhaustive subfamily enumeration.
inline bool intersection_oracle(Json& d, Report*) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(404);
  std::size_t mismatches = 0, systems_checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t cells = 1 + rng() % 16;
    const std::size_t members = 1 + rng() % 12;
    const double density = 0.2 + 0.6 * std::uniform_real_distribution<>(0, 1)(rng);
    CellSetSystem x(cells);
    for (std::size_t m = 0; m < members; ++m) {
      CellSet s(cells);
      for (std::size_t c = 0; c < cells; ++c)
        if (std::uniform_real_distribution<>(0, 1)(rng) < density) s.set(c);
      x.add(s);
    }
    for (auto mode : {ExtremeMode::minimal, ExtremeMode::maximal})
      if (!minimal_intersections(x, mode, IntersectionMethod::lattice).same_family(minimal_intersections_brute(x, mode)))
        ++mismatches;
    ++systems_checked;
  }
  const double secs = sw.seconds();
  d["systems"] = systems_checked;
  d["modes"] = {"minimal", "maximal"};
  d["mismatches"] = mismatches;
  d["seconds"] = secs;
  return mismatches == 0 && secs < 60.0;
}

// 5. The Hamiltonian solves the invariant equation; energy is conserved
// along integrated orbits.
inline bool invariant_equation(Json& d, Report* report) {
  bool ok = true;
  Json rows = Json::array();
  for (auto sys : {systems::pendulum(), systems::coupled_oscillators(1.0, std::numbers::sqrt2)}) {
    const auto H = observables::hamiltonian(sys);
    std::mt19937_64 rng(505);
    double residual = 0.0;
    for (int k = 0; k < 1000; ++k) residual = std::max(residual, std::abs(invariant_residual(sys, H, sys.sample_point(rng))));
    double drift = 0.0;
    std::vector<std::vector<double>> series;
    for (int k = 0; k < 4; ++k) {
      const Point x = sys.sample_point(rng);
      const double h0 = H(x);
      const auto s = sample_orbit(sys, x, 1e3, StepPolicy::fixed_time(1.0));
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double e = std::abs(H(s.point(i)) - h0);
        drift = std::max(drift, e);
        if (k == 0 && s.times[i] >= 0) series.push_back({s.times[i], e});
      }
    }
    const bool pass = residual < 1e-10 && drift < 1e-6;
    rows.push_back({{"system", sys.name()}, {"max_residual", residual}, {"max_energy_drift", drift}, {"pass", pass}});
    if (report) report->write_series("energy_drift_" + sys.name(), {"t", "abs_drift"}, series);
    ok = ok && pass;
  }
  d["systems"] = rows;
  d["residual_bound"] = 1e-10;
  d["drift_bound"] = 1e-6;
  return ok;
}

// 6. Separation growth stays under the Gronwall bound.
inline bool gronwall_bound(Json& d, Report*) {
  detail::Stopwatch sw;
  bool ok = true;
  Json rows = Json::array();
  std::vector<double> t_grid;
  for (int k = 1; k <= 50; ++k) t_grid.push_back(0.04 * k);
  const double eps[] = {1e-3, 1e-4, 1e-5};
  for (auto sys : {systems::harmonic_oscillator(), systems::linear_contraction(1.0, 2), systems::torus_flow(golden),
                   systems::lorenz(10.0, 28.0, 8.0 / 3.0)}) {
    const double kappa = estimate_flow_exponent(sys, 200, eps, 606);
    const auto rep = verify_gronwall(sys, kappa, 200, t_grid, 1e-3, 607, 1.05);
    const bool pass = rep.violations.empty() && rep.checked > 0;
    rows.push_back({{"system", sys.name()},
                    {"kappa_hat", kappa},
                    {"checked", rep.checked},
                    {"skipped_pairs", rep.skipped_pairs},
                    {"violations", rep.violations.size()},
                    {"pass", pass}});
    ok = ok && pass;
  }
  const double secs = sw.seconds();
  d["systems"] = rows;
  d["pairs"] = 200;
  d["times"] = t_grid.size();
  d["slack"] = 1.05;
  d["seconds"] = secs;
  return ok && secs < 120.0;
}

// 7. Time mean against space mean over the closure.
inline bool time_space_identity(Json& d, Report* report) {
  detail::Stopwatch sw;
  const auto osc = systems::harmonic_oscillator();
  const double circle_h[] = {4 * pi, 8 * pi, 16 * pi};
  const auto circle = time_vs_space_report(osc, Point{1, 0}, observables::coordinate_square(0), 0.01, circle_h, 1e-3);
  const bool circle_pass = std::abs(circle.time_plain - 0.5) <= 1e-3 && std::abs(circle.space - 0.5) <= 1e-3;
  d["circle"] = {{"observable", circle.observable},
                 {"time_mean", circle.time_plain},
                 {"time_mean_speed_normalized", circle.time_speed_normalized},
                 {"space_mean", circle.space},
                 {"closure_cells", circle.closure_cells},
                 {"pass", circle_pass}};

  const auto torus = systems::torus_flow(golden);
  const auto f = observables::bump(torus.space(), {0.5, 0.5}, 0.25);
  const double torus_h[] = {2500.0, 5000.0, 1e4};
  const auto tr = time_vs_space_report(torus, Point{0.1, 0.2}, f, 0.02, torus_h, 1e-2);
  const bool torus_pass = tr.gap_plain < 0.03;
  d["torus"] = {{"observable", tr.observable},
                {"time_mean", tr.time_plain},
                {"space_mean", tr.space},
                {"gap", tr.gap_plain},
                {"bound", 0.03},
                {"closure_cells", tr.closure_cells},
                {"pass", torus_pass}};
  if (report) {
    const auto b = birkhoff_average(torus, Point{0.1, 0.2}, f, Weight::plain, detail::doubling(312.5, 1e4), 1e-2);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < b.raw.horizons.size(); ++i) rows.push_back({b.raw.horizons[i], b.raw.partials[i][0]});
    report->write_series("torus_bump_partials", {"T", "time_mean"}, rows);
  }
  const double secs = sw.seconds();
  d["seconds"] = secs;
  return circle_pass && torus_pass && secs < 120.0;
}

// 8. The kinecentric field is constant along orbits.
inline bool kinecentric_constancy(Json& d, Report*) {
  const double horizons[] = {250.0, 500.0, 1000.0};
  const double shifts[] = {0.37, 5.1, -12.4};
  struct Case {
    FlowSystem system;
    Point x;
  };
  const std::vector<Case> cases = {{systems::harmonic_oscillator(), {1.0, 0.3}},
                                   {systems::torus_flow(golden), {0.1, 0.2}},
                                   {systems::coupled_oscillators(1.0, std::numbers::sqrt2), {0.8, 0.5, -0.2, 0.4}}};
  bool ok = true;
  Json rows = Json::array();
  for (const auto& c : cases) {
    const auto base = kinecentric_field(c.system, c.x, horizons, 1e-2);
    double worst = 0.0;
    for (double s : shifts) {
      const auto other = kinecentric_field(c.system, evaluate(c.system, c.x, s), horizons, 1e-2);
      double sq = 0.0;
      for (std::size_t i = 0; i < base.value.size(); ++i) sq += std::pow(base.value[i] - other.value[i], 2);
      worst = std::max(worst, std::sqrt(sq));
    }
    const bool pass = worst < 1e-2;
    rows.push_back({{"system", c.system.name()},
                    {"omega_hat", base.value},
                    {"max_shift_distance", worst},
                    {"pass", pass}});
    ok = ok && pass;
  }
  d["systems"] = rows;
  d["horizon"] = 1000.0;
  d["bound"] = 1e-2;
  return ok;
}

// 9. Orbits starting within B(delta) of x stay inside the delta-tube
// around x's arc of half-length A(delta/3).
inline bool begleit_chain(Json& d, Report*) {
  const auto sys = systems::circle_family();
  const double delta = 0.3;
  std::mt19937_64 rng(909);
  std::vector<Point> probes;
  for (int k = 0; k < 24; ++k) probes.push_back(sys.sample_point(rng));
  const auto b = begleit_function(sys, delta, probes, 80.0, 100, 910, 0.01);
  std::size_t failures = 0, pairs = 0;
  std::uniform_real_distribution<> unit(0.0, 1.0);
  while (pairs < 50) {
    const Point x = sys.sample_point(rng);
    const Point y = displaced(sys.space(), x, random_unit_vector(2, rng), b.value * unit(rng));
    if (!sys.in_domain(y)) continue;
    ++pairs;
    const auto core = arc_of(sample_orbit(sys, x, b.immanence, StepPolicy::arc_length(delta / 20)), sys.space(),
                             b.immanence);
    const auto target = sample_orbit(sys, y, 15.0, StepPolicy::arc_length(delta / 10));
    if (!tube_covers(core, delta, cloud_of(target, sys.space()))) ++failures;
  }
  d["delta"] = delta;
  d["immanence_at_delta_over_3"] = b.immanence;
  d["begleit_value"] = b.value;
  d["pairs"] = pairs;
  d["failures"] = failures;
  return failures == 0 && b.value > 0.0;
}

// 10. Fixed point, cycle and sensitive attractor.
inline bool sensitivity_trichotomy(Json& d, Report* report) {
  detail::Stopwatch sw;
  bool ok = true;
  {
    const auto osc = systems::harmonic_oscillator();
    ClassifyConfig cfg;
    cfg.grid_h = 0.02;
    cfg.schedule = {4 * pi, 8 * pi};
    const auto origin = classify_state(osc, Point{0, 0}, cfg);
    const auto ring = classify_state(osc, Point{1, 0}, cfg);
    const bool origin_pass = origin.kind == StateKind::fixed_point;
    const bool ring_pass = ring.kind == StateKind::cycle && ring.period && std::abs(*ring.period - 2 * pi) <= 1e-6;
    d["origin"] = {{"kind", to_string(origin.kind)}, {"score", origin.score()}, {"pass", origin_pass}};
    d["circle"] = {{"kind", to_string(ring.kind)},
                   {"period", ring.period ? *ring.period : 0.0},
                   {"score", ring.score()},
                   {"pass", ring_pass}};
    ok = ok && origin_pass && ring_pass;
  }
  {
    const auto lor = systems::lorenz(10.0, 28.0, 8.0 / 3.0);
    ClassifyConfig cfg;
    cfg.grid_h = 1.0;
    cfg.schedule = detail::doubling(100.0, 51200.0);
    cfg.burn_in = 50.0;
    cfg.eps_grid = {1e-2, 1e-4, 1e-6, 1e-8};
    cfg.probes = 8;
    cfg.tail = {20.0, 60.0};
    const auto c = classify_state(lor, Point{1, 1, 1}, cfg);
    const double oracle = detail::twin_divergence_oracle(lor, c.state, 1e-8, 20.0, 60.0, 1e-3);
    const auto ms = max_sensitivity_probe(c.closure, c.scan);
    const bool pass = c.kind == StateKind::non_trivial_zimmer && c.score() > 10.0 && c.coherent() && oracle > 10.0;
    d["lorenz"] = {{"kind", to_string(c.kind)},
                   {"delta_hat", c.score()},
                   {"coherent", c.coherent()},
                   {"scc_count", c.coherence ? c.coherence->scc_count : 0},
                   {"closure_cells", c.closure.grid.occupied_count()},
                   {"closure_converged", c.closure.converged},
                   {"twin_oracle_separation", oracle},
                   {"max_sensitivity_ratio", ms.ratio},
                   {"pass", pass}};
    if (report) {
      std::vector<std::vector<double>> rows;
      for (const auto& w : c.scan.witnesses) rows.push_back({w.eps, w.separation, w.time});
      report->write_series("lorenz_witnesses", {"eps", "late_separation", "time"}, rows);
      report->write_cloud("lorenz_closure", c.closure.cloud);
    }
    ok = ok && pass;
  }
  const double secs = sw.seconds();
  d["seconds"] = secs;
  return ok && secs < 180.0;
}

// 11. Continuity in the initial state uniformly in time.
inline bool laplace_continuity(Json& d, Report* report) {
  const double deltas[] = {0.3, 0.1};
  auto verdict = [&](const FlowSystem& s, const Point& z) {
    const auto v = laplace_probe(s, z, deltas, 50.0, 16, 1111, 0.01);
    Json w = Json::array();
    for (const auto& x : v.witnesses) w.push_back({{"delta", x.delta}, {"epsilon", x.epsilon}});
    return std::pair{v.continuous, w};
  };
  const auto torus = systems::torus_flow(golden);
  const auto [torus_v, torus_w] = verdict(torus, {0.1, 0.2});
  const auto [contraction_v, contraction_w] = verdict(systems::linear_contraction(1.0, 2), {0.5, 0.3});
  const auto lor = systems::lorenz(10.0, 28.0, 8.0 / 3.0);
  const auto [lorenz_v, lorenz_w] = verdict(lor, evaluate(lor, Point{1, 1, 1}, 30.0));
  d["torus"] = {{"continuous", torus_v}, {"witnesses", torus_w}};
  d["contraction"] = {{"continuous", contraction_v}, {"witnesses", contraction_w}};
  d["lorenz"] = {{"continuous", lorenz_v}, {"witnesses", lorenz_w}};

  // Laplace continuity, a dense orbit and no measured sensitivity at once:
  // reported, not judged.
  const double sched[] = {200.0, 400.0, 800.0};
  const auto closure = approximate_closure(torus, Point{0.1, 0.2}, 0.05, sched);
  const double eps[] = {1e-3, 1e-5};
  const auto scan = resolution_field(torus, Point{0.1, 0.2}, eps, 4, {20.0, 60.0}, 1112);
  d["torus_tension"] = {{"laplace_continuous", torus_v},
                        {"closure_kind", to_string(closure.kind)},
                        {"closure_cells", closure.grid.occupied_count()},
                        {"total_cells", closure.grid.total_cells()},
                        {"delta_hat", scan.delta_hat},
                        {"flagged", torus_v && closure.kind == ClosureKind::non_trivial_candidate && scan.sentinel()}};
  if (report && d["torus_tension"]["flagged"].get<bool>())
    report->flag("laplace-sensitivity-tension",
                 "torus flow: Laplace continuous, dense orbit closure, no measured sensitivity");
  return torus_v && contraction_v && !lorenz_v;
}

/// Criteria 1 to 11; determinism (12) needs the command runner and lives
/// with it.
inline std::vector<Criterion> numeric_criteria() {
  return {
      {1, "zimmer-partition", "natural partition of the torus flow and the oscillator", zimmer_partition},
      {2, "closure-orbit-invariance", "closures agree along each orbit", closure_orbit_invariance},
      {3, "manifold-closure-identity", "minimal invariant manifolds against closures", manifold_closure_identity},
      {4, "intersection-oracle", "lattice closure against exhaustive enumeration", intersection_oracle},
      {5, "invariant-equation", "Hamiltonian residual and energy drift", invariant_equation},
      {6, "gronwall-bound", "separation growth under the Gronwall bound", gronwall_bound},
      {7, "time-space-identity", "time mean equals space mean", time_space_identity},
      {8, "kinecentric-constancy", "kinecentric field constant along orbits", kinecentric_constancy},
      {9, "begleit-chain", "delta-tube coverage from the Begleit bound", begleit_chain},
      {10, "sensitivity-trichotomy", "fixed point, cycle, sensitive attractor", sensitivity_trichotomy},
      {11, "laplace-probe", "Laplace continuity verdicts", laplace_continuity},
  };
}

}  // namespace flowkit::experiments
