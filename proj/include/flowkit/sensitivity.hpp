#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/geometry.hpp"
#include "flowkit/parallel.hpp"
#include "flowkit/regularity.hpp"
#include "flowkit/zimmer.hpp"

namespace flowkit {

inline constexpr double no_sensitivity = -unbounded;

struct TailWindow {
  double t0 = 20.0;
  double t1 = 60.0;
};

struct SensitivityWitness {
  double eps = 0.0;
  std::size_t probe = 0;
  double separation = 0.0;  // best late separation among probes at this eps
  double time = 0.0;
  bool qualified = false;   // exceeded floor_factor * eps
};

struct SensitivityScan {
  Point x;
  std::vector<double> eps_grid;
  std::size_t probe_count = 0;
  TailWindow tail;
  double floor_factor = 10.0;
  double delta_hat = no_sensitivity;
  std::vector<SensitivityWitness> witnesses;

  bool sentinel() const { return delta_hat == no_sensitivity; }
};

/// For each eps, twins y in the eps-ball around x; the late separation of a
/// probe is its sup over the tail window, and it counts only above
/// floor_factor * eps. delta_hat is the largest value every eps reaches with
/// some probe: the min over eps of the per-eps best, or -inf when some eps
/// has no counting probe.
inline SensitivityScan resolution_field(const FlowSystem& system, std::span<const double> x,
                                        std::span<const double> eps_grid, std::size_t probes, TailWindow tail,
                                        std::uint64_t rng_seed, double dt = 0.01, double floor_factor = 10.0) {
  require(tail.t0 >= 0.0 && tail.t0 < tail.t1, ErrorCode::invalid_argument, "tail window needs 0 <= T0 < T1");
  require(!eps_grid.empty() && probes > 0, ErrorCode::invalid_argument, "need at least one eps and one probe");
  for (std::size_t i = 0; i < eps_grid.size(); ++i)
    require(eps_grid[i] > 0.0 && (i == 0 || eps_grid[i] < eps_grid[i - 1]), ErrorCode::invalid_argument,
            "eps grid must be positive and decreasing");
  SensitivityScan scan;
  scan.x = system.space().wrapped(Point(x.begin(), x.end()));
  scan.eps_grid.assign(eps_grid.begin(), eps_grid.end());
  scan.probe_count = probes;
  scan.tail = tail;
  scan.floor_factor = floor_factor;

  std::mt19937_64 rng(rng_seed);
  std::vector<Point> dirs;
  for (std::size_t k = 0; k < probes * eps_grid.size(); ++k) dirs.push_back(random_unit_vector(system.dim(), rng));

  double delta = unbounded;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    const double eps = eps_grid[e];
    auto late = parallel_map(probes, [&](std::size_t k) {
      const Point y = displaced(system.space(), scan.x, dirs[e * probes + k], eps);
      std::pair<double, double> best{0.0, 0.0};  // (separation, time)
      for (const auto& [t, sep] : separation_series(system, scan.x, y, tail.t1, dt))
        if (t >= tail.t0 && sep > best.first) best = {sep, t};
      return best;
    });
    SensitivityWitness w;
    w.eps = eps;
    for (std::size_t k = 0; k < probes; ++k) {
      if (late[k].first > w.separation) {
        w.separation = late[k].first;
        w.time = late[k].second;
        w.probe = k;
      }
    }
    w.qualified = w.separation > floor_factor * eps;
    scan.witnesses.push_back(w);
    delta = w.qualified ? std::min(delta, w.separation) : no_sensitivity;
  }
  scan.delta_hat = delta;
  return scan;
}

struct CoherenceResult {
  bool coherent = false;
  std::size_t scc_count = 0;
  std::size_t cells = 0;
  std::size_t edges = 0;
  std::size_t unvisited_cells = 0;  // occupied cells the edge walk never sampled
  double t_step = 0.0;
};

namespace detail {

// Tarjan's algorithm, iterative. Returns the number of strongly connected
// components.
inline std::size_t count_scc(const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unset), low(n, 0), stack;
  std::vector<bool> on_stack(n, false);
  std::size_t counter = 0, components = 0;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge)
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unset) continue;
    call.emplace_back(root, 0);
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e == 0 && index[v] == unset) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = true;
      }
      if (e < adj[v].size()) {
        const std::size_t w = adj[v][e++];
        if (index[w] == unset) {
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
        } while (w != v);
        ++components;
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  return components;
}

}  // namespace detail

/// Discrete transitivity of the time-t_step map on the occupied cells. The
/// orbit through the closure seed is walked at a time step fine enough to
/// visit every cell it crosses, and each sample contributes the edge
/// cell(p(t)) -> cell(p(t + t_step)); edges into unoccupied cells are
/// dropped. Occupied cells the walk never samples (sub-resolution clips, or
/// cells merged in from elsewhere) are tied both ways to their occupied
/// neighbours. The walk is capped at max_samples points.
inline CoherenceResult coherence_check(const ClosureCloud& closure, const FlowSystem& system, double t_step,
                                       std::size_t max_samples = 20000000) {
  require(closure.converged, ErrorCode::not_converged, "coherence needs a saturated closure");
  require(t_step > 0.0, ErrorCode::invalid_argument, "t_step must be positive");
  if (closure.period) {
    const double r = t_step / *closure.period;
    require(std::abs(r - std::round(r)) > 1e-3, ErrorCode::invalid_argument,
            "t_step is a multiple of the detected period");
  }
  const OccupancyGrid& grid = closure.grid;
  const std::vector<CellKey> keys = grid.cells();
  std::unordered_map<CellKey, std::size_t> id;
  for (std::size_t i = 0; i < keys.size(); ++i) id.emplace(keys[i], i);

  CoherenceResult r;
  r.cells = keys.size();
  r.t_step = t_step;
  const std::size_t n = keys.size();
  std::vector<std::vector<std::size_t>> adj(n);
  std::vector<bool> visited(n, false);
  std::unordered_set<std::uint64_t> seen;
  auto add_edge = [&](std::size_t a, std::size_t b) {
    if (seen.insert(static_cast<std::uint64_t>(a) * n + b).second) adj[a].push_back(b);
  };

  const std::size_t dim = grid.dim();
  const auto& counts = grid.axis_counts();
  std::size_t stencil = 1;
  for (std::size_t d = 0; d < dim; ++d) stencil *= 3;
  // Occupied cells in the 3^n block around a cell, itself excluded.
  auto neighbours = [&](CellKey key) {
    std::vector<std::size_t> out;
    const auto base = grid.index_of(key);
    std::vector<std::int64_t> idx(dim);
    for (std::size_t c = 0; c < stencil; ++c) {
      std::size_t rest = c;
      bool inside = true;
      for (std::size_t d = 0; d < dim; ++d) {
        std::int64_t v = base[d] + static_cast<std::int64_t>(rest % 3) - 1;
        rest /= 3;
        if (grid.space().periodic(d)) {
          v = (v + counts[d]) % counts[d];
        } else if (v < 0 || v >= counts[d]) {
          inside = false;
        }
        idx[d] = v;
      }
      const CellKey k = grid.key_of(idx);
      if (!inside || k == key) continue;
      if (auto it = id.find(k); it != id.end()) out.push_back(it->second);
    }
    return out;
  };

  if (closure.kind != ClosureKind::fixed_point) {
    double vmax = 0.0;
    for (std::size_t i = 0; i < closure.cloud.size(); ++i) vmax = std::max(vmax, system.speed(closure.cloud.point(i)));
    vmax = std::max(1.5 * vmax, 1e-12);
    // Cycles are walked for one period only, so they can afford a finer step.
    const double s0 = grid.h() / ((closure.kind == ClosureKind::cycle ? 64.0 : 8.0) * vmax);
    const auto k = static_cast<std::size_t>(std::max(1.0, std::round(t_step / s0)));
    const double s = t_step / static_cast<double>(k);
    // Samples in [t_step, span] get both an incoming and an outgoing edge;
    // only those mark their cell as visited.
    Point start = closure.seed;
    double span = 0.0;
    if (closure.kind == ClosureKind::cycle) {
      span = *closure.period + t_step;
    } else if (system.reversible) {
      start = evaluate(system, closure.seed, -closure.horizon);
      span = 2.0 * closure.horizon;
    } else {
      span = closure.horizon;
    }
    span = std::min(span, static_cast<double>(max_samples) * s);
    const double length = span + t_step;
    std::vector<std::optional<std::size_t>> ring(k);
    std::size_t count = 0;
    auto sink = [&](std::span<const double> p) {
      std::optional<std::size_t> node;
      if (auto key = grid.cell_of(p)) {
        if (auto it = id.find(*key); it != id.end()) {
          node = it->second;
          const double t = static_cast<double>(count) * s;
          if (t >= t_step && t <= span) visited[*node] = true;
        } else {
          // A cell the closure sampling only clipped: use the nearest
          // occupied neighbour.
          double best = unbounded;
          for (std::size_t j : neighbours(*key)) {
            const double d = grid.space().distance(p, grid.center(keys[j]));
            if (d < best) {
              best = d;
              node = j;
            }
          }
        }
      }
      auto& slot = ring[count % k];
      if (count >= k && slot && node) add_edge(*slot, *node);
      slot = node;
      ++count;
    };
    sink(start);
    OrbitWalker walker(system, start, 1);
    PointEmitter emit(system.space(), start, StepPolicy::fixed_time(s));
    walker.advance_to(length, [&](const StepView& v) {
      emit.consume(v, length, [&](double, std::span<const double> p) { sink(p); });
    });
  } else {
    visited.assign(n, true);
  }

  // Tie unsampled cells to their occupied neighbours.
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    ++r.unvisited_cells;
    for (std::size_t j : neighbours(keys[i])) {
      add_edge(i, j);
      add_edge(j, i);
    }
  }
  r.edges = seen.size();
  r.scc_count = detail::count_scc(adj);
  r.coherent = r.scc_count == 1;
  return r;
}

/// Period times the golden ratio conjugate when there is a period, else 1.
inline double default_t_step(const ClosureCloud& closure) {
  return closure.period ? *closure.period * (std::sqrt(5.0) - 1.0) / 2.0 : 1.0;
}

struct ClassifyConfig {
  double grid_h = 0.0;  // <= 0: box diagonal / 200
  std::vector<double> schedule{100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0};
  double burn_in = 50.0;  // applied to non-reversible systems only
  std::vector<double> eps_grid{1e-2, 1e-4, 1e-6, 1e-8};
  std::size_t probes = 8;
  TailWindow tail{20.0, 60.0};
  std::uint64_t rng_seed = 1;
  double dt = 0.01;
  double t_step = 0.0;  // <= 0: default_t_step
  ClosureOptions closure;
};

enum class StateKind { fixed_point, cycle, non_trivial_zimmer };

inline std::string to_string(StateKind k) {
  switch (k) {
    case StateKind::fixed_point: return "FixedPoint";
    case StateKind::cycle: return "Cycle";
    default: return "NonTrivialZimmer";
  }
}

struct StateClass {
  StateKind kind = StateKind::non_trivial_zimmer;
  std::optional<double> period;
  Point state;  // after burn-in
  ClosureCloud closure;
  SensitivityScan scan;
  std::optional<CoherenceResult> coherence;  // absent when the closure did not saturate
  // Non-trivial closure without measured sensitivity: the case the
  // trichotomy does not predict.
  bool tension = false;

  double score() const { return scan.delta_hat; }
  bool coherent() const { return coherence && coherence->coherent; }
};

inline StateClass classify_state(const FlowSystem& system, std::span<const double> x, const ClassifyConfig& cfg) {
  StateClass out;
  const double h = cfg.grid_h > 0 ? cfg.grid_h : default_resolution(system.space());
  Point z = system.space().wrapped(Point(x.begin(), x.end()));
  if (!system.reversible && cfg.burn_in > 0 && !system.is_fixed_point(z)) z = evaluate(system, z, cfg.burn_in);
  out.state = z;
  out.closure = approximate_closure(system, z, h, cfg.schedule, cfg.closure);
  switch (out.closure.kind) {
    case ClosureKind::fixed_point: out.kind = StateKind::fixed_point; break;
    case ClosureKind::cycle: out.kind = StateKind::cycle; break;
    default: out.kind = StateKind::non_trivial_zimmer;
  }
  out.period = out.closure.period;
  out.scan = resolution_field(system, z, cfg.eps_grid, cfg.probes, cfg.tail, cfg.rng_seed, cfg.dt);
  if (out.closure.converged) {
    const double ts = cfg.t_step > 0 ? cfg.t_step : default_t_step(out.closure);
    out.coherence = coherence_check(out.closure, system, ts);
  }
  out.tension = out.kind == StateKind::non_trivial_zimmer && out.scan.sentinel();
  return out;
}

struct MaxSensitivity {
  double diameter = 0.0;
  double ratio = no_sensitivity;  // sentinel when the scan has none
  bool defined = false;
};

/// delta_hat against the closure diameter (max pairwise distance of the
/// cell centers).
inline MaxSensitivity max_sensitivity_probe(const ClosureCloud& closure, const SensitivityScan& scan) {
  MaxSensitivity m;
  const PointCloud& c = closure.cloud;
  const StateSpace& space = c.space();
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j) m.diameter = std::max(m.diameter, space.distance(c.point(i), c.point(j)));
  if (!scan.sentinel() && m.diameter > 0.0) {
    m.ratio = scan.delta_hat / m.diameter;
    m.defined = true;
  }
  return m;
}

}  // namespace flowkit
