#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/geometry.hpp"
#include "flowkit/grid.hpp"
#include "flowkit/parallel.hpp"

namespace flowkit {

enum class ClosureKind { fixed_point, cycle, non_trivial_candidate };

inline std::string to_string(ClosureKind k) {
  switch (k) {
    case ClosureKind::fixed_point: return "FixedPoint";
    case ClosureKind::cycle: return "Cycle";
    case ClosureKind::non_trivial_candidate: return "NonTrivialCandidate";
  }
  return "?";
}

/// Watches the forward orbit for a return to the seed. A local minimum of the
/// sampled distance below the local sample spacing is refined by bisection
/// on d/dt |Psi(x,t) - x|^2, integrating from the sample just before it.
class ReturnDetector {
 public:
  ReturnDetector(const FlowSystem& system, std::span<const double> seed, double tol)
      : system_(&system), seed_(seed.begin(), seed.end()), tol_(tol) {}

  std::optional<double> period() const { return period_; }
  double closest_return() const { return closest_; }
  std::size_t candidates() const { return candidates_; }

  // Forward-time samples in increasing order, t > 0.
  void feed(double t, std::span<const double> p) {
    if (period_) return;
    const double d = system_->space().distance(p, seed_);
    Sample s{t, d, Point(p.begin(), p.end())};
    if (history_ == 2) {
      const Sample& a = window_[0];
      const Sample& b = window_[1];
      if (a.d > b.d && b.d <= d) {
        const double spacing = std::max(system_->space().distance(a.p, b.p), system_->space().distance(b.p, s.p));
        if (b.d <= 1.5 * spacing + tol_) refine(a, s);
      }
      window_[0] = std::move(window_[1]);
      window_[1] = std::move(s);
    } else {
      window_[history_++] = std::move(s);
    }
  }

 private:
  struct Sample {
    double t = 0.0;
    double d = 0.0;
    Point p;
  };

  double gradient_sign(std::span<const double> y) const {
    const std::size_t n = y.size();
    Point diff(n);
    system_->space().difference(y, seed_, diff);
    return dot(diff, system_->field(y));
  }

  void refine(const Sample& a, const Sample& c) {
    ++candidates_;
    const double span = c.t - a.t;
    auto at = [&](double tau) { return tau == 0.0 ? a.p : evaluate(*system_, a.p, tau); };
    double lo = 0.0, hi = span;
    double glo = gradient_sign(at(lo)), ghi = gradient_sign(at(hi));
    if (!(glo < 0.0 && ghi > 0.0)) {
      // No sign bracket: fall back to golden-section on the distance.
      const double r = (std::sqrt(5.0) - 1.0) / 2.0;
      double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
      double f1 = system_->space().distance(at(x1), seed_), f2 = system_->space().distance(at(x2), seed_);
      for (int it = 0; it < 80 && hi - lo > 1e-13 * std::max(1.0, c.t); ++it) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - r * (hi - lo);
          f1 = system_->space().distance(at(x1), seed_);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + r * (hi - lo);
          f2 = system_->space().distance(at(x2), seed_);
        }
      }
    } else {
      for (int it = 0; it < 100 && hi - lo > 1e-14 * std::max(1.0, c.t); ++it) {
        const double mid = 0.5 * (lo + hi);
        (gradient_sign(at(mid)) < 0.0 ? lo : hi) = mid;
      }
    }
    const double tau = 0.5 * (lo + hi);
    const double d = system_->space().distance(at(tau), seed_);
    closest_ = std::min(closest_, d);
    if (d < tol_) period_ = a.t + tau;
  }

  const FlowSystem* system_;
  Point seed_;
  double tol_;
  Sample window_[2];
  int history_ = 0;
  std::optional<double> period_;
  double closest_ = std::numeric_limits<double>::infinity();
  std::size_t candidates_ = 0;
};

/// Smallest t > 0 within the sample's forward horizon with |Psi(x,t) - x| < tol.
/// No result is evidence of quasi-periodicity, not proof.
inline std::optional<double> detect_cycle(const FlowSystem& system, const OrbitSample& sample, double tol) {
  ReturnDetector detector(system, sample.seed, tol);
  for (std::size_t i = sample.index_of_zero() + 1; i < sample.size(); ++i) {
    detector.feed(sample.times[i], sample.point(i));
    if (detector.period()) break;
  }
  return detector.period();
}

/// Grid-occupancy approximation of the closure of one orbit.
struct ClosureCloud {
  Point seed;
  OccupancyGrid grid;
  PointCloud cloud;  // occupied cell centers in key order
  double horizon = 0.0;
  bool converged = false;
  ClosureKind kind = ClosureKind::non_trivial_candidate;
  std::optional<double> period;
  std::vector<std::size_t> cell_counts;  // occupied count after each schedule entry
  double closest_return = std::numeric_limits<double>::infinity();
};

struct ClosureOptions {
  double saturation = 0.005;  // relative growth below which the closure counts as saturated
  double cycle_tol = -1.0;    // < 0: 1e-7 * box diagonal
  std::size_t reps_per_cell = 4;
};

/// Samples the orbit over a growing horizon schedule until the occupied cell
/// set saturates, and classifies the closure as fixed point, cycle or
/// non-trivial candidate.
inline ClosureCloud approximate_closure(const FlowSystem& system, std::span<const double> seed, double grid_h,
                                        std::span<const double> schedule, const ClosureOptions& opt = {}) {
  require(grid_h > 0.0, ErrorCode::invalid_argument, "grid_h must be positive");
  require(!schedule.empty(), ErrorCode::invalid_argument, "horizon schedule must be nonempty");
  for (std::size_t i = 0; i < schedule.size(); ++i)
    require(schedule[i] > 0.0 && (i == 0 || schedule[i] > schedule[i - 1]), ErrorCode::invalid_argument,
            "horizon schedule must be positive and increasing");

  ClosureCloud out;
  out.seed = system.space().wrapped(Point(seed.begin(), seed.end()));
  out.grid = OccupancyGrid(system.space(), grid_h, opt.reps_per_cell);
  out.grid.insert(out.seed);

  if (system.is_fixed_point(out.seed)) {
    out.kind = ClosureKind::fixed_point;
    out.converged = true;
    out.horizon = schedule.back();
    out.cell_counts.assign(1, 1);
    out.cloud = out.grid.centers();
    return out;
  }

  const double tol = opt.cycle_tol > 0 ? opt.cycle_tol : 1e-7 * system.space().diagonal();
  const auto policy = StepPolicy::arc_length(0.25 * grid_h);
  ReturnDetector detector(system, out.seed, tol);

  OrbitWalker forward(system, out.seed, 1);
  PointEmitter forward_emit(system.space(), out.seed, policy);
  std::optional<OrbitWalker> backward;
  std::optional<PointEmitter> backward_emit;
  if (system.reversible) {
    backward.emplace(system, out.seed, -1);
    backward_emit.emplace(system.space(), out.seed, policy);
  }

  auto forward_sink = [&](double t, std::span<const double> p) {
    out.grid.insert(p);
    detector.feed(t, p);
  };
  auto backward_sink = [&](double, std::span<const double> p) { out.grid.insert(p); };

  for (double horizon : schedule) {
    forward.advance_to(horizon, [&](const StepView& s) { forward_emit.consume(s, horizon, forward_sink); });
    if (detector.period()) {
      // One period is the whole closure; resample it finely so cells the
      // curve only clips are not missed.
      out.kind = ClosureKind::cycle;
      out.period = detector.period();
      OrbitWalker again(system, out.seed, 1);
      PointEmitter fine(system.space(), out.seed, StepPolicy::arc_length(grid_h / 8));
      again.advance_to(*out.period, [&](const StepView& s) {
        fine.consume(s, *out.period, [&](double, std::span<const double> p) { out.grid.insert(p); });
      });
      out.converged = true;
      out.horizon = horizon;
      out.cell_counts.push_back(out.grid.occupied_count());
      break;
    }
    if (backward)
      backward->advance_to(horizon, [&](const StepView& s) { backward_emit->consume(s, horizon, backward_sink); });
    out.horizon = horizon;
    const std::size_t count = out.grid.occupied_count();
    if (!out.cell_counts.empty()) {
      const auto prev = static_cast<double>(out.cell_counts.back());
      if (static_cast<double>(count) - prev < opt.saturation * prev) out.converged = true;
    }
    out.cell_counts.push_back(count);
    if (out.converged) break;
  }
  out.closest_return = detector.closest_return();
  out.cloud = out.grid.centers();
  return out;
}

/// Closure equivalence: Hausdorff distance of the cell clouds within
/// tol_cells grid cells.
inline double closure_distance(const ClosureCloud& a, const ClosureCloud& b) {
  require(a.grid.matches(b.grid), ErrorCode::grid_mismatch, "closures were built on different grids");
  return hausdorff_distance(a.cloud, b.cloud);
}

inline bool same_zimmer(const ClosureCloud& a, const ClosureCloud& b, double tol_cells) {
  return closure_distance(a, b) <= tol_cells * a.grid.h();
}

struct NaturalPartition {
  std::vector<Point> seeds;
  std::vector<ClosureCloud> representatives;
  std::vector<std::size_t> assignment;       // seed index -> representative index
  std::vector<std::size_t> representative_seed;  // representative index -> seed index
  std::vector<double> assignment_distance;   // Hausdorff distance to the assigned representative
  double tolerance_cells = 2.0;
};

/// Greedy clustering in seed order: each closure joins the nearest earlier
/// representative within tolerance, ties within 10% of the tolerance going to
/// the earlier one, or founds a new representative.
inline NaturalPartition build_natural_partition(const FlowSystem& system, std::span<const Point> seeds,
                                                double grid_h, std::span<const double> schedule,
                                                double tol_cells, const ClosureOptions& opt = {}) {
  require(!seeds.empty(), ErrorCode::invalid_argument, "partition needs at least one seed");
  auto closures = parallel_map(seeds.size(), [&](std::size_t i) {
    return approximate_closure(system, seeds[i], grid_h, schedule, opt);
  });

  NaturalPartition part;
  part.seeds.assign(seeds.begin(), seeds.end());
  part.tolerance_cells = tol_cells;
  const double tol = tol_cells * grid_h;
  for (std::size_t i = 0; i < closures.size(); ++i) {
    std::vector<double> dist;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rep : part.representatives) {
      dist.push_back(closure_distance(closures[i], rep));
      best = std::min(best, dist.back());
    }
    std::optional<std::size_t> chosen;
    if (best <= tol) {
      const double cutoff = std::min(best + 0.1 * tol, tol);
      for (std::size_t r = 0; r < dist.size(); ++r)
        if (dist[r] <= cutoff) {
          chosen = r;
          break;
        }
    }
    if (chosen) {
      part.assignment.push_back(*chosen);
      part.assignment_distance.push_back(dist[*chosen]);
    } else {
      part.assignment.push_back(part.representatives.size());
      part.assignment_distance.push_back(0.0);
      part.representative_seed.push_back(i);
      part.representatives.push_back(std::move(closures[i]));
    }
  }
  return part;
}

struct ContinuityRow {
  double delta = 0.0;
  double offset = 0.0;
  double max_distance = 0.0;
};

/// For each delta, perturbs x by random offsets of the given norm (normally
/// the Begleit bound for that delta) and records the largest Hausdorff
/// distance between the two closures.
inline std::vector<ContinuityRow> closure_continuity_probe(const FlowSystem& system, std::span<const double> x,
                                                           std::span<const double> deltas,
                                                           std::span<const double> offsets, double grid_h,
                                                           std::span<const double> schedule, std::size_t probes,
                                                           std::uint64_t rng_seed) {
  require(deltas.size() == offsets.size(), ErrorCode::invalid_argument, "one offset per delta");
  std::mt19937_64 rng(rng_seed);
  const ClosureCloud base = approximate_closure(system, x, grid_h, schedule);
  std::vector<ContinuityRow> rows;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    ContinuityRow row{deltas[k], offsets[k], 0.0};
    for (std::size_t j = 0; j < probes; ++j) {
      Point y(x.begin(), x.end());
      if (offsets[k] > 0.0) {
        Point u = random_unit_vector(x.size(), rng);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += offsets[k] * u[i];
      }
      const ClosureCloud other = approximate_closure(system, y, grid_h, schedule);
      row.max_distance = std::max(row.max_distance, closure_distance(base, other));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace flowkit
