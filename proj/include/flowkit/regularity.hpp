#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/geometry.hpp"
#include "flowkit/parallel.hpp"

namespace flowkit {

// x + offset, reduced on periodic axes.
inline Point displaced(const StateSpace& space, std::span<const double> x, std::span<const double> offset,
                       double scale = 1.0) {
  Point y(x.begin(), x.end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * offset[i];
  space.wrap(y);
  return y;
}

/// Largest observed |v(x) - v(y)| / eps over random pairs at distance eps,
/// maximized over the eps grid.
inline double estimate_flow_exponent(const FlowSystem& system, std::size_t pair_budget,
                                     std::span<const double> eps_grid, std::uint64_t rng_seed) {
  require(!eps_grid.empty(), ErrorCode::invalid_argument, "eps grid must be nonempty");
  std::mt19937_64 rng(rng_seed);
  double kappa = 0.0;
  for (double eps : eps_grid) {
    require(eps > 0.0, ErrorCode::invalid_argument, "eps must be positive");
    double theta = 0.0;
    for (std::size_t k = 0; k < pair_budget; ++k) {
      const Point x = system.sample_point(rng);
      const Point u = random_unit_vector(system.dim(), rng);
      const Point y = displaced(system.space(), x, u, eps);
      const Point vx = system.field(x), vy = system.field(y);
      double s = 0.0;
      for (std::size_t i = 0; i < vx.size(); ++i) s += (vx[i] - vy[i]) * (vx[i] - vy[i]);
      theta = std::max(theta, std::sqrt(s));
    }
    kappa = std::max(kappa, theta / eps);
  }
  return kappa;
}

struct GronwallViolation {
  Point x, y;
  double t = 0.0;
  double separation = 0.0;
  double bound = 0.0;
};

struct GronwallReport {
  double kappa = 0.0;
  double slack = 1.05;
  std::size_t checked = 0;
  std::size_t skipped_pairs = 0;  // pairs whose orbits left the box
  std::vector<GronwallViolation> violations;
};

/// Checks |Psi(x,t) - Psi(y,t)| <= slack |x - y| exp(kappa |t|) on random
/// pairs at the given initial separation.
inline GronwallReport verify_gronwall(const FlowSystem& system, double kappa, std::size_t pairs,
                                      std::span<const double> t_grid, double separation, std::uint64_t rng_seed,
                                      double slack = 1.05) {
  GronwallReport rep;
  rep.kappa = kappa;
  rep.slack = slack;
  std::mt19937_64 rng(rng_seed);
  std::vector<std::pair<Point, Point>> work;
  for (std::size_t k = 0; k < pairs; ++k) {
    Point x = system.sample_point(rng);
    Point y = displaced(system.space(), x, random_unit_vector(system.dim(), rng), separation);
    work.emplace_back(std::move(x), std::move(y));
  }
  std::vector<double> times;
  for (double t : t_grid)
    if (system.reversible || t >= 0.0) times.push_back(t);

  struct Outcome {
    bool skipped = false;
    std::vector<GronwallViolation> violations;
  };
  auto results = parallel_map(work.size(), [&](std::size_t k) {
    Outcome o;
    const auto& [x, y] = work[k];
    const double d0 = system.space().distance(x, y);
    try {
      for (double t : times) {
        const double sep = system.space().distance(evaluate(system, x, t), evaluate(system, y, t));
        const double bound = slack * d0 * std::exp(kappa * std::abs(t));
        if (sep > bound) o.violations.push_back({x, y, t, sep, bound});
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::integration_diverged) throw;
      o.skipped = true;
      o.violations.clear();
    }
    return o;
  });
  for (auto& o : results) {
    if (o.skipped) {
      ++rep.skipped_pairs;
      continue;
    }
    rep.checked += times.size();
    for (auto& v : o.violations) rep.violations.push_back(std::move(v));
  }
  return rep;
}

namespace detail {

// Fixed-radius neighbour search: buckets of edge >= radius, so every point
// within radius of a query lies in one of the 3^n surrounding buckets.
class RadiusBuckets {
 public:
  RadiusBuckets(const StateSpace& space, std::span<const double> points, double radius)
      : space_(&space), points_(points), radius_(radius), n_(space.dim()) {
    const std::size_t count = points.size() / n_;
    axes_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      Axis& a = axes_[i];
      if (space.periodic(i)) {
        a.cells = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(space.extent(i) / radius)));
        a.size = space.extent(i) / static_cast<double>(a.cells);
      } else {
        a.size = radius;
        std::int64_t lo = 0, hi = 0;
        for (std::size_t k = 0; k < count; ++k) {
          const auto idx = raw_index(i, points[k * n_ + i]);
          if (k == 0 || idx < lo) lo = idx;
          if (k == 0 || idx > hi) hi = idx;
        }
        a.offset = lo;
        a.cells = hi - lo + 1;
      }
    }
    order_.resize(count);
    keys_.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      order_[k] = static_cast<std::uint32_t>(k);
      keys_[k] = key_of(point(k));
    }
  }

  // Visits candidates bucket by bucket; visit returns false to stop.
  template <class Fn>
  void for_each_near(std::span<const double> q, Fn&& visit) const {
    std::vector<std::int64_t> base(n_), idx(n_);
    for (std::size_t i = 0; i < n_; ++i) base[i] = cell_index(i, q[i]);
    std::vector<int> off(n_, -1);
    std::vector<std::uint64_t> seen;
    while (true) {
      bool valid = true;
      for (std::size_t i = 0; i < n_ && valid; ++i) {
        std::int64_t v = base[i] + off[i];
        if (space_->periodic(i)) {
          v = ((v % axes_[i].cells) + axes_[i].cells) % axes_[i].cells;
        } else if (v < 0 || v >= axes_[i].cells) {
          valid = false;
        }
        idx[i] = v;
      }
      if (valid) {
        const std::uint64_t key = pack(idx);
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
          seen.push_back(key);
          auto it = ranges_.find(key);
          if (it != ranges_.end())
            for (std::uint32_t j = it->second.first; j < it->second.second; ++j)
              if (!visit(order_[j])) break;
        }
      }
      std::size_t i = 0;
      while (i < n_ && off[i] == 1) off[i++] = -1;
      if (i == n_) break;
      ++off[i];
    }
  }

  // Sorts each bucket by the given priority (ascending) and builds the index.
  void finalize(std::span<const double> priority) {
    std::sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (keys_[a] != keys_[b]) return keys_[a] < keys_[b];
      return priority[a] < priority[b];
    });
    for (std::uint32_t j = 0; j < order_.size();) {
      std::uint32_t e = j;
      while (e < order_.size() && keys_[order_[e]] == keys_[order_[j]]) ++e;
      ranges_.emplace(keys_[order_[j]], std::pair{j, e});
      j = e;
    }
  }

  std::span<const double> point(std::size_t k) const { return points_.subspan(k * n_, n_); }
  double radius() const { return radius_; }

 private:
  struct Axis {
    std::int64_t cells = 1;
    std::int64_t offset = 0;
    double size = 1.0;
  };

  std::int64_t raw_index(std::size_t i, double x) const {
    return static_cast<std::int64_t>(std::floor((x - space_->lo(i)) / axes_[i].size));
  }

  std::int64_t cell_index(std::size_t i, double x) const {
    if (space_->periodic(i)) {
      double u = std::fmod(x - space_->lo(i), space_->extent(i));
      if (u < 0) u += space_->extent(i);
      return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u / axes_[i].size)), 0, axes_[i].cells - 1);
    }
    return raw_index(i, x) - axes_[i].offset;
  }

  std::uint64_t pack(std::span<const std::int64_t> idx) const {
    std::uint64_t key = 0;
    for (std::size_t i = n_; i-- > 0;)
      key = key * static_cast<std::uint64_t>(axes_[i].cells) + static_cast<std::uint64_t>(idx[i]);
    return key;
  }

  std::uint64_t key_of(std::span<const double> x) const {
    std::vector<std::int64_t> idx(n_);
    for (std::size_t i = 0; i < n_; ++i) idx[i] = cell_index(i, x[i]);
    return pack(idx);
  }

  const StateSpace* space_;
  std::span<const double> points_;
  double radius_;
  std::size_t n_;
  std::vector<Axis> axes_;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint64_t> keys_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> ranges_;
};

}  // namespace detail

struct ImmanenceOptions {
  // A finite answer needs the sampled orbit to be this many times longer
  // than the covering arc; otherwise the horizon has not tested it.
  double validation_factor = 4.0;
  double spacing = 0.5;  // arc sampling step as a fraction of eps
};

/// Smallest sampled t such that the eps-tube around Psi(x, [-t, t]) covers
/// the whole orbit sample on [-horizon, horizon]; unbounded when that t is
/// not resolved by the horizon.
inline double immanence_time(const FlowSystem& system, std::span<const double> x, double eps, double horizon,
                             const ImmanenceOptions& opt = {}) {
  require(eps > 0.0, ErrorCode::invalid_argument, "eps must be positive");
  require(horizon > 0.0, ErrorCode::invalid_argument, "horizon must be positive");
  if (system.is_fixed_point(x)) return 0.0;
  const OrbitSample s = sample_orbit(system, x, horizon, StepPolicy::arc_length(opt.spacing * eps));
  std::vector<double> age(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) age[i] = std::abs(s.times[i]);
  detail::RadiusBuckets buckets(system.space(), s.points, eps);
  buckets.finalize(age);
  const double eps_sq = eps * eps;
  // For each point, the youngest sample within eps; the answer is the oldest
  // such value.
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (age[i] <= worst) continue;
    double best = age[i];
    buckets.for_each_near(s.point(i), [&](std::uint32_t j) {
      if (age[j] >= best) return false;  // buckets are sorted by age
      if (system.space().distance_squared(s.point(i), s.point(j)) <= eps_sq) {
        best = age[j];
        return false;
      }
      return true;
    });
    worst = std::max(worst, best);
  }
  return worst * opt.validation_factor > horizon ? unbounded : worst;
}

/// Maximum of immanence_time over the probes.
inline double global_immanence(const FlowSystem& system, double eps, std::span<const Point> probes, double horizon,
                               const ImmanenceOptions& opt = {}) {
  require(!probes.empty(), ErrorCode::invalid_argument, "probe set must be nonempty");
  auto values = parallel_map(probes.size(), [&](std::size_t k) {
    return immanence_time(system, probes[k], eps, horizon, opt);
  });
  return *std::max_element(values.begin(), values.end());
}

/// Fixed random pair directions reused across a bisection, so the tested
/// condition is monotone in the separation.
class PairProbe {
 public:
  PairProbe(const FlowSystem& system, std::size_t pairs, std::uint64_t rng_seed) : system_(&system) {
    std::mt19937_64 rng(rng_seed);
    for (std::size_t k = 0; k < pairs; ++k) {
      bases_.push_back(system.sample_point(rng));
      dirs_.push_back(random_unit_vector(system.dim(), rng));
    }
  }

  std::size_t size() const { return bases_.size(); }
  const Point& base(std::size_t k) const { return bases_[k]; }
  const Point& direction(std::size_t k) const { return dirs_[k]; }

  // max over pairs and grid times s in [-t, t] of the separation, for pairs
  // at initial distance d. Pairs that leave the box count as infinite.
  double worst_separation(double d, double t, double dt) const {
    auto seps = parallel_map(size(), [&](std::size_t k) {
      const Point y = displaced(system_->space(), bases_[k], dirs_[k], d);
      if (t <= 0.0) return system_->space().distance(bases_[k], y);
      try {
        return sup_metric_A(*system_, bases_[k], y, t, std::min(dt, t));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::integration_diverged) throw;
        return unbounded;
      }
    });
    return seps.empty() ? 0.0 : *std::max_element(seps.begin(), seps.end());
  }

 private:
  const FlowSystem* system_;
  std::vector<Point> bases_;
  std::vector<Point> dirs_;
};

/// Largest tested initial separation d <= delta such that every sampled pair
/// at distance d stays within delta over s in [-t, t]. A sampled estimate:
/// the true comanence value can only be smaller.
inline double comanence_function(const FlowSystem& system, double delta, double t, std::size_t pair_budget,
                                  std::uint64_t rng_seed, double dt = 0.01, double rel_precision = 1e-3) {
  require(delta > 0.0 && t >= 0.0, ErrorCode::invalid_argument, "comanence needs delta > 0 and t >= 0");
  const PairProbe probe(system, pair_budget, rng_seed);
  // Relative slack absorbs rounding in x + d u at t = 0.
  auto ok = [&](double d) { return probe.worst_separation(d, t, dt) <= delta * (1.0 + 1e-12); };
  if (ok(delta)) return delta;
  double lo = 0.0, hi = delta;
  while (hi - lo > rel_precision * hi) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
    if (hi < 1e-15) break;
  }
  return lo;
}

struct BegleitEstimate {
  double delta = 0.0;
  double immanence = 0.0;  // A_hat(delta / 3)
  double value = 0.0;      // b_hat(delta / 3, A_hat(delta / 3))
};

/// B(delta) = b(delta/3, A(delta/3)).
inline BegleitEstimate begleit_function(const FlowSystem& system, double delta, std::span<const Point> probes,
                                        double horizon, std::size_t pair_budget, std::uint64_t rng_seed,
                                        double dt = 0.01, const ImmanenceOptions& opt = {}) {
  BegleitEstimate b;
  b.delta = delta;
  b.immanence = global_immanence(system, delta / 3.0, probes, horizon, opt);
  require(std::isfinite(b.immanence), ErrorCode::immanence_unbounded,
          "global immanence at delta/3 is unbounded within the horizon");
  b.value = comanence_function(system, delta / 3.0, b.immanence, pair_budget, rng_seed, dt);
  return b;
}

/// Separation |Psi(x,t) - Psi(y,t)| on the forward grid k*dt, k = 0..horizon/dt.
inline std::vector<std::pair<double, double>> separation_series(const FlowSystem& system, std::span<const double> x,
                                                                std::span<const double> y, double horizon, double dt) {
  const auto policy = StepPolicy::fixed_time(dt);
  FlowSystem forward = system;
  forward.reversible = false;
  const OrbitSample sx = sample_orbit(forward, x, horizon, policy);
  const OrbitSample sy = sample_orbit(forward, y, horizon, policy);
  std::vector<std::pair<double, double>> out;
  const std::size_t n = std::min(sx.size(), sy.size());
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(sx.times[i], system.space().distance(sx.point(i), sy.point(i)));
  return out;
}

/// Smallest grid time after which the separation stays below delta through
/// the horizon. Unbounded when the last excursion falls in the second half of
/// the horizon, i.e. the orbits still part late.
inline double atque_fecit_saltus(const FlowSystem& system, std::span<const double> x, std::span<const double> y,
                                 double delta, double horizon, double dt = 0.01) {
  require(delta > 0.0, ErrorCode::invalid_argument, "delta must be positive");
  const auto series = separation_series(system, x, y, horizon, dt);
  double last = -1.0;
  for (const auto& [t, sep] : series)
    if (sep >= delta) last = t;
  if (last < 0.0) return 0.0;
  return last > 0.5 * horizon ? unbounded : last;
}

struct LaplaceWitness {
  double delta = 0.0;
  double epsilon = 0.0;  // 0 when none was found
  // Failing probe at the smallest tested epsilon, when epsilon is 0.
  Point probe;
  double failure_time = 0.0;
  double failure_separation = 0.0;
};

struct LaplaceVerdict {
  Point z;
  bool continuous = false;
  std::vector<LaplaceWitness> witnesses;
};

/// For each delta, looks for eps such that all probes within eps of z stay
/// within delta of z's orbit over the whole time grid. Continuous iff every
/// delta gets a positive eps.
inline LaplaceVerdict laplace_probe(const FlowSystem& system, std::span<const double> z, std::span<const double> deltas,
                                    double horizon, std::size_t probes, std::uint64_t rng_seed, double dt = 0.01,
                                    double min_ratio = 1e-12) {
  LaplaceVerdict v;
  v.z.assign(z.begin(), z.end());
  std::mt19937_64 rng(rng_seed);
  std::vector<Point> offsets;  // in the unit ball
  for (std::size_t k = 0; k < probes; ++k) offsets.push_back(random_in_ball(system.dim(), 1.0, rng));
  const auto policy = StepPolicy::fixed_time(dt);
  const OrbitSample sz = sample_orbit(system, z, horizon, policy);

  struct Failure {
    std::size_t probe = 0;
    double t = 0.0, sep = 0.0;
  };
  auto first_failure = [&](double eps, double delta) -> std::optional<Failure> {
    auto fails = parallel_map(offsets.size(), [&](std::size_t k) -> std::optional<Failure> {
      const Point x = displaced(system.space(), z, offsets[k], eps);
      try {
        const OrbitSample sx = sample_orbit(system, x, horizon, policy);
        const std::size_t n = std::min(sx.size(), sz.size());
        for (std::size_t i = 0; i < n; ++i) {
          const double sep = system.space().distance(sx.point(i), sz.point(i));
          if (sep >= delta) return Failure{k, sx.times[i], sep};
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::integration_diverged) throw;
        return Failure{k, horizon, unbounded};
      }
      return std::nullopt;
    });
    for (auto& f : fails)
      if (f) return f;
    return std::nullopt;
  };

  v.continuous = true;
  for (double delta : deltas) {
    LaplaceWitness w;
    w.delta = delta;
    double eps = delta;
    std::optional<Failure> fail = first_failure(eps, delta);
    while (fail && eps > min_ratio * delta) {
      eps *= 0.5;
      fail = first_failure(eps, delta);
    }
    if (fail) {
      w.epsilon = 0.0;
      w.probe = displaced(system.space(), z, offsets[fail->probe], eps);
      w.failure_time = fail->t;
      w.failure_separation = fail->sep;
      v.continuous = false;
    } else if (eps < delta) {
      // Passing eps found by halving; refine up toward the failing 2*eps.
      double lo = eps, hi = 2.0 * eps;
      while (hi - lo > 1e-3 * hi) {
        const double mid = 0.5 * (lo + hi);
        (first_failure(mid, delta) ? hi : lo) = mid;
      }
      w.epsilon = lo;
    } else {
      w.epsilon = delta;
    }
    v.witnesses.push_back(std::move(w));
  }
  return v;
}

struct ImmanenceEntry {
  Point x;
  double eps = 0.0;
  double value = 0.0;
};

struct ComanenceEntry {
  double delta = 0.0;
  double t = 0.0;
  double value = 0.0;
};

struct RegularityReport {
  double kappa_hat = 0.0;
  std::vector<ImmanenceEntry> immanence_table;
  std::vector<std::pair<double, double>> global_immanence;  // eps -> A_hat
  std::vector<ComanenceEntry> comanence_table;
  std::vector<BegleitEstimate> begleit_table;
  std::vector<LaplaceVerdict> laplace;
  std::size_t pair_budget = 0;
  std::size_t probe_count = 0;
};

struct RegularityOptions {
  std::size_t pair_budget = 200;
  std::size_t probes = 16;  // random states added to the given ones for A_hat
  std::vector<double> kappa_eps{1e-3, 1e-4, 1e-5};
  std::vector<double> immanence_eps{0.3, 0.1};
  double horizon = 200.0;
  std::vector<double> deltas{0.3};
  std::vector<double> comanence_times{1.0};
  double laplace_horizon = 50.0;
  std::uint64_t rng_seed = 1;
  double dt = 0.01;
};

/// All tables at once. A_hat(eps) is the maximum of the a_hat column over
/// the given states and the random probes, so it dominates every row.
inline RegularityReport regularity_report(const FlowSystem& system, std::span<const Point> states,
                                          const RegularityOptions& opt = {}) {
  RegularityReport r;
  r.pair_budget = opt.pair_budget;
  r.kappa_hat = estimate_flow_exponent(system, opt.pair_budget, opt.kappa_eps, opt.rng_seed);

  std::vector<Point> probes(states.begin(), states.end());
  std::mt19937_64 rng(opt.rng_seed + 1);
  for (std::size_t k = 0; k < opt.probes; ++k) probes.push_back(system.sample_point(rng));
  r.probe_count = probes.size();
  for (double eps : opt.immanence_eps) {
    auto a = parallel_map(probes.size(), [&](std::size_t k) { return immanence_time(system, probes[k], eps, opt.horizon); });
    for (std::size_t k = 0; k < states.size(); ++k) r.immanence_table.push_back({probes[k], eps, a[k]});
    r.global_immanence.emplace_back(eps, *std::max_element(a.begin(), a.end()));
  }

  for (double t : opt.comanence_times)
    for (double delta : opt.deltas)
      r.comanence_table.push_back({delta, t, comanence_function(system, delta, t, opt.pair_budget, opt.rng_seed + 2, opt.dt)});

  for (double delta : opt.deltas) {
    BegleitEstimate b;
    b.delta = delta;
    b.immanence = global_immanence(system, delta / 3.0, probes, opt.horizon);
    // No finite A_hat: no shadowing guarantee, recorded as B_hat = 0.
    if (std::isfinite(b.immanence))
      b.value = comanence_function(system, delta / 3.0, b.immanence, opt.pair_budget, opt.rng_seed + 2, opt.dt);
    r.begleit_table.push_back(b);
  }

  for (const auto& z : states)
    r.laplace.push_back(laplace_probe(system, z, opt.deltas, opt.laplace_horizon, opt.probes, opt.rng_seed + 3, opt.dt));
  return r;
}

}  // namespace flowkit
