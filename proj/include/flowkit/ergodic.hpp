#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/observables.hpp"
#include "flowkit/zimmer.hpp"

namespace flowkit {

struct AverageEstimate {
  std::vector<double> value;  // at the last horizon
  std::vector<double> horizons;
  std::vector<std::vector<double>> partials;
  double cauchy_gap = unbounded;
  double tol = 0.0;
  bool converged = false;

  double scalar() const { return value.at(0); }
};

// Cauchy gap over the last three partials; needs at least two horizons.
inline void finish_estimate(AverageEstimate& e) {
  e.value = e.partials.back();
  const std::size_t n = e.partials.size();
  if (n >= 2) {
    e.cauchy_gap = 0.0;
    for (std::size_t k = n >= 3 ? n - 2 : 1; k < n; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        const double d = e.partials[k][i] - e.partials[k - 1][i];
        s += d * d;
      }
      e.cauchy_gap = std::max(e.cauchy_gap, std::sqrt(s));
    }
  }
  e.converged = e.cauchy_gap < e.tol;
}

/// Composite trapezoid integrals of g along the orbit over [-T, T] ([0, T]
/// for non-reversible systems) at each horizon T, with step at most dt.
/// Returns the integrals divided by the interval length.
/// g(point, speed, out) writes m components.
template <class G>
std::vector<std::vector<double>> orbit_means(const FlowSystem& system, std::span<const double> x,
                                             std::span<const double> horizons, double dt, std::size_t m, G&& g) {
  require(!horizons.empty(), ErrorCode::invalid_argument, "horizons must be nonempty");
  for (std::size_t i = 0; i < horizons.size(); ++i)
    require(horizons[i] > 0.0 && (i == 0 || horizons[i] > horizons[i - 1]), ErrorCode::invalid_argument,
            "horizons must be positive and increasing");
  require(dt > 0.0, ErrorCode::invalid_argument, "dt must be positive");
  const std::size_t n = system.dim();
  const Point seed = system.space().wrapped(Point(x.begin(), x.end()));
  std::vector<double> g0(m);
  g(std::span<const double>(seed), system.speed(seed), std::span<double>(g0));

  std::vector<std::vector<double>> sums(horizons.size(), std::vector<double>(m, 0.0));
  auto run = [&](int direction) {
    if (system.is_fixed_point(seed)) {
      for (std::size_t j = 0; j < horizons.size(); ++j)
        for (std::size_t c = 0; c < m; ++c) sums[j][c] += horizons[j] * g0[c];
      return;
    }
    OrbitWalker walker(system, seed, direction);
    std::vector<double> acc(m, 0.0), prev = g0, cur(m);
    Point p(n);
    double cursor = 0.0;
    // Each span between horizons gets its own uniform grid of step <= dt,
    // so whole periods are integrated with the periodic trapezoid rule.
    std::size_t j = 0, k = 1;
    auto span_steps = [&](std::size_t jj) {
      const double a = jj == 0 ? 0.0 : horizons[jj - 1];
      return std::max<double>(1.0, std::ceil((horizons[jj] - a) / dt - 1e-9));
    };
    double steps = span_steps(0);
    walker.advance_to(horizons.back(), [&](const StepView& s) {
      while (j < horizons.size()) {
        const double a = j == 0 ? 0.0 : horizons[j - 1];
        const double tau = static_cast<double>(k) == steps ? horizons[j]
                                                           : a + (horizons[j] - a) * static_cast<double>(k) / steps;
        if (tau > s.t1) break;
        s.interpolate(tau, p);
        g(std::span<const double>(p), system.speed(p), std::span<double>(cur));
        for (std::size_t c = 0; c < m; ++c) acc[c] += 0.5 * (tau - cursor) * (prev[c] + cur[c]);
        prev = cur;
        cursor = tau;
        if (static_cast<double>(k) == steps) {
          for (std::size_t c = 0; c < m; ++c) sums[j][c] += acc[c];
          ++j;
          k = 1;
          if (j < horizons.size()) steps = span_steps(j);
        } else {
          ++k;
        }
      }
    });
  };
  run(1);
  const bool both = system.reversible;
  if (both) run(-1);
  for (std::size_t j = 0; j < horizons.size(); ++j)
    for (auto& v : sums[j]) v /= (both ? 2.0 : 1.0) * horizons[j];
  return sums;
}

/// Long-time mean of the state along the orbit (wrapped coordinates on
/// periodic axes).
inline AverageEstimate kinecentric_field(const FlowSystem& system, std::span<const double> x,
                                         std::span<const double> horizons, double tol, double dt = 0.01) {
  AverageEstimate e;
  e.horizons.assign(horizons.begin(), horizons.end());
  e.tol = tol;
  e.partials = orbit_means(system, x, horizons, dt, system.dim(),
                           [](std::span<const double> p, double, std::span<double> out) {
                             std::copy(p.begin(), p.end(), out.begin());
                           });
  finish_estimate(e);
  return e;
}

/// Omega(x) against Omega(Psi(x, s)) for each s, at the same horizons.
inline bool constancy_check(const FlowSystem& system, std::span<const double> x, std::span<const double> s_grid,
                            std::span<const double> horizons, double tol, double cauchy_tol, double dt = 0.01) {
  const AverageEstimate base = kinecentric_field(system, x, horizons, cauchy_tol, dt);
  require(base.converged, ErrorCode::not_converged, "kinecentric estimate did not converge");
  for (double s : s_grid) {
    const AverageEstimate other = kinecentric_field(system, evaluate(system, x, s), horizons, cauchy_tol, dt);
    require(other.converged, ErrorCode::not_converged, "kinecentric estimate did not converge");
    double d = 0.0;
    for (std::size_t i = 0; i < base.value.size(); ++i)
      d += (base.value[i] - other.value[i]) * (base.value[i] - other.value[i]);
    if (!(std::sqrt(d) < tol)) return false;
  }
  return true;
}

enum class Weight { plain, speed_reciprocal };

inline std::string to_string(Weight w) { return w == Weight::plain ? "plain" : "speed_reciprocal"; }

struct BirkhoffOptions {
  double dt = 0.01;
  // Integrand f*f/|v| an alternative reading, kept for comparison.
  bool squared_integrand = false;
};

struct BirkhoffAverage {
  Weight weight = Weight::plain;
  AverageEstimate raw;         // (1/2T) int f w dt
  AverageEstimate normalized;  // raw / ((1/2T) int w dt); equals raw for plain
  bool squared_integrand = false;
};

/// Time mean of f along the orbit, plain or weighted by 1/|v|.
inline BirkhoffAverage birkhoff_average(const FlowSystem& system, std::span<const double> x, const Observable& f,
                                        Weight weight, std::span<const double> horizons, double tol,
                                        const BirkhoffOptions& opt = {}) {
  const double floor = 1e-9 * system.space().diagonal();
  double min_speed = unbounded;
  const bool reciprocal = weight == Weight::speed_reciprocal;
  if (reciprocal) require(!system.is_fixed_point(x), ErrorCode::speed_vanishes, "speed vanishes at a fixed point");
  auto partials = orbit_means(system, x, horizons, opt.dt, 2,
                              [&](std::span<const double> p, double speed, std::span<double> out) {
                                double v = f(p);
                                if (opt.squared_integrand) v *= v;
                                if (reciprocal) {
                                  min_speed = std::min(min_speed, speed);
                                  out[0] = v / speed;
                                  out[1] = 1.0 / speed;
                                } else {
                                  out[0] = v;
                                  out[1] = 1.0;
                                }
                              });
  if (reciprocal) require(min_speed >= floor, ErrorCode::speed_vanishes, "sampled speed fell below the floor");
  BirkhoffAverage out;
  out.weight = weight;
  out.squared_integrand = opt.squared_integrand;
  for (auto* e : {&out.raw, &out.normalized}) {
    e->horizons.assign(horizons.begin(), horizons.end());
    e->tol = tol;
  }
  for (const auto& p : partials) {
    out.raw.partials.push_back({p[0]});
    out.normalized.partials.push_back({p[0] / p[1]});
  }
  finish_estimate(out.raw);
  finish_estimate(out.normalized);
  return out;
}

/// Uniform mean of f over the occupied cell centers.
inline double space_average_over_closure(const ClosureCloud& closure, const Observable& f) {
  require(closure.converged, ErrorCode::not_converged, "closure did not saturate");
  require(!closure.cloud.empty(), ErrorCode::empty_cloud, "closure has no cells");
  double s = 0.0;
  for (std::size_t i = 0; i < closure.cloud.size(); ++i) s += f(closure.cloud.point(i));
  return s / static_cast<double>(closure.cloud.size());
}

struct TimeSpaceReport {
  std::string observable;
  double time_plain = 0.0;
  double time_speed_raw = 0.0;
  double time_speed_normalized = 0.0;
  double space = 0.0;
  double gap_plain = 0.0;
  double gap_speed = 0.0;
  bool fixed_point = false;
  bool converged = false;
  std::size_t closure_cells = 0;
};

inline TimeSpaceReport time_vs_space_report(const FlowSystem& system, std::span<const double> x, const Observable& f,
                                            double grid_h, std::span<const double> horizons, double tol,
                                            const BirkhoffOptions& opt = {}) {
  TimeSpaceReport r;
  r.observable = f.name;
  const ClosureCloud closure = approximate_closure(system, x, grid_h, horizons);
  r.space = space_average_over_closure(closure, f);
  r.closure_cells = closure.grid.occupied_count();
  if (system.is_fixed_point(x)) {
    // Every weighting reduces to the value at the point.
    r.fixed_point = true;
    r.time_plain = r.time_speed_normalized = f(system.space().wrapped(Point(x.begin(), x.end())));
    r.time_speed_raw = unbounded;
    r.converged = true;
  } else {
    const auto plain = birkhoff_average(system, x, f, Weight::plain, horizons, tol, opt);
    const auto speed = birkhoff_average(system, x, f, Weight::speed_reciprocal, horizons, tol, opt);
    r.time_plain = plain.raw.scalar();
    r.time_speed_raw = speed.raw.scalar();
    r.time_speed_normalized = speed.normalized.scalar();
    r.converged = plain.raw.converged && speed.normalized.converged;
  }
  r.gap_plain = std::abs(r.time_plain - r.space);
  r.gap_speed = std::abs(r.time_speed_normalized - r.space);
  return r;
}

}  // namespace flowkit
