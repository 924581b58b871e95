#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/linalg.hpp"
#include "flowkit/state_space.hpp"

namespace flowkit {

struct IntegratorConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  double max_step = 0.1;
  double initial_step = 1e-3;
  double min_step = 1e-13;
  // Non-periodic axes may overshoot the box by this fraction of their extent.
  double divergence_margin = 1.0;
  std::size_t max_steps = 100'000'000;
};

// canonical: (dq, dp) = (dH/dp, -dH/dq). sigma3_form: (sigma3 (x) 1_m) grad H,
// which is the canonical field with time reversed.
enum class SymplecticConvention { canonical, sigma3_form };

/// A deterministic flow on a bounded state space. Defined by a closed-form
/// map (x, t) -> x', by a vector field, or by a Hamiltonian on n = 2m.
class FlowSystem {
 public:
  using Field = std::function<void(std::span<const double>, std::span<double>)>;
  using Scalar = std::function<double(std::span<const double>)>;
  using Map = std::function<void(std::span<const double>, double, std::span<double>)>;
  using Region = std::function<bool(std::span<const double>)>;

  enum class Definition { closed_form, vector_field, hamiltonian };

  static FlowSystem from_vector_field(std::string name, StateSpace space, Field field) {
    FlowSystem s(std::move(name), std::move(space), Definition::vector_field);
    s.field_ = std::move(field);
    return s;
  }

  static FlowSystem from_hamiltonian(std::string name, StateSpace space, Scalar hamiltonian,
                                     Field gradient = {},
                                     SymplecticConvention convention = SymplecticConvention::canonical) {
    require(space.dim() % 2 == 0, ErrorCode::odd_dimension,
            "hamiltonian systems need even dimension, got " + std::to_string(space.dim()));
    FlowSystem s(std::move(name), std::move(space), Definition::hamiltonian);
    s.hamiltonian_ = std::move(hamiltonian);
    s.gradient_ = std::move(gradient);
    s.convention_ = convention;
    return s;
  }

  static FlowSystem from_closed_form(std::string name, StateSpace space, Map map) {
    FlowSystem s(std::move(name), std::move(space), Definition::closed_form);
    s.map_ = std::move(map);
    return s;
  }

  const std::string& name() const { return name_; }
  const StateSpace& space() const { return space_; }
  std::size_t dim() const { return space_.dim(); }
  Definition definition() const { return definition_; }
  SymplecticConvention convention() const { return convention_; }

  IntegratorConfig integrator;
  // False when backward-time orbits leave every bounded region (dissipative
  // systems); such systems are sampled on [0, T] only.
  bool reversible = true;
  // Optional sampling region inside the box (rejection sampling).
  Region domain;

  bool has_hamiltonian() const { return static_cast<bool>(hamiltonian_); }
  double hamiltonian(std::span<const double> x) const {
    require(has_hamiltonian(), ErrorCode::invalid_argument, name_ + " has no hamiltonian");
    return hamiltonian_(x);
  }

  void hamiltonian_gradient(std::span<const double> x, std::span<double> g) const {
    require(has_hamiltonian(), ErrorCode::invalid_argument, name_ + " has no hamiltonian");
    if (gradient_) {
      gradient_(x, g);
      return;
    }
    const double step = 1e-6 * space_.diagonal();
    Point y(x.begin(), x.end());
    for (std::size_t i = 0; i < dim(); ++i) {
      const double xi = y[i];
      y[i] = xi + step;
      const double fp = hamiltonian_(y);
      y[i] = xi - step;
      const double fm = hamiltonian_(y);
      y[i] = xi;
      g[i] = (fp - fm) / (2.0 * step);
    }
  }

  /// The induced field d/dt Psi(x, t) at t = 0.
  void field(std::span<const double> x, std::span<double> v) const {
    switch (definition_) {
      case Definition::vector_field:
        field_(x, v);
        return;
      case Definition::hamiltonian: {
        hamiltonian_gradient(x, v);
        const std::size_t m = dim() / 2;
        for (std::size_t i = 0; i < m; ++i) {
          const double gq = v[i];
          const double gp = v[m + i];
          if (convention_ == SymplecticConvention::canonical) {
            v[i] = gp;
            v[m + i] = -gq;
          } else {
            v[i] = -gp;
            v[m + i] = gq;
          }
        }
        return;
      }
      case Definition::closed_form: {
        const double dt = 1e-4;
        Point plus(dim()), minus(dim());
        map_(x, dt, plus);
        map_(x, -dt, minus);
        for (std::size_t i = 0; i < dim(); ++i)
          v[i] = space_.axis_difference(i, plus[i], minus[i]) / (2.0 * dt);
        return;
      }
    }
  }

  Point field(std::span<const double> x) const {
    Point v(dim());
    field(x, v);
    return v;
  }

  double speed(std::span<const double> x) const { return norm(field(x)); }

  bool is_fixed_point(std::span<const double> x) const {
    return speed(x) < 1e-12 * space_.diagonal();
  }

  void closed_form(std::span<const double> x, double t, std::span<double> out) const {
    map_(x, t, out);
    space_.wrap(out);
  }

  template <class Rng>
  Point sample_point(Rng& rng) const {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      Point x = space_.sample_uniform(rng);
      if (!domain || domain(x)) return x;
    }
    throw Error(ErrorCode::invalid_argument, "sampling domain of " + name_ + " is empty");
  }

  bool in_domain(std::span<const double> x) const { return !domain || domain(x); }

 private:
  FlowSystem(std::string name, StateSpace space, Definition def)
      : name_(std::move(name)), space_(std::move(space)), definition_(def) {}

  std::string name_;
  StateSpace space_;
  Definition definition_;
  SymplecticConvention convention_ = SymplecticConvention::canonical;
  Field field_;
  Scalar hamiltonian_;
  Field gradient_;
  Map map_;
};

/// One accepted integration step in elapsed time [t0, t1], with dense output.
/// Elapsed time is always nonnegative; the walker's direction gives the sign.
class StepView {
 public:
  double t0 = 0.0;
  double t1 = 0.0;

  virtual ~StepView() = default;
  // State at elapsed time t in [t0, t1], wrapped.
  virtual void interpolate(double t, std::span<double> out) const = 0;
};

/// Integrates one direction of an orbit with Dormand-Prince 5(4) and keeps
/// the last accepted step for dense output. Closed-form systems are stepped
/// on a uniform grid and interpolated exactly.
class OrbitWalker {
 public:
  OrbitWalker(const FlowSystem& system, std::span<const double> seed, int direction)
      : system_(&system), direction_(direction >= 0 ? 1 : -1), seed_(seed.begin(), seed.end()) {
    const std::size_t n = system.dim();
    y_ = seed_;
    system.space().wrap(y_);
    seed_ = y_;
    for (auto& k : k_) k.assign(n, 0.0);
    ytmp_.assign(n, 0.0);
    ynew_.assign(n, 0.0);
    h_ = system.integrator.initial_step;
    if (system.definition() != FlowSystem::Definition::closed_form) eval(y_, k_[0]);
    step_.owner = this;
    step_.y0.assign(n, 0.0);
    step_.y1.assign(n, 0.0);
    for (auto& r : step_.rcont) r.assign(n, 0.0);
  }

  OrbitWalker(const OrbitWalker&) = delete;
  OrbitWalker& operator=(const OrbitWalker&) = delete;

  int direction() const { return direction_; }
  double elapsed() const { return t_; }
  std::span<const double> state() const { return y_; }
  const FlowSystem& system() const { return *system_; }

  /// Advance until elapsed() >= target, calling on_step(const StepView&) for
  /// every accepted step. The most recent step is replayed first so that
  /// callers can consume it in pieces across successive calls. With
  /// land_exactly the final step is clipped so that elapsed() == target.
  template <class OnStep>
  void advance_to(double target, OnStep&& on_step, bool land_exactly = false) {
    if (has_step_ && step_.t1 > replayed_to_) on_step(static_cast<const StepView&>(step_));
    replayed_to_ = target;
    while (t_ < target) {
      double limit = land_exactly ? target - t_ : std::numeric_limits<double>::infinity();
      take_step(limit);
      on_step(static_cast<const StepView&>(step_));
    }
  }

  void advance_to(double target, bool land_exactly = true) {
    advance_to(target, [](const StepView&) {}, land_exactly);
  }

 private:
  struct Step final : StepView {
    const OrbitWalker* owner = nullptr;
    bool exact = false;
    std::vector<double> y0, y1;
    std::array<std::vector<double>, 5> rcont;

    void interpolate(double t, std::span<double> out) const override {
      const auto& space = owner->system_->space();
      if (exact) {
        owner->system_->closed_form(owner->seed_, owner->direction_ * t, out);
        return;
      }
      const double h = t1 - t0;
      const double theta = h > 0 ? std::clamp((t - t0) / h, 0.0, 1.0) : 1.0;
      const double theta1 = 1.0 - theta;
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = rcont[0][i] +
                 theta * (rcont[1][i] +
                          theta1 * (rcont[2][i] + theta * (rcont[3][i] + theta1 * rcont[4][i])));
      space.wrap(out);
    }
  };

  void eval(std::span<const double> x, std::span<double> out) const {
    system_->field(x, out);
    if (direction_ < 0)
      for (auto& c : out) c = -c;
  }

  void take_step(double limit) {
    const auto& cfg = system_->integrator;
    if (++steps_ > cfg.max_steps)
      throw Error(ErrorCode::step_underflow, "step budget exhausted on " + system_->name());
    if (system_->definition() == FlowSystem::Definition::closed_form) {
      const double h = std::min(cfg.max_step, limit);
      step_.exact = true;
      step_.t0 = t_;
      step_.t1 = t_ + h;
      t_ += h;
      system_->closed_form(seed_, direction_ * t_, y_);
      has_step_ = true;
      return;
    }
    dopri_step(limit);
  }

  void dopri_step(double limit) {
    // Dormand-Prince 5(4) coefficients with the standard dense output.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    (void)c2, (void)c3, (void)c4, (void)c5;

    const auto& cfg = system_->integrator;
    const auto& space = system_->space();
    const std::size_t n = y_.size();
    auto& [k1, k2, k3, k4, k5, k6, k7] = k_;

    while (true) {
      double h = std::min({h_, cfg.max_step, limit});
      bool clipped = h >= limit;
      if (h < cfg.min_step && !clipped)
        throw Error(ErrorCode::step_underflow,
                    "step size " + std::to_string(h) + " below minimum on " + system_->name());

      for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y_[i] + h * a21 * k1[i];
      eval(ytmp_, k2);
      for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y_[i] + h * (a31 * k1[i] + a32 * k2[i]);
      eval(ytmp_, k3);
      for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y_[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      eval(ytmp_, k4);
      for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y_[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      eval(ytmp_, k5);
      for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y_[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      eval(ytmp_, k6);
      for (std::size_t i = 0; i < n; ++i)
        ynew_[i] = y_[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
      eval(ynew_, k7);

      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
        err += (e / sc) * (e / sc);
      }
      err = std::sqrt(err / static_cast<double>(n));
      if (!std::isfinite(err)) err = 1e10;

      if (err <= 1.0) {
        const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double ydiff = ynew_[i] - y_[i];
          const double bspl = h * k1[i] - ydiff;
          step_.rcont[0][i] = y_[i];
          step_.rcont[1][i] = ydiff;
          step_.rcont[2][i] = bspl;
          step_.rcont[3][i] = ydiff - h * k7[i] - bspl;
          step_.rcont[4][i] =
              h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        }
        step_.exact = false;
        step_.t0 = t_;
        t_ += h;
        step_.t1 = t_;
        std::swap(y_, ynew_);
        if (!space.contains(y_, cfg.divergence_margin))
          throw Error(ErrorCode::integration_diverged,
                      system_->name() + " left the state space at elapsed time " + std::to_string(t_));
        space.wrap(y_);
        std::swap(k1, k7);  // FSAL
        if (!clipped) h_ = h * factor;
        has_step_ = true;
        return;
      }
      h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h_ < cfg.min_step)
        throw Error(ErrorCode::step_underflow, "cannot meet tolerance on " + system_->name());
    }
  }

  const FlowSystem* system_;
  int direction_;
  Point seed_;
  Point y_;
  double t_ = 0.0;
  double h_ = 1e-3;
  std::size_t steps_ = 0;
  std::array<std::vector<double>, 7> k_;
  std::vector<double> ytmp_, ynew_;
  Step step_;
  bool has_step_ = false;
  double replayed_to_ = 0.0;
};

/// Psi(x, t). Negative t integrates the negated field.
inline Point evaluate(const FlowSystem& system, std::span<const double> x, double t) {
  require(std::isfinite(t), ErrorCode::invalid_argument, "time must be finite");
  require(x.size() == system.dim(), ErrorCode::invalid_argument, "point dimension mismatch");
  if (system.definition() == FlowSystem::Definition::closed_form) {
    Point out(system.dim());
    system.closed_form(x, t, out);
    return out;
  }
  if (t == 0.0) return system.space().wrapped(Point(x.begin(), x.end()));
  OrbitWalker walker(system, x, t > 0 ? 1 : -1);
  walker.advance_to(std::abs(t), true);
  return Point(walker.state().begin(), walker.state().end());
}

/// d/dt Psi(x, t) at t = 0.
inline Point induced_field(const FlowSystem& system, std::span<const double> x) {
  require(system.definition() != FlowSystem::Definition::hamiltonian || system.dim() % 2 == 0,
          ErrorCode::odd_dimension, "hamiltonian on odd dimension");
  return system.field(x);
}

struct StepPolicy {
  enum class Kind { fixed_time, arc_length };
  Kind kind = Kind::fixed_time;
  double step = 0.01;

  static StepPolicy fixed_time(double dt) { return {Kind::fixed_time, dt}; }
  static StepPolicy arc_length(double ds) { return {Kind::arc_length, ds}; }
};

/// Emits points of a walker at multiples of a fixed time step, or at (nearly)
/// equal arc-length spacing. Stateful across successive advance_to calls.
class PointEmitter {
 public:
  using Sink = std::function<void(double elapsed, std::span<const double> point)>;

  PointEmitter(const StateSpace& space, std::span<const double> start, StepPolicy policy)
      : space_(&space), policy_(policy), tmp_(start.size()) {
    require(policy.step > 0.0, ErrorCode::invalid_argument, "step policy needs a positive step");
  }

  void consume(const StepView& step, double limit, const Sink& sink) {
    const double end = std::min(step.t1, limit);
    if (end <= cursor_) return;
    if (policy_.kind == StepPolicy::Kind::fixed_time) {
      while (true) {
        const double t = static_cast<double>(count_ + 1) * policy_.step;
        if (t > end + 1e-12 * std::max(1.0, end)) break;
        step.interpolate(std::min(t, step.t1), tmp_);
        ++count_;
        sink(t, tmp_);
      }
      cursor_ = end;
      return;
    }
    // Arc length: subdivide finely, accumulate chords, emit when the target
    // arc step is reached.
    const double begin = std::max(cursor_, step.t0);
    const double span_t = end - begin;
    Point prev(tmp_.size()), sub(tmp_.size());
    step.interpolate(begin, prev);
    step.interpolate(end, sub);
    const double rough = space_->distance(prev, sub);
    const int pieces = std::max(4, static_cast<int>(std::ceil(8.0 * rough / policy_.step)));
    double t_prev = begin;
    for (int j = 1; j <= pieces; ++j) {
      const double t = begin + span_t * static_cast<double>(j) / pieces;
      step.interpolate(t, sub);
      const double d = space_->distance(prev, sub);
      if (acc_ + d >= policy_.step && d > 0.0) {
        const double frac = (policy_.step - acc_) / d;
        const double te = t_prev + frac * (t - t_prev);
        step.interpolate(te, tmp_);
        sink(te, tmp_);
        acc_ = space_->distance(tmp_, sub);
      } else {
        acc_ += d;
      }
      prev = sub;
      t_prev = t;
    }
    cursor_ = end;
  }

 private:
  const StateSpace* space_;
  StepPolicy policy_;
  double cursor_ = 0.0;
  std::size_t count_ = 0;
  double acc_ = 0.0;
  Point tmp_;
};

/// Time-stamped finite sampling of one trajectory.
struct OrbitSample {
  Point seed;
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> points;  // row-major, dim per row
  std::vector<double> speeds;
  double horizon = 0.0;
  StepPolicy policy;

  std::size_t size() const { return times.size(); }
  std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
  std::size_t index_of_zero() const {
    return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), 0.0) - times.begin());
  }
};

/// Samples the orbit through seed on [-horizon, horizon], or on [0, horizon]
/// for non-reversible systems.
inline OrbitSample sample_orbit(const FlowSystem& system, std::span<const double> seed, double horizon,
                                StepPolicy policy) {
  require(horizon > 0.0, ErrorCode::invalid_argument, "horizon must be positive");
  require(seed.size() == system.dim(), ErrorCode::invalid_argument, "seed dimension mismatch");
  const std::size_t n = system.dim();
  OrbitSample out;
  out.seed = system.space().wrapped(Point(seed.begin(), seed.end()));
  out.dim = n;
  out.horizon = horizon;
  out.policy = policy;

  auto run = [&](int direction) {
    std::vector<double> ts, ps;
    if (system.is_fixed_point(out.seed)) {
      if (policy.kind == StepPolicy::Kind::fixed_time) {
        for (double t = policy.step; t <= horizon + 1e-12; t += policy.step) {
          ts.push_back(t);
          ps.insert(ps.end(), out.seed.begin(), out.seed.end());
        }
      }
      return std::pair{ts, ps};
    }
    OrbitWalker walker(system, out.seed, direction);
    PointEmitter emitter(system.space(), out.seed, policy);
    auto sink = [&](double t, std::span<const double> p) {
      ts.push_back(t);
      ps.insert(ps.end(), p.begin(), p.end());
    };
    walker.advance_to(horizon, [&](const StepView& s) { emitter.consume(s, horizon, sink); });
    return std::pair{ts, ps};
  };

  if (system.reversible) {
    auto [tb, pb] = run(-1);
    for (std::size_t i = tb.size(); i-- > 0;) {
      out.times.push_back(-tb[i]);
      out.points.insert(out.points.end(), pb.begin() + static_cast<std::ptrdiff_t>(i * n),
                        pb.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
  }
  out.times.push_back(0.0);
  out.points.insert(out.points.end(), out.seed.begin(), out.seed.end());
  {
    auto [tf, pf] = run(1);
    out.times.insert(out.times.end(), tf.begin(), tf.end());
    out.points.insert(out.points.end(), pf.begin(), pf.end());
  }
  out.speeds.reserve(out.times.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.speeds.push_back(system.speed(out.point(i)));
  return out;
}

}  // namespace flowkit
