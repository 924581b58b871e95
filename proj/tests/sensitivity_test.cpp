#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "flowkit/sensitivity.hpp"
#include "flowkit/systems.hpp"

namespace flowkit {
namespace {

constexpr double pi = std::numbers::pi;
const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

FlowSystem lorenz() { return systems::lorenz(10.0, 28.0, 8.0 / 3.0); }

Point on_attractor() { return evaluate(lorenz(), Point{1, 1, 1}, 50.0); }

ClosureCloud circle(double r, double h) {
  const double sched[] = {4 * pi, 8 * pi};
  return approximate_closure(systems::harmonic_oscillator(), Point{r, 0}, h, sched);
}

// Coarse Lorenz closure that saturates within a few seconds.
const ClosureCloud& lorenz_closure() {
  static const ClosureCloud c = [] {
    std::vector<double> sched;
    for (double T = 100; T <= 12800; T *= 2) sched.push_back(T);
    ClosureOptions opt;
    opt.saturation = 0.01;
    return approximate_closure(lorenz(), on_attractor(), 2.0, sched, opt);
  }();
  return c;
}

TEST(ResolutionField, ContractionIsInsensitive) {
  auto sys = systems::linear_contraction(1.0, 1);
  const double eps[] = {1e-2, 1e-4, 1e-6};
  auto scan = resolution_field(sys, Point{0.5}, eps, 4, {5.0, 20.0}, 1);
  EXPECT_TRUE(scan.sentinel());
  ASSERT_EQ(scan.witnesses.size(), 3u);
  for (const auto& w : scan.witnesses) EXPECT_FALSE(w.qualified);
}

TEST(ResolutionField, RotationStaysBelowFloor) {
  auto osc = systems::harmonic_oscillator();
  const double eps[] = {1e-3, 1e-6};
  auto scan = resolution_field(osc, Point{1, 0}, eps, 6, {20.0, 60.0}, 2);
  EXPECT_TRUE(scan.sentinel());
  for (const auto& w : scan.witnesses) EXPECT_NEAR(w.separation, w.eps, 1e-3 * w.eps + 1e-9);
}

TEST(ResolutionField, LorenzSeparatesFromTinyPerturbations) {
  const double eps[] = {1e-2, 1e-4, 1e-6, 1e-8};
  auto scan = resolution_field(lorenz(), on_attractor(), eps, 8, {20.0, 60.0}, 3);
  EXPECT_GT(scan.delta_hat, 10.0);
  for (const auto& w : scan.witnesses) {
    EXPECT_TRUE(w.qualified);
    EXPECT_GE(w.separation, scan.delta_hat);
    EXPECT_GE(w.time, 20.0);
    EXPECT_LE(w.time, 60.0);
  }
}

TEST(ResolutionField, SentinelMonotonicity) {
  const double eps[] = {1e-2, 1e-4, 1e-6, 1e-8};
  const double finer[] = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10};
  auto base = resolution_field(lorenz(), on_attractor(), eps, 8, {20.0, 60.0}, 3);
  ASSERT_FALSE(base.sentinel());
  EXPECT_FALSE(resolution_field(lorenz(), on_attractor(), finer, 8, {20.0, 60.0}, 3).sentinel());
  auto longer = resolution_field(lorenz(), on_attractor(), eps, 8, {20.0, 90.0}, 3);
  EXPECT_FALSE(longer.sentinel());
  EXPECT_GE(longer.delta_hat, base.delta_hat);
}

TEST(ResolutionField, RejectsBadArguments) {
  auto osc = systems::harmonic_oscillator();
  const double rising[] = {1e-4, 1e-2};
  const double ok[] = {1e-2};
  EXPECT_THROW(resolution_field(osc, Point{1, 0}, rising, 2, {1.0, 2.0}, 1), Error);
  EXPECT_THROW(resolution_field(osc, Point{1, 0}, ok, 2, {2.0, 1.0}, 1), Error);
}

TEST(Coherence, CircleIsOneComponent) {
  auto osc = systems::harmonic_oscillator();
  auto c = circle(1.0, 0.02);
  for (double ts : {1.0, 0.92, 1.08}) {
    auto r = coherence_check(c, osc, ts);
    EXPECT_TRUE(r.coherent) << ts;
    EXPECT_EQ(r.scc_count, 1u) << ts;
  }
}

TEST(Coherence, FixedPointIsTrivial) {
  auto osc = systems::harmonic_oscillator();
  const double sched[] = {10.0};
  auto c = approximate_closure(osc, Point{0, 0}, 0.05, sched);
  auto r = coherence_check(c, osc, 1.0);
  EXPECT_TRUE(r.coherent);
  EXPECT_EQ(r.cells, 1u);
}

TEST(Coherence, TwoMergedCirclesAreNot) {
  auto osc = systems::harmonic_oscillator();
  auto merged = circle(0.5, 0.02);
  const auto outer = circle(1.2, 0.02);
  for (CellKey k : outer.grid.cells()) merged.grid.insert_cell(k);
  merged.cloud = merged.grid.centers();
  auto r = coherence_check(merged, osc, 1.0);
  EXPECT_FALSE(r.coherent);
  EXPECT_EQ(r.scc_count, 2u);
}

TEST(Coherence, Preconditions) {
  auto osc = systems::harmonic_oscillator();
  auto c = circle(1.0, 0.05);
  ASSERT_TRUE(c.period);
  EXPECT_THROW(coherence_check(c, osc, 2 * *c.period), Error);
  c.converged = false;
  try {
    coherence_check(c, osc, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_converged);
  }
}

TEST(Coherence, LorenzStableUnderStepPerturbation) {
  const auto& c = lorenz_closure();
  ASSERT_TRUE(c.converged);
  for (double ts : {1.0, 0.92, 1.08}) EXPECT_TRUE(coherence_check(c, lorenz(), ts).coherent) << ts;
}

TEST(Classify, OscillatorOriginAndCircle) {
  auto osc = systems::harmonic_oscillator();
  ClassifyConfig cfg;
  cfg.grid_h = 0.02;
  cfg.schedule = {4 * pi, 8 * pi};
  auto origin = classify_state(osc, Point{0, 0}, cfg);
  EXPECT_EQ(origin.kind, StateKind::fixed_point);
  EXPECT_TRUE(origin.scan.sentinel());
  EXPECT_TRUE(origin.coherent());

  auto ring = classify_state(osc, Point{1, 0}, cfg);
  EXPECT_EQ(ring.kind, StateKind::cycle);
  ASSERT_TRUE(ring.period);
  EXPECT_NEAR(*ring.period, 2 * pi, 1e-6);
  EXPECT_TRUE(ring.scan.sentinel());
  EXPECT_TRUE(ring.coherent());
  EXPECT_FALSE(ring.tension);
}

TEST(Classify, OrbitInvariantKind) {
  ClassifyConfig cfg;
  cfg.grid_h = 0.05;
  cfg.schedule = {20.0, 40.0, 80.0};
  cfg.eps_grid = {1e-3};
  cfg.probes = 2;
  for (auto sys : {systems::harmonic_oscillator(), systems::pendulum(), systems::linear_contraction(1.0, 2)}) {
    const Point x{0.7, 0.4};
    const auto base = classify_state(sys, x, cfg);
    for (double s : {0.7, 2.9}) EXPECT_EQ(classify_state(sys, evaluate(sys, x, s), cfg).kind, base.kind) << sys.name();
    // Insensitive with a saturated closure: trivial kind.
    if (base.scan.sentinel() && base.closure.converged) {
      EXPECT_NE(base.kind, StateKind::non_trivial_zimmer) << sys.name();
    }
  }
}

TEST(Classify, IrrationalTorusFlagsTension) {
  ClassifyConfig cfg;
  cfg.grid_h = 0.05;
  cfg.schedule = {200.0, 400.0, 800.0};
  cfg.eps_grid = {1e-3, 1e-5};
  cfg.probes = 4;
  auto c = classify_state(systems::torus_flow(golden), Point{0.1, 0.2}, cfg);
  EXPECT_EQ(c.kind, StateKind::non_trivial_zimmer);
  EXPECT_TRUE(c.scan.sentinel());
  EXPECT_TRUE(c.tension);
}

TEST(MaxSensitivity, CircleDiameterAndSentinel) {
  const double h = 0.02;
  auto c = circle(1.0, h);
  SensitivityScan none;
  auto m = max_sensitivity_probe(c, none);
  EXPECT_NEAR(m.diameter, 2.0, 2 * h);
  EXPECT_FALSE(m.defined);
  EXPECT_EQ(m.ratio, no_sensitivity);

  SensitivityScan some;
  some.delta_hat = 1.0;
  auto k = max_sensitivity_probe(c, some);
  EXPECT_TRUE(k.defined);
  EXPECT_NEAR(k.ratio, 0.5, 0.02);
}

TEST(MaxSensitivity, LorenzRatioInUnitInterval) {
  const double eps[] = {1e-2, 1e-4, 1e-6, 1e-8};
  auto scan = resolution_field(lorenz(), on_attractor(), eps, 8, {20.0, 60.0}, 3);
  auto m = max_sensitivity_probe(lorenz_closure(), scan);
  EXPECT_TRUE(m.defined);
  EXPECT_GT(m.ratio, 0.0);
  EXPECT_LE(m.ratio, 1.0 + 2.0 / m.diameter);
}

}  // namespace
}  // namespace flowkit
