#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "flowkit/systems.hpp"
#include "flowkit/zimmer.hpp"

namespace flowkit {
namespace {

constexpr double pi = std::numbers::pi;
const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

TEST(DetectCycle, OscillatorPeriod) {
  auto osc = systems::harmonic_oscillator();
  auto s = sample_orbit(osc, Point{1, 0}, 8.0, StepPolicy::fixed_time(0.01));
  auto p = detect_cycle(osc, s, 1e-8);
  ASSERT_TRUE(p);
  EXPECT_NEAR(*p, 2 * pi, 1e-8);
}

TEST(DetectCycle, RationalTorusReturnsAfterThree) {
  auto torus = systems::torus_flow(1.0 / 3.0);
  auto s = sample_orbit(torus, Point{0, 0}, 5.0, StepPolicy::fixed_time(0.01));
  auto p = detect_cycle(torus, s, 1e-8);
  ASSERT_TRUE(p);
  EXPECT_NEAR(*p, 3.0, 1e-8);
}

TEST(DetectCycle, IrrationalTorusNeverReturns) {
  auto torus = systems::torus_flow(golden);
  auto s = sample_orbit(torus, Point{0, 0}, 1e3, StepPolicy::fixed_time(0.005));
  EXPECT_FALSE(detect_cycle(torus, s, 1e-8));
}

TEST(Closure, OscillatorIsCycleOnUnitRing) {
  auto osc = systems::harmonic_oscillator();
  const double sched[] = {4 * pi};
  auto c = approximate_closure(osc, Point{1, 0}, 0.02, sched);
  EXPECT_EQ(c.kind, ClosureKind::cycle);
  ASSERT_TRUE(c.period);
  EXPECT_NEAR(*c.period, 2 * pi, 1e-6);
  EXPECT_TRUE(c.converged);
  EXPECT_TRUE(c.grid.occupied(*c.grid.cell_of(c.seed)));
  for (std::size_t i = 0; i < c.cloud.size(); ++i) EXPECT_NEAR(norm(c.cloud.point(i)), 1.0, 0.02);
  // a ring of width ~1 cell: circumference / h to a few times that
  EXPECT_GT(c.cloud.size(), 300u);
  EXPECT_LT(c.cloud.size(), 1000u);
}

TEST(Closure, FixedPointIsSingleCell) {
  auto osc = systems::harmonic_oscillator();
  const double sched[] = {10.0, 100.0};
  auto c = approximate_closure(osc, Point{0, 0}, 0.02, sched);
  EXPECT_EQ(c.kind, ClosureKind::fixed_point);
  EXPECT_EQ(c.grid.occupied_count(), 1u);
}

TEST(Closure, GoldenTorusFillsTheTorus) {
  auto torus = systems::torus_flow(golden);
  const double sched[] = {100.0, 1000.0, 10000.0};
  auto c = approximate_closure(torus, Point{0, 0}, 0.02, sched);
  EXPECT_EQ(c.kind, ClosureKind::non_trivial_candidate);
  EXPECT_GT(static_cast<double>(c.grid.occupied_count()) / static_cast<double>(c.grid.total_cells()), 0.99);
}

TEST(Closure, CycleSaturatesUnderDoubledHorizon) {
  auto osc = systems::harmonic_oscillator();
  const double a[] = {4 * pi}, b[] = {8 * pi};
  auto c1 = approximate_closure(osc, Point{0.7, 0.3}, 0.02, a);
  auto c2 = approximate_closure(osc, Point{0.7, 0.3}, 0.02, b);
  auto changed = [](const ClosureCloud& x, const ClosureCloud& y) {
    std::size_t n = 0;
    for (CellKey k : x.grid.cells()) n += !y.grid.occupied(k);
    for (CellKey k : y.grid.cells()) n += !x.grid.occupied(k);
    return static_cast<double>(n);
  };
  EXPECT_LT(changed(c1, c2), 0.01 * static_cast<double>(c1.grid.occupied_count()));

  // Without return detection the plain arc sampling only misses cells the
  // circle clips at a corner.
  ClosureOptions no_cycle;
  no_cycle.cycle_tol = 1e-300;
  auto c3 = approximate_closure(osc, Point{0.7, 0.3}, 0.02, b, no_cycle);
  for (CellKey k : c3.grid.cells()) EXPECT_TRUE(c1.grid.occupied(k));
  EXPECT_LT(changed(c1, c3), 0.02 * static_cast<double>(c1.grid.occupied_count()));
}

TEST(SameZimmer, ReflexiveAndSameCircle) {
  auto osc = systems::harmonic_oscillator();
  const double sched[] = {4 * pi};
  auto a = approximate_closure(osc, Point{1, 0}, 0.02, sched);
  auto b = approximate_closure(osc, Point{0, 1}, 0.02, sched);
  auto c = approximate_closure(osc, Point{2, 0}, 0.02, sched);
  EXPECT_TRUE(same_zimmer(a, a, 0.0));
  EXPECT_TRUE(same_zimmer(a, b, 2.0));
  EXPECT_EQ(same_zimmer(a, b, 2.0), same_zimmer(b, a, 2.0));
  EXPECT_FALSE(same_zimmer(a, c, 2.0));
  EXPECT_NEAR(closure_distance(a, c), 1.0, 0.03);
}

TEST(SameZimmer, GridMismatch) {
  auto osc = systems::harmonic_oscillator();
  const double sched[] = {4 * pi};
  auto a = approximate_closure(osc, Point{1, 0}, 0.02, sched);
  auto b = approximate_closure(osc, Point{1, 0}, 0.03, sched);
  try {
    same_zimmer(a, b, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::grid_mismatch);
  }
}

TEST(SameZimmer, InvariantAlongOrbit) {
  auto pend = systems::pendulum();
  const double sched[] = {20.0, 40.0, 80.0};
  const Point x{0.5, 0.4};
  auto base = approximate_closure(pend, x, 0.05, sched);
  for (double s : {0.7, 3.3, -5.1}) {
    auto moved = approximate_closure(pend, evaluate(pend, x, s), 0.05, sched);
    EXPECT_TRUE(same_zimmer(base, moved, 2.0)) << "shift " << s;
  }
}

TEST(Partition, OscillatorRadiiAreDistinct) {
  auto osc = systems::harmonic_oscillator();
  std::vector<Point> seeds;
  for (int k = 1; k <= 20; ++k) seeds.push_back(Point{0.1 * k, 0.0});
  const double sched[] = {4 * pi};
  auto part = build_natural_partition(osc, seeds, 0.02, sched, 2.0);
  EXPECT_EQ(part.representatives.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(part.assignment[i], i);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j)
      EXPECT_FALSE(same_zimmer(part.representatives[i], part.representatives[j], 2.0));
}

TEST(Partition, SingleSeed) {
  auto osc = systems::harmonic_oscillator();
  const std::vector<Point> seeds{{1.0, 0.0}};
  const double sched[] = {4 * pi};
  auto part = build_natural_partition(osc, seeds, 0.02, sched, 2.0);
  EXPECT_EQ(part.representatives.size(), 1u);
  EXPECT_EQ(part.assignment, std::vector<std::size_t>{0});
}

TEST(Partition, EveryTorusOrbitIsDense) {
  auto torus = systems::torus_flow(golden);
  std::mt19937_64 rng(11);
  std::vector<Point> seeds;
  for (int k = 0; k < 4; ++k) seeds.push_back(torus.space().sample_uniform(rng));
  const double sched[] = {300.0, 1000.0, 3000.0};
  auto part = build_natural_partition(torus, seeds, 0.05, sched, 2.0);
  EXPECT_EQ(part.representatives.size(), 1u);
  for (std::size_t i = 0; i < seeds.size(); ++i)
    EXPECT_LE(part.assignment_distance[i], 2.0 * 0.05);
}

TEST(ContinuityProbe, ZeroOffsetGivesZero) {
  auto osc = systems::harmonic_oscillator();
  const double deltas[] = {0.1}, offsets[] = {0.0}, sched[] = {4 * pi};
  auto rows = closure_continuity_probe(osc, Point{1, 0}, deltas, offsets, 0.02, sched, 2, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].max_distance, 0.0);
}

TEST(ContinuityProbe, OscillatorStaysBelowDelta) {
  auto osc = systems::harmonic_oscillator();
  const double deltas[] = {0.1}, offsets[] = {0.03}, sched[] = {4 * pi};
  auto rows = closure_continuity_probe(osc, Point{1, 0}, deltas, offsets, 0.02, sched, 4, 2);
  EXPECT_LT(rows[0].max_distance, 0.1);
}

}  // namespace
}  // namespace flowkit
