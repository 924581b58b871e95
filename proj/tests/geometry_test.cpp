#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "flowkit/geometry.hpp"
#include "flowkit/systems.hpp"

namespace flowkit {
namespace {

constexpr double pi = std::numbers::pi;

PointCloud make_cloud(const StateSpace& space, std::initializer_list<Point> pts) {
  PointCloud c(space);
  for (const auto& p : pts) c.add(p);
  return c;
}

PointCloud circle_cloud(const StateSpace& space, std::size_t n, double from = 0.0, double to = 2 * pi,
                        double radius = 1.0) {
  PointCloud c(space);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = from + (to - from) * static_cast<double>(k) / static_cast<double>(n);
    c.add(Point{radius * std::cos(a), radius * std::sin(a)});
  }
  return c;
}

PointCloud random_cloud(const StateSpace& space, std::size_t n, std::mt19937_64& rng) {
  PointCloud c(space);
  for (std::size_t i = 0; i < n; ++i) c.add(space.sample_uniform(rng));
  return c;
}

const StateSpace plane = StateSpace::cube(2, -5.0, 5.0);

TEST(Hausdorff, SelfDistanceIsZero) {
  std::mt19937_64 rng(1);
  auto a = random_cloud(plane, 50, rng);
  EXPECT_EQ(hausdorff_distance(a, a), 0.0);
}

TEST(Hausdorff, TwoSingletons) {
  EXPECT_DOUBLE_EQ(hausdorff_distance(make_cloud(plane, {{0, 0}}), make_cloud(plane, {{3, 0}})), 3.0);
}

TEST(Hausdorff, SegmentAgainstEndpoint) {
  PointCloud seg(plane);
  for (int k = 0; k <= 20; ++k) seg.add(Point{k / 20.0, 0.0});
  EXPECT_DOUBLE_EQ(hausdorff_distance(seg, make_cloud(plane, {{0, 0}})), 1.0);
}

TEST(Hausdorff, EmptyCloudIsAnError) {
  PointCloud empty(plane);
  try {
    hausdorff_distance(empty, make_cloud(plane, {{0, 0}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_cloud);
  }
}

TEST(Hausdorff, KdTreeMatchesBruteForce) {
  std::mt19937_64 rng(2);
  StateSpace torus3({0, 0, -1}, {1, 2, 1}, {true, true, false});
  for (int trial = 0; trial < 60; ++trial) {
    const auto& space = trial % 2 ? plane : torus3;
    std::uniform_int_distribution<std::size_t> size(1, 300);
    auto a = random_cloud(space, size(rng), rng);
    auto b = random_cloud(space, size(rng), rng);
    EXPECT_DOUBLE_EQ(hausdorff_distance(a, b), hausdorff_distance_brute(a, b));
  }
}

TEST(Hausdorff, MetricPropertiesOnRandomTriples) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<std::size_t> size(1, 12);
    auto a = random_cloud(plane, size(rng), rng);
    auto b = random_cloud(plane, size(rng), rng);
    auto c = random_cloud(plane, size(rng), rng);
    const double ab = hausdorff_distance(a, b), ba = hausdorff_distance(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_LE(ab, hausdorff_distance(a, c) + hausdorff_distance(c, b) + 1e-12);
  }
}

TEST(Hausdorff, EnlargingTargetNeverIncreasesDirectedDistance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_cloud(plane, 20, rng);
    auto b = random_cloud(plane, 10, rng);
    const double before = directed_hausdorff(a, b);
    b.add(plane.sample_uniform(rng));
    EXPECT_LE(directed_hausdorff(a, b), before);
  }
}

TEST(Metric, WrappedAxisDistance) {
  StateSpace ring({0.0}, {2.0}, {true});
  const double h = 0.1;
  EXPECT_NEAR(ring.distance(Point{0.0}, Point{2.0 - h}), h, 1e-15);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 200; ++k) {
    Point a = ring.sample_uniform(rng), b = ring.sample_uniform(rng);
    EXPECT_LE(ring.distance(a, b), 1.0);
    EXPECT_EQ(ring.distance(a, b), ring.distance(b, a));
    EXPECT_EQ(ring.distance(a, a), 0.0);
  }
}

TEST(TubeCovers, SelfCover) {
  std::mt19937_64 rng(6);
  auto c = random_cloud(plane, 40, rng);
  EXPECT_TRUE(tube_covers(c, 1e-9, c));
}

TEST(TubeCovers, HalfArcMissesFarSide) {
  auto half = circle_cloud(plane, 500, 0.0, pi);
  auto full = circle_cloud(plane, 1000);
  EXPECT_FALSE(tube_covers(half, 0.01, full));
}

TEST(TubeCovers, MeshArgument) {
  auto full = circle_cloud(plane, 400);
  const double gap = 2 * std::sin(pi / 400);
  auto resampled = circle_cloud(plane, 977, 0.001);
  EXPECT_TRUE(tube_covers(full, 2 * gap, resampled));
}

TEST(TubeCovers, MonotoneInRadius) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto core = random_cloud(plane, 30, rng);
    auto tgt = random_cloud(plane, 30, rng);
    for (double e = 0.1; e < 5; e *= 1.5) {
      if (tube_covers(core, e, tgt)) {
        EXPECT_TRUE(tube_covers(core, e * 1.5, tgt));
      }
    }
  }
}

TEST(SupMetric, IdenticalStates) {
  auto osc = systems::harmonic_oscillator();
  EXPECT_EQ(sup_metric_A(osc, Point{1, 0}, Point{1, 0}, 5.0), 0.0);
}

TEST(SupMetric, OscillatorPhaseOffset) {
  auto osc = systems::harmonic_oscillator();
  EXPECT_NEAR(sup_metric_A(osc, Point{1, 0}, Point{0, 1}, 2 * pi), std::sqrt(2.0), 1e-6);
}

TEST(SupMetric, ContractionPeaksAtStart) {
  // |e^{-t} - 2 e^{-t}| = e^{-t}, forward time only.
  auto c = systems::linear_contraction(1.0, 2);
  EXPECT_NEAR(sup_metric_A(c, Point{1, 0}, Point{2, 0}, 10.0), 1.0, 1e-12);
}

TEST(OccupancyGrid, InsertIsIdempotentAtSetLevel) {
  OccupancyGrid g(plane, 0.5);
  EXPECT_TRUE(g.insert(Point{0.1, 0.1}));
  EXPECT_FALSE(g.insert(Point{0.2, 0.2}));
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_FALSE(g.insert(Point{9.0, 0.0}));
  EXPECT_EQ(g.outside_count(), 1u);
}

TEST(OccupancyGrid, CentersMapBackIntoBounds) {
  std::mt19937_64 rng(8);
  StateSpace space({-1.0, 0.0}, {1.3, 1.0}, {false, true});
  OccupancyGrid g(space, 0.07);
  for (int k = 0; k < 2000; ++k) g.insert(space.sample_uniform(rng));
  for (CellKey key : g.cells()) {
    Point c = g.center(key);
    EXPECT_TRUE(space.contains(c));
    EXPECT_EQ(*g.cell_of(c), key);
  }
}

TEST(PointCloudCsv, RoundTripKeepsPointsAndFlags) {
  StateSpace space({0.0, -1.0}, {1.0, 1.0}, {true, false});
  std::mt19937_64 rng(9);
  auto cloud = random_cloud(space, 25, rng);
  std::stringstream ss;
  write_csv(ss, cloud);
  auto back = read_csv(ss, space);
  EXPECT_EQ(back.data(), cloud.data());
  std::stringstream again;
  write_csv(again, cloud);
  EXPECT_THROW(read_csv(again, plane), Error);
}

}  // namespace
}  // namespace flowkit
