#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "flowkit/ergodic.hpp"
#include "flowkit/systems.hpp"

namespace flowkit {
namespace {

constexpr double pi = std::numbers::pi;
const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

std::vector<double> periods(std::initializer_list<double> ks) {
  std::vector<double> out;
  for (double k : ks) out.push_back(2 * pi * k);
  return out;
}

TEST(Observables, AnalyticGradientsMatchDifferences) {
  auto osc = systems::harmonic_oscillator();
  auto coupled = systems::coupled_oscillators(1.0, std::sqrt(2.0));
  auto torus = systems::torus_flow(golden);
  std::vector<std::pair<Observable, const FlowSystem*>> cases = {
      {observables::coordinate(1), &osc},
      {observables::coordinate_square(0), &osc},
      {observables::hamiltonian(osc), &osc},
      {observables::mode_energy(1, 2), &coupled},
      {observables::bump(torus.space(), Point{0.5, 0.5}, 0.25), &torus},
      {observables::parse("polynomial(1.5*x0^2*x1 - 2*x1 + 0.5)", osc), &osc},
  };
  std::mt19937_64 rng(1);
  for (const auto& [obs, sys] : cases) {
    Observable fd = obs;
    fd.grad = nullptr;
    for (int k = 0; k < 20; ++k) {
      const Point x = sys->sample_point(rng);
      const Point a = obs.gradient(x), b = fd.gradient(x);
      for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_NEAR(a[i], b[i], 1e-5 * std::max(1.0, std::abs(b[i]))) << obs.name;
    }
  }
}

TEST(Observables, ParseErrorsAreConfigErrors) {
  auto osc = systems::harmonic_oscillator();
  auto torus = systems::torus_flow(golden);
  for (const char* bad : {"nonsense", "coordinate(5)", "bump(0.5;0.1)", "polynomial(2*y)", "hamiltonian(1)"}) {
    try {
      observables::parse(bad, osc);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_TRUE(e.is_config_error()) << bad;
    }
  }
  EXPECT_THROW(observables::parse("hamiltonian", torus), Error);
  EXPECT_DOUBLE_EQ(observables::parse("polynomial(1e-3*x0 - x1^2)", osc)(Point{2.0, 3.0}), 2e-3 - 9.0);
}

TEST(Observables, BumpIntegratesToBoxArea) {
  auto torus = systems::torus_flow(golden);
  auto b = observables::bump(torus.space(), Point{0.5, 0.5}, 0.25);
  const int n = 400;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += b(Point{(i + 0.5) / n, (j + 0.5) / n});
  EXPECT_NEAR(s / (n * n), 0.25, 1e-6);
}

TEST(Kinecentric, OscillatorAveragesToOrigin) {
  auto osc = systems::harmonic_oscillator();
  const double hs[] = {250.0, 500.0, 1000.0};
  auto e = kinecentric_field(osc, Point{1, 0}, hs, 1e-2);
  EXPECT_NEAR(e.value[0], 0.0, 1e-3);
  EXPECT_NEAR(e.value[1], 0.0, 1e-3);
  EXPECT_TRUE(e.converged);
  EXPECT_EQ(e.partials.size(), 3u);
}

TEST(Kinecentric, FixedPointIsItself) {
  auto c = systems::linear_contraction(1.0, 2);
  const double hs[] = {10.0, 20.0};
  auto e = kinecentric_field(c, Point{0, 0}, hs, 1e-9);
  EXPECT_EQ(e.value, (Point{0, 0}));
  auto osc = systems::harmonic_oscillator();
  EXPECT_EQ(kinecentric_field(osc, Point{0, 0}, hs, 1e-9).value, (Point{0, 0}));
}

TEST(Kinecentric, IrrationalTwoTorusInR4) {
  auto coupled = systems::coupled_oscillators(1.0, std::sqrt(2.0));
  const double hs[] = {2500.0, 5000.0, 10000.0};
  auto e = kinecentric_field(coupled, Point{0.8, 0.5, 0.1, -0.4}, hs, 1e-2);
  for (double v : e.value) EXPECT_NEAR(v, 0.0, 1e-2);
}

TEST(Constancy, ZeroShiftAndOrbitShifts) {
  auto osc = systems::harmonic_oscillator();
  const double hs[] = {250.0, 500.0, 1000.0};
  const double zero[] = {0.0}, shift[] = {1.7};
  EXPECT_TRUE(constancy_check(osc, Point{1, 0}, zero, hs, 1e-12, 1e-2));
  EXPECT_TRUE(constancy_check(osc, Point{1, 0}, shift, hs, 1e-2, 1e-2));
  auto torus = systems::torus_flow(golden);
  const double tshift[] = {3.1};
  EXPECT_TRUE(constancy_check(torus, Point{0.2, 0.7}, tshift, hs, 2e-2, 2e-2));
}

TEST(Constancy, UnconvergedIsAnError) {
  auto osc = systems::harmonic_oscillator();
  const double hs[] = {1.0, 2.0};
  const double s[] = {0.5};
  try {
    constancy_check(osc, Point{1, 0}, s, hs, 1e-2, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_converged);
  }
}

TEST(Birkhoff, ConstantObservable) {
  auto pend = systems::pendulum();
  const double hs[] = {10.0, 20.0};
  auto a = birkhoff_average(pend, Point{0.5, 0.3}, observables::constant(2.5), Weight::plain, hs, 1e-9);
  EXPECT_NEAR(a.raw.scalar(), 2.5, 1e-12);
  auto b = birkhoff_average(pend, Point{0.5, 0.3}, observables::constant(2.5), Weight::speed_reciprocal, hs, 1e-9);
  EXPECT_NEAR(b.normalized.scalar(), 2.5, 1e-12);
}

TEST(Birkhoff, CosineSquaredOverWholePeriods) {
  // Tight tolerances: the default controller drifts the amplitude by ~1e-8
  // over 40 periods.
  auto osc = systems::harmonic_oscillator();
  osc.integrator.rel_tol = 1e-12;
  osc.integrator.abs_tol = 1e-13;
  const auto hs = periods({10, 20, 40});
  auto a = birkhoff_average(osc, Point{1, 0}, observables::coordinate_square(0), Weight::plain, hs, 1e-6);
  EXPECT_NEAR(a.raw.scalar(), 0.5, 1e-8);
  EXPECT_TRUE(a.raw.converged);
  auto b = birkhoff_average(osc, Point{1, 0}, observables::coordinate_square(0), Weight::speed_reciprocal, hs, 1e-6);
  EXPECT_NEAR(b.normalized.scalar(), 0.5, 1e-8);
  EXPECT_NEAR(b.raw.scalar(), 0.5, 1e-8);  // unit speed
}

TEST(Birkhoff, SquaredIntegrandFailsConstantCheck) {
  auto pend = systems::pendulum();
  const double hs[] = {10.0, 20.0};
  BirkhoffOptions opt;
  opt.squared_integrand = true;
  auto a = birkhoff_average(pend, Point{0.5, 0.3}, observables::constant(2.5), Weight::speed_reciprocal, hs, 1e-9, opt);
  EXPECT_GT(std::abs(a.raw.scalar() - 2.5), 0.1);
}

TEST(Birkhoff, TorusBumpEquidistributes) {
  auto torus = systems::torus_flow(golden);
  const double hs[] = {2500.0, 5000.0, 10000.0};
  auto a = birkhoff_average(torus, Point{0.1, 0.3}, observables::bump(torus.space(), Point{0.5, 0.5}, 0.25),
                            Weight::plain, hs, 1e-2);
  EXPECT_NEAR(a.raw.scalar(), 0.25, 0.02);
}

TEST(Birkhoff, SpeedVanishesAtFixedPoint) {
  auto osc = systems::harmonic_oscillator();
  const double hs[] = {10.0};
  try {
    birkhoff_average(osc, Point{0, 0}, observables::coordinate(0), Weight::speed_reciprocal, hs, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::speed_vanishes);
  }
}

TEST(Birkhoff, Linearity) {
  auto pend = systems::pendulum();
  const double hs[] = {15.0, 30.0};
  auto f = observables::coordinate_square(0), g = observables::coordinate(1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 5; ++k) {
    const double a = u(rng), b = u(rng);
    for (Weight w : {Weight::plain, Weight::speed_reciprocal}) {
      const Point x{0.3 * k - 0.5, 0.4};
      const double lhs = birkhoff_average(pend, x, observables::combine(a, f, b, g), w, hs, 1).raw.scalar();
      const double rhs = a * birkhoff_average(pend, x, f, w, hs, 1).raw.scalar() +
                         b * birkhoff_average(pend, x, g, w, hs, 1).raw.scalar();
      EXPECT_NEAR(lhs, rhs, 1e-9);
    }
  }
}

TEST(Birkhoff, InvariantAveragesToItsValue) {
  auto pend = systems::pendulum();
  auto H = observables::hamiltonian(pend);
  const double hs[] = {20.0, 40.0};
  const Point x{0.8, -0.6};
  EXPECT_NEAR(birkhoff_average(pend, x, H, Weight::plain, hs, 1e-6).raw.scalar(), H(x), 1e-8);
}

TEST(SpaceAverage, ConstantAndCircle) {
  auto osc = systems::harmonic_oscillator();
  const auto sched = periods({2});
  auto closure = approximate_closure(osc, Point{1, 0}, 0.02, sched);
  EXPECT_NEAR(space_average_over_closure(closure, observables::constant(3.0)), 3.0, 1e-12);
  EXPECT_NEAR(space_average_over_closure(closure, observables::coordinate_square(0)), 0.5, 0.02);
}

TEST(SpaceAverage, FullTorusBump) {
  auto torus = systems::torus_flow(golden);
  const double sched[] = {100.0, 1000.0, 10000.0};
  auto closure = approximate_closure(torus, Point{0.1, 0.3}, 0.02, sched);
  EXPECT_NEAR(space_average_over_closure(closure, observables::bump(torus.space(), Point{0.5, 0.5}, 0.25)), 0.25, 0.02);
}

TEST(SpaceAverage, UnconvergedClosureIsAnError) {
  auto torus = systems::torus_flow(golden);
  const double sched[] = {1.0};
  auto closure = approximate_closure(torus, Point{0.1, 0.3}, 0.02, sched);
  EXPECT_THROW(space_average_over_closure(closure, observables::constant(1.0)), Error);
}

TEST(TimeVsSpace, OscillatorCircle) {
  auto osc = systems::harmonic_oscillator();
  const auto hs = periods({10, 20, 40});
  auto r = time_vs_space_report(osc, Point{1, 0}, observables::coordinate_square(0), 0.01, hs, 1e-6);
  EXPECT_LT(r.gap_plain, 1e-3);
  EXPECT_LT(std::abs(r.time_plain - r.time_speed_normalized), 1e-8);
}

TEST(TimeVsSpace, FixedPointAllAgree) {
  auto osc = systems::harmonic_oscillator();
  const double hs[] = {10.0, 20.0};
  auto f = observables::polynomial({{2.0, {0, 0}}}, "two");
  auto r = time_vs_space_report(osc, Point{0, 0}, f, 0.02, hs, 1e-6);
  EXPECT_TRUE(r.fixed_point);
  EXPECT_EQ(r.time_plain, 2.0);
  EXPECT_EQ(r.time_speed_normalized, 2.0);
  EXPECT_EQ(r.space, 2.0);
}

// Equal averages of x^2, p^2 and H across the oscillator family single out
// one circle.
TEST(Identitivity, ObservableFamilySeparatesCircles) {
  auto osc = systems::harmonic_oscillator();
  const auto hs = periods({5, 10});
  std::vector<Observable> fam = {observables::coordinate_square(0), observables::coordinate_square(1),
                                 observables::hamiltonian(osc)};
  std::vector<Point> seeds = {{1, 0}, {0, 1}, {0.6, 0.8}, {1.2, 0}, {0.5, 0.5}};
  std::vector<std::vector<double>> sig;
  std::vector<ClosureCloud> closures;
  for (const auto& x : seeds) {
    std::vector<double> s;
    for (const auto& f : fam) s.push_back(birkhoff_average(osc, x, f, Weight::plain, hs, 1e-6).raw.scalar());
    sig.push_back(s);
    closures.push_back(approximate_closure(osc, x, 0.02, hs));
  }
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = 0; j < seeds.size(); ++j) {
      bool equal = true;
      for (std::size_t k = 0; k < fam.size(); ++k) equal = equal && std::abs(sig[i][k] - sig[j][k]) < 1e-6;
      if (equal) {
        EXPECT_TRUE(same_zimmer(closures[i], closures[j], 2.0)) << i << " " << j;
      }
    }
}

TEST(Lipschitz, KinecentricDifferenceBounded) {
  // Isometric flow: kappa = 1, and the bound 2 e^{kappa * Upsilon} |x - y|
  // with Upsilon = 0 already holds.
  auto torus = systems::torus_flow(golden);
  const double hs[] = {500.0, 1000.0};
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    const Point x = torus.space().sample_uniform(rng);
    const Point y = torus.space().wrapped(Point{x[0] + 0.01, x[1] - 0.02});
    const auto a = kinecentric_field(torus, x, hs, 1e-2), b = kinecentric_field(torus, y, hs, 1e-2);
    const double d = std::hypot(a.value[0] - b.value[0], a.value[1] - b.value[1]);
    EXPECT_LE(d, 2.0 * torus.space().distance(x, y) + 2e-3);
  }
}

}  // namespace
}  // namespace flowkit
