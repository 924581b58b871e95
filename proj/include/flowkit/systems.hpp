#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"

namespace flowkit::systems {

using Params = std::map<std::string, double>;

// H = (q^2 + p^2) / 2 on [-2.5, 2.5]^2. Orbits are circles of period 2 pi.
inline FlowSystem harmonic_oscillator() {
  auto s = FlowSystem::from_hamiltonian(
      "harmonic_oscillator", StateSpace::cube(2, -2.5, 2.5),
      [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); },
      [](std::span<const double> x, std::span<double> g) {
        g[0] = x[0];
        g[1] = x[1];
      });
  return s;
}

// H = p^2/2 - cos q, q periodic on [-pi, pi).
inline FlowSystem pendulum() {
  StateSpace space({-std::numbers::pi, -3.0}, {std::numbers::pi, 3.0}, {true, false});
  return FlowSystem::from_hamiltonian(
      "pendulum", space, [](std::span<const double> x) { return 0.5 * x[1] * x[1] - std::cos(x[0]); },
      [](std::span<const double> x, std::span<double> g) {
        g[0] = std::sin(x[0]);
        g[1] = x[1];
      });
}

// Linear flow v = (1, alpha) on the unit torus.
inline FlowSystem torus_flow(double alpha) {
  StateSpace space({0.0, 0.0}, {1.0, 1.0}, {true, true});
  auto s = FlowSystem::from_vector_field("torus_flow", space, [alpha](std::span<const double>, std::span<double> v) {
    v[0] = 1.0;
    v[1] = alpha;
  });
  s.integrator.max_step = 0.25;
  return s;
}

// Two uncoupled oscillators, state (q1, q2, p1, p2),
// H = w1 (q1^2 + p1^2)/2 + w2 (q2^2 + p2^2)/2 on [-1.5, 1.5]^4.
inline FlowSystem coupled_oscillators(double w1, double w2) {
  return FlowSystem::from_hamiltonian(
      "coupled_oscillators", StateSpace::cube(4, -1.5, 1.5),
      [w1, w2](std::span<const double> x) {
        return 0.5 * w1 * (x[0] * x[0] + x[2] * x[2]) + 0.5 * w2 * (x[1] * x[1] + x[3] * x[3]);
      },
      [w1, w2](std::span<const double> x, std::span<double> g) {
        g[0] = w1 * x[0];
        g[1] = w2 * x[1];
        g[2] = w1 * x[2];
        g[3] = w2 * x[3];
      });
}

inline FlowSystem lorenz(double sigma, double rho, double beta) {
  StateSpace space({-30.0, -40.0, -5.0}, {30.0, 40.0, 65.0});
  auto s = FlowSystem::from_vector_field("lorenz", space,
                                         [sigma, rho, beta](std::span<const double> x, std::span<double> v) {
                                           v[0] = sigma * (x[1] - x[0]);
                                           v[1] = x[0] * (rho - x[2]) - x[1];
                                           v[2] = x[0] * x[1] - beta * x[2];
                                         });
  s.reversible = false;
  s.integrator.max_step = 0.02;
  return s;
}

// dx/dt = -rate x on [-2, 2]^dim.
inline FlowSystem linear_contraction(double rate, std::size_t dim) {
  auto s = FlowSystem::from_vector_field("linear_contraction", StateSpace::cube(dim, -2.0, 2.0),
                                         [rate](std::span<const double> x, std::span<double> v) {
                                           for (std::size_t i = 0; i < x.size(); ++i) v[i] = -rate * x[i];
                                         });
  s.reversible = false;
  return s;
}

// Clockwise rotation at unit linear speed on every circle (period 2 pi r),
// sampled on the annulus 0.5 <= r <= 2.
inline FlowSystem circle_family() {
  auto s = FlowSystem::from_vector_field("circle_family", StateSpace::cube(2, -2.5, 2.5),
                                         [](std::span<const double> x, std::span<double> v) {
                                           const double r = std::hypot(x[0], x[1]);
                                           if (r == 0.0) {
                                             v[0] = v[1] = 0.0;
                                             return;
                                           }
                                           v[0] = x[1] / r;
                                           v[1] = -x[0] / r;
                                         });
  s.domain = [](std::span<const double> x) {
    const double r = std::hypot(x[0], x[1]);
    return r >= 0.5 && r <= 2.0;
  };
  return s;
}

struct RegistryEntry {
  std::string name;
  Params defaults;
  std::function<FlowSystem(const Params&)> make;
};

inline const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> entries = {
      {"harmonic_oscillator", {}, [](const Params&) { return harmonic_oscillator(); }},
      {"pendulum", {}, [](const Params&) { return pendulum(); }},
      {"torus_flow", {{"alpha", (std::sqrt(5.0) - 1.0) / 2.0}},
       [](const Params& p) { return torus_flow(p.at("alpha")); }},
      {"coupled_oscillators", {{"omega1", 1.0}, {"omega2", std::numbers::sqrt2}},
       [](const Params& p) { return coupled_oscillators(p.at("omega1"), p.at("omega2")); }},
      {"lorenz", {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}},
       [](const Params& p) { return lorenz(p.at("sigma"), p.at("rho"), p.at("beta")); }},
      {"linear_contraction", {{"rate", 1.0}, {"dim", 2.0}},
       [](const Params& p) {
         const double d = p.at("dim");
         require(d >= 1.0 && d == std::floor(d), ErrorCode::config_error, "linear_contraction dim must be a positive integer");
         return linear_contraction(p.at("rate"), static_cast<std::size_t>(d));
       }},
      {"circle_family", {}, [](const Params&) { return circle_family(); }},
  };
  return entries;
}

inline std::string registry_keys() {
  std::string keys;
  for (const auto& e : registry()) keys += (keys.empty() ? "" : ", ") + e.name;
  return keys;
}

/// Builds a registered system. Unknown names and unknown parameters are
/// configuration errors.
inline FlowSystem make(const std::string& name, const Params& overrides = {}) {
  for (const auto& e : registry()) {
    if (e.name != name) continue;
    Params p = e.defaults;
    for (const auto& [k, v] : overrides) {
      require(p.contains(k), ErrorCode::config_error, "system " + name + " has no parameter '" + k + "'");
      require(std::isfinite(v), ErrorCode::config_error, "parameter '" + k + "' must be finite");
      p[k] = v;
    }
    return e.make(p);
  }
  throw Error(ErrorCode::config_error, "unknown system '" + name + "'; registry keys: " + registry_keys());
}

inline Params resolved_params(const std::string& name, const Params& overrides = {}) {
  for (const auto& e : registry()) {
    if (e.name != name) continue;
    Params p = e.defaults;
    for (const auto& [k, v] : overrides) p[k] = v;
    return p;
  }
  throw Error(ErrorCode::config_error, "unknown system '" + name + "'; registry keys: " + registry_keys());
}

}  // namespace flowkit::systems
