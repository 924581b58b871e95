#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/linalg.hpp"

namespace flowkit {

/// Axis-aligned box in R^n. Axes flagged periodic are treated modulo their
/// extent, and the metric on them is the wrapped (shortest-way) distance.
class StateSpace {
 public:
  StateSpace() = default;

  StateSpace(std::vector<double> lo, std::vector<double> hi, std::vector<bool> periodic = {})
      : lo_(std::move(lo)), hi_(std::move(hi)), periodic_(std::move(periodic)) {
    require(!lo_.empty() && lo_.size() == hi_.size(), ErrorCode::invalid_argument,
            "state space bounds must be nonempty and of equal length");
    if (periodic_.empty()) periodic_.assign(lo_.size(), false);
    require(periodic_.size() == lo_.size(), ErrorCode::invalid_argument,
            "periodic flags must match dimension");
    for (std::size_t i = 0; i < lo_.size(); ++i)
      require(std::isfinite(lo_[i]) && std::isfinite(hi_[i]) && hi_[i] > lo_[i],
              ErrorCode::invalid_argument, "bounds need strictly positive extent on axis " + std::to_string(i));
  }

  static StateSpace cube(std::size_t n, double lo, double hi) {
    return StateSpace(std::vector<double>(n, lo), std::vector<double>(n, hi));
  }

  std::size_t dim() const { return lo_.size(); }
  double lo(std::size_t i) const { return lo_[i]; }
  double hi(std::size_t i) const { return hi_[i]; }
  double extent(std::size_t i) const { return hi_[i] - lo_[i]; }
  bool periodic(std::size_t i) const { return periodic_[i]; }
  const std::vector<bool>& periodic_axes() const { return periodic_; }
  bool any_periodic() const {
    for (bool p : periodic_)
      if (p) return true;
    return false;
  }

  double diagonal() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) s += extent(i) * extent(i);
    return std::sqrt(s);
  }

  // Shortest signed displacement a - b, reduced on periodic axes.
  double axis_difference(std::size_t i, double a, double b) const {
    double d = a - b;
    if (periodic_[i]) {
      const double L = extent(i);
      d -= L * std::round(d / L);
    }
    return d;
  }

  void difference(std::span<const double> a, std::span<const double> b, std::span<double> out) const {
    for (std::size_t i = 0; i < dim(); ++i) out[i] = axis_difference(i, a[i], b[i]);
  }

  double distance_squared(std::span<const double> a, std::span<const double> b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double d = axis_difference(i, a[i], b[i]);
      s += d * d;
    }
    return s;
  }

  double distance(std::span<const double> a, std::span<const double> b) const {
    return std::sqrt(distance_squared(a, b));
  }

  // Reduce periodic coordinates into [lo, hi).
  void wrap(std::span<double> x) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      if (!periodic_[i] || (x[i] >= lo_[i] && x[i] < hi_[i])) continue;
      const double L = extent(i);
      double r = std::fmod(x[i] - lo_[i], L);
      if (r < 0) r += L;
      if (r >= L) r = 0.0;
      x[i] = lo_[i] + r;
    }
  }

  Point wrapped(Point x) const {
    wrap(x);
    return x;
  }

  // Non-periodic axes checked against the box enlarged by margin * extent.
  bool contains(std::span<const double> x, double margin = 0.0) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      if (periodic_[i]) continue;
      const double pad = margin * extent(i);
      if (!(x[i] >= lo_[i] - pad && x[i] <= hi_[i] + pad)) return false;
    }
    return true;
  }

  template <class Rng>
  Point sample_uniform(Rng& rng) const {
    Point x(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      std::uniform_real_distribution<double> u(lo_[i], hi_[i]);
      x[i] = u(rng);
    }
    return x;
  }

  bool operator==(const StateSpace&) const = default;

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<bool> periodic_;
};

// Uniform direction on the unit sphere of R^n.
template <class Rng>
Point random_unit_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Point v(n);
  double s = 0.0;
  do {
    s = 0.0;
    for (auto& c : v) {
      c = g(rng);
      s += c * c;
    }
  } while (s < 1e-24);
  s = std::sqrt(s);
  for (auto& c : v) c /= s;
  return v;
}

// Uniform point in the open ball of the given radius around the origin.
template <class Rng>
Point random_in_ball(std::size_t n, double radius, Rng& rng) {
  Point v = random_unit_vector(n, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = radius * std::pow(u(rng), 1.0 / static_cast<double>(n));
  for (auto& c : v) c *= r;
  return v;
}

}  // namespace flowkit
