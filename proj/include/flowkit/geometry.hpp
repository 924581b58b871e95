#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/grid.hpp"
#include "flowkit/state_space.hpp"

namespace flowkit {

inline double default_resolution(const StateSpace& space) { return space.diagonal() / 200.0; }

/// Static kd-tree over a point cloud. Distances use the space metric, so
/// periodic axes are searched across the seam.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud) : cloud_(&cloud), n_(cloud.dim()) {
    order_.resize(cloud.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  // Squared distance to the nearest point; stops early once a point within
  // sqrt(stop_below_sq) is found (the returned value is then only an upper bound
  // that is below the threshold).
  double nearest_squared(std::span<const double> q, double stop_below_sq = -1.0) const {
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) search(0, q, best, stop_below_sq);
    return best;
  }

  double nearest(std::span<const double> q) const { return std::sqrt(nearest_squared(q)); }

  bool any_within(std::span<const double> q, double radius) const {
    const double r2 = radius * radius;
    return nearest_squared(q, r2) <= r2;
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t left = 0, right = 0;  // 0 = none (root is never a child)
    std::vector<double> lo, hi;
  };

  static constexpr std::size_t leaf_size = 8;

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end, 0, 0, std::vector<double>(n_, std::numeric_limits<double>::infinity()),
                          std::vector<double>(n_, -std::numeric_limits<double>::infinity())});
    for (std::size_t k = begin; k < end; ++k) {
      auto p = cloud_->point(order_[k]);
      for (std::size_t i = 0; i < n_; ++i) {
        nodes_[id].lo[i] = std::min(nodes_[id].lo[i], p[i]);
        nodes_[id].hi[i] = std::max(nodes_[id].hi[i], p[i]);
      }
    }
    if (end - begin <= leaf_size) return id;
    std::size_t axis = 0;
    double widest = -1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double w = nodes_[id].hi[i] - nodes_[id].lo[i];
      if (w > widest) {
        widest = w;
        axis = i;
      }
    }
    if (widest <= 0.0) return id;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return cloud_->point(a)[axis] < cloud_->point(b)[axis];
                     });
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_gap_squared(const Node& node, std::span<const double> q) const {
    const auto& space = cloud_->space();
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double gap = 0.0;
      if (space.periodic(i)) {
        // The node holds wrapped coordinates; compare on the circle.
        const double L = space.extent(i);
        double qw = std::fmod(q[i] - space.lo(i), L);
        if (qw < 0) qw += L;
        qw += space.lo(i);
        if (qw < node.lo[i] || qw > node.hi[i]) {
          const double a = std::abs(space.axis_difference(i, qw, node.lo[i]));
          const double b = std::abs(space.axis_difference(i, qw, node.hi[i]));
          gap = std::min(a, b);
        }
      } else if (q[i] < node.lo[i]) {
        gap = node.lo[i] - q[i];
      } else if (q[i] > node.hi[i]) {
        gap = q[i] - node.hi[i];
      }
      s += gap * gap;
    }
    return s;
  }

  bool search(std::size_t id, std::span<const double> q, double& best, double stop) const {
    const Node& node = nodes_[id];
    if (box_gap_squared(node, q) >= best) return false;
    if (node.left == 0) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const double d = cloud_->space().distance_squared(q, cloud_->point(order_[k]));
        if (d < best) {
          best = d;
          if (best <= stop) return true;
        }
      }
      return false;
    }
    const double gl = box_gap_squared(nodes_[node.left], q);
    const double gr = box_gap_squared(nodes_[node.right], q);
    const std::size_t first = gl <= gr ? node.left : node.right;
    const std::size_t second = gl <= gr ? node.right : node.left;
    if (search(first, q, best, stop)) return true;
    return search(second, q, best, stop);
  }

  const PointCloud* cloud_;
  std::size_t n_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// sup over a in A of dist(a, B).
inline double directed_hausdorff(const PointCloud& a, const PointCloud& b) {
  require(!a.empty() && !b.empty(), ErrorCode::empty_cloud, "hausdorff distance needs nonempty clouds");
  KdTree tree(b);
  double worst_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Points already within the running maximum cannot raise it.
    const double d = tree.nearest_squared(a.point(i), worst_sq);
    if (d > worst_sq) worst_sq = d;
  }
  return std::sqrt(worst_sq);
}

/// Hausdorff distance between finite clouds under the space metric.
inline double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
  require(!a.empty() && !b.empty(), ErrorCode::empty_cloud, "hausdorff distance needs nonempty clouds");
  require(a.dim() == b.dim(), ErrorCode::invalid_argument, "cloud dimension mismatch");
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

// Quadratic reference implementation.
inline double hausdorff_distance_brute(const PointCloud& a, const PointCloud& b) {
  require(!a.empty() && !b.empty(), ErrorCode::empty_cloud, "hausdorff distance needs nonempty clouds");
  auto directed = [](const PointCloud& x, const PointCloud& y) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < y.size(); ++j) best = std::min(best, x.space().distance_squared(x.point(i), y.point(j)));
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

/// True iff every target point lies within radius of some core point.
inline bool tube_covers(const PointCloud& core, double radius, const PointCloud& target) {
  require(!core.empty() && !target.empty(), ErrorCode::empty_cloud, "tube cover needs nonempty clouds");
  require(radius > 0.0, ErrorCode::invalid_argument, "tube radius must be positive");
  KdTree tree(core);
  for (std::size_t i = 0; i < target.size(); ++i)
    if (!tree.any_within(target.point(i), radius)) return false;
  return true;
}

inline PointCloud cloud_of(const OrbitSample& sample, const StateSpace& space) {
  PointCloud cloud(space);
  cloud.reserve(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) cloud.add(sample.point(i));
  return cloud;
}

// Points of the sample with |t| <= half_width.
inline PointCloud arc_of(const OrbitSample& sample, const StateSpace& space, double half_width) {
  PointCloud cloud(space);
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (std::abs(sample.times[i]) <= half_width + 1e-12) cloud.add(sample.point(i));
  return cloud;
}

/// max over the sampled time grid of ||Psi(x,t) - Psi(y,t)||, t in [-T, T]
/// ([0, T] for non-reversible systems). A lower bound for the sup over all t.
inline double sup_metric_A(const FlowSystem& system, std::span<const double> x, std::span<const double> y,
                           double horizon, double dt = 0.0) {
  require(horizon > 0.0, ErrorCode::invalid_argument, "horizon must be positive");
  if (dt <= 0.0) dt = horizon / 2000.0;
  const auto policy = StepPolicy::fixed_time(dt);
  const OrbitSample sx = sample_orbit(system, x, horizon, policy);
  const OrbitSample sy = sample_orbit(system, y, horizon, policy);
  const std::size_t n = std::min(sx.size(), sy.size());
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) best = std::max(best, system.space().distance(sx.point(i), sy.point(i)));
  return best;
}

}  // namespace flowkit
