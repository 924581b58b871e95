#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/linalg.hpp"
#include "flowkit/state_space.hpp"

namespace flowkit {

/// Finite sequence of points in a state space, stored row-major.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(StateSpace space) : space_(std::move(space)) {}

  const StateSpace& space() const { return space_; }
  std::size_t dim() const { return space_.dim(); }
  std::size_t size() const { return dim() == 0 ? 0 : data_.size() / dim(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim(), dim()}; }
  const std::vector<double>& data() const { return data_; }

  void add(std::span<const double> p) {
    require(p.size() == dim(), ErrorCode::invalid_argument, "point dimension mismatch");
    data_.insert(data_.end(), p.begin(), p.end());
  }

  void reserve(std::size_t n) { data_.reserve(n * dim()); }

 private:
  StateSpace space_;
  std::vector<double> data_;
};

// CSV layout: "# dimension=<n> periodic=<0|1>,..." then "x0,x1,...", then rows.
inline void write_csv(std::ostream& os, const PointCloud& cloud) {
  os << "# dimension=" << cloud.dim() << " periodic=";
  for (std::size_t i = 0; i < cloud.dim(); ++i) os << (i ? "," : "") << (cloud.space().periodic(i) ? 1 : 0);
  os << "\n";
  for (std::size_t i = 0; i < cloud.dim(); ++i) os << (i ? "," : "") << "x" << i;
  os << "\n";
  os.precision(17);
  for (std::size_t r = 0; r < cloud.size(); ++r) {
    auto p = cloud.point(r);
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
    os << "\n";
  }
}

// The header must agree with the supplied space (dimension and wrap flags).
inline PointCloud read_csv(std::istream& is, const StateSpace& space) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::invalid_argument, "empty point cloud csv");
  std::size_t dim = 0;
  std::string flags;
  {
    std::istringstream hs(line);
    std::string hash, d, p;
    hs >> hash >> d >> p;
    require(hash == "#" && d.rfind("dimension=", 0) == 0 && p.rfind("periodic=", 0) == 0,
            ErrorCode::invalid_argument, "bad point cloud header: " + line);
    dim = std::stoul(d.substr(10));
    flags = p.substr(9);
  }
  require(dim == space.dim(), ErrorCode::invalid_argument, "point cloud dimension does not match space");
  {
    std::istringstream fs(flags);
    std::string f;
    std::size_t i = 0;
    while (std::getline(fs, f, ',')) {
      require(i < dim && (f == "0" || f == "1") && (f == "1") == space.periodic(i),
              ErrorCode::invalid_argument, "point cloud wrap flags do not match space");
      ++i;
    }
    require(i == dim, ErrorCode::invalid_argument, "point cloud wrap flags incomplete");
  }
  std::getline(is, line);  // column names
  PointCloud cloud(space);
  Point p(dim);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(rs, cell, ',')) {
      require(i < dim, ErrorCode::invalid_argument, "too many columns in point cloud row");
      p[i++] = std::stod(cell);
    }
    require(i == dim, ErrorCode::invalid_argument, "too few columns in point cloud row");
    cloud.add(p);
  }
  return cloud;
}

using CellKey = std::uint64_t;

/// Occupancy grid over the state-space box with cubic cells of edge h.
/// Points outside the box (non-periodic axes) are not recorded.
class OccupancyGrid {
 public:
  struct Cell {
    std::uint64_t count = 0;
    std::vector<double> reps;  // up to reps_per_cell points, row-major
  };

  OccupancyGrid() = default;

  OccupancyGrid(StateSpace space, double h, std::size_t reps_per_cell = 0)
      : space_(std::move(space)), h_(h), reps_per_cell_(reps_per_cell) {
    require(h > 0.0 && std::isfinite(h), ErrorCode::invalid_argument, "grid resolution must be positive");
    const std::size_t n = space_.dim();
    counts_.resize(n);
    double total = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::ceil(space_.extent(i) / h - 1e-9);
      counts_[i] = static_cast<std::int64_t>(std::max(1.0, c));
      total *= static_cast<double>(counts_[i]);
    }
    require(total < 4.0e18, ErrorCode::invalid_argument, "grid too fine for 64-bit cell keys");
  }

  const StateSpace& space() const { return space_; }
  double h() const { return h_; }
  std::size_t dim() const { return space_.dim(); }
  const std::vector<std::int64_t>& axis_counts() const { return counts_; }

  std::uint64_t total_cells() const {
    std::uint64_t t = 1;
    for (auto c : counts_) t *= static_cast<std::uint64_t>(c);
    return t;
  }

  bool matches(const OccupancyGrid& other) const {
    return space_ == other.space_ && h_ == other.h_;
  }

  std::optional<CellKey> cell_of(std::span<const double> x) const {
    CellKey key = 0;
    for (std::size_t i = dim(); i-- > 0;) {
      double u = x[i];
      if (space_.periodic(i)) {
        const double L = space_.extent(i);
        u = std::fmod(u - space_.lo(i), L);
        if (u < 0) u += L;
      } else {
        u -= space_.lo(i);
        if (u < 0.0 || u > space_.extent(i)) return std::nullopt;
      }
      auto idx = static_cast<std::int64_t>(std::floor(u / h_));
      idx = std::clamp<std::int64_t>(idx, 0, counts_[i] - 1);
      key = key * static_cast<CellKey>(counts_[i]) + static_cast<CellKey>(idx);
    }
    return key;
  }

  std::vector<std::int64_t> index_of(CellKey key) const {
    std::vector<std::int64_t> idx(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      idx[i] = static_cast<std::int64_t>(key % static_cast<CellKey>(counts_[i]));
      key /= static_cast<CellKey>(counts_[i]);
    }
    return idx;
  }

  CellKey key_of(std::span<const std::int64_t> idx) const {
    CellKey key = 0;
    for (std::size_t i = dim(); i-- > 0;) key = key * static_cast<CellKey>(counts_[i]) + static_cast<CellKey>(idx[i]);
    return key;
  }

  void center(CellKey key, std::span<double> out) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      const auto idx = static_cast<double>(key % static_cast<CellKey>(counts_[i]));
      key /= static_cast<CellKey>(counts_[i]);
      // The last cell on an axis may be partial; use the midpoint of its part.
      const double a = idx * h_;
      const double b = std::min((idx + 1.0) * h_, space_.extent(i));
      out[i] = space_.lo(i) + 0.5 * (a + b);
    }
  }

  Point center(CellKey key) const {
    Point c(dim());
    center(key, c);
    return c;
  }

  // Returns true when the point's cell was not occupied before.
  bool insert(std::span<const double> x) {
    auto key = cell_of(x);
    if (!key) {
      ++outside_;
      return false;
    }
    auto [it, fresh] = cells_.try_emplace(*key);
    ++it->second.count;
    if (it->second.reps.size() < reps_per_cell_ * dim()) it->second.reps.insert(it->second.reps.end(), x.begin(), x.end());
    return fresh;
  }

  void insert_cell(CellKey key) { ++cells_[key].count; }

  bool occupied(CellKey key) const { return cells_.contains(key); }
  std::size_t occupied_count() const { return cells_.size(); }
  std::uint64_t outside_count() const { return outside_; }
  const Cell* find(CellKey key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? nullptr : &it->second;
  }

  std::vector<CellKey> cells() const {
    std::vector<CellKey> keys;
    keys.reserve(cells_.size());
    for (const auto& [k, _] : cells_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  PointCloud centers() const {
    PointCloud cloud(space_);
    cloud.reserve(cells_.size());
    Point c(dim());
    for (CellKey k : cells()) {
      center(k, c);
      cloud.add(c);
    }
    return cloud;
  }

 private:
  StateSpace space_;
  double h_ = 0.0;
  std::size_t reps_per_cell_ = 0;
  std::vector<std::int64_t> counts_;
  std::unordered_map<CellKey, Cell> cells_;
  std::uint64_t outside_ = 0;
};

}  // namespace flowkit
