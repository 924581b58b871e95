#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/geometry.hpp"
#include "flowkit/grid.hpp"
#include "flowkit/observables.hpp"
#include "flowkit/zimmer.hpp"

namespace flowkit {

/// v(x) . grad f(x); zero for an invariant.
inline double invariant_residual(const FlowSystem& system, const Observable& obs, std::span<const double> x) {
  return dot(system.field(x), obs.gradient(x));
}

struct InvariantCertificate {
  bool verdict = false;
  double max_residual = 0.0;
  double constancy_gap = 0.0;  // max |f(Psi(x,t)) - f(x)| along sampled orbits
  std::size_t points = 0;
  std::size_t orbits = 0;
};

/// Residuals at random points and constancy along a few sampled orbits.
inline InvariantCertificate certify_invariant(const FlowSystem& system, const Observable& obs,
                                              std::size_t sample_budget, double tol, std::uint64_t rng_seed,
                                              double horizon = 20.0, std::size_t orbits = 4) {
  InvariantCertificate c;
  std::mt19937_64 rng(rng_seed);
  for (std::size_t k = 0; k < sample_budget; ++k) {
    const Point x = system.sample_point(rng);
    c.max_residual = std::max(c.max_residual, std::abs(invariant_residual(system, obs, x)));
  }
  c.points = sample_budget;
  for (std::size_t k = 0; k < orbits; ++k) {
    const Point x = system.sample_point(rng);
    const double f0 = obs(x);
    try {
      const OrbitSample s = sample_orbit(system, x, horizon, StepPolicy::fixed_time(horizon / 200));
      for (std::size_t i = 0; i < s.size(); ++i) c.constancy_gap = std::max(c.constancy_gap, std::abs(obs(s.point(i)) - f0));
      ++c.orbits;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::integration_diverged) throw;
    }
  }
  c.verdict = c.max_residual < tol && c.constancy_gap < tol;
  return c;
}

namespace detail {

// Largest |grad f| over the cell center and its corners, times h.
inline double cell_band(const Observable& f, const OccupancyGrid& grid, std::span<const double> center) {
  const std::size_t n = center.size();
  double g = norm(f.gradient(center));
  Point corner(n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) corner[i] = center[i] + ((mask >> i) & 1 ? 0.5 : -0.5) * grid.h();
    g = std::max(g, norm(f.gradient(corner)));
  }
  return g * grid.h();
}

}  // namespace detail

/// Cells whose centers satisfy |f_k(c) - omega_k| <= band_k for every k. A
/// nonpositive band means the per-cell default max |grad f| * h. The result
/// is a grid over the same space with exactly those cells occupied.
inline OccupancyGrid grid_level_sets(std::span<const Observable> fs, std::span<const double> omegas,
                                     std::span<const double> bands, const OccupancyGrid& geometry) {
  require(fs.size() == omegas.size() && fs.size() == bands.size(), ErrorCode::invalid_argument,
          "one omega and band per observable");
  OccupancyGrid out(geometry.space(), geometry.h());
  const std::uint64_t total = geometry.total_cells();
  Point c(geometry.dim());
  for (CellKey key = 0; key < total; ++key) {
    geometry.center(key, c);
    bool keep = true;
    for (std::size_t k = 0; k < fs.size() && keep; ++k) {
      const double dev = std::abs(fs[k](c) - omegas[k]);
      if (bands[k] > 0.0) {
        keep = dev <= bands[k];
      } else {
        // Screen with the center gradient; corners only for borderline cells.
        const double rough = norm(fs[k].gradient(c)) * geometry.h();
        if (dev <= rough) continue;
        keep = (rough > 0.0 && dev > 3.0 * rough) ? false : dev <= detail::cell_band(fs[k], geometry, c);
      }
    }
    if (keep) out.insert_cell(key);
  }
  return out;
}

inline OccupancyGrid grid_level_set(const Observable& f, double omega, double band, const OccupancyGrid& geometry) {
  require(band > 0.0, ErrorCode::invalid_argument, "band must be positive");
  const Observable fs[] = {f};
  const double om[] = {omega}, bd[] = {band};
  return grid_level_sets(fs, om, bd, geometry);
}

/// Intersection of the level sets through the seed. Empty list: every cell.
inline OccupancyGrid minimal_invariant_manifold(std::span<const Observable> invariants, std::span<const double> seed,
                                                const OccupancyGrid& geometry, double band = 0.0) {
  std::vector<double> omegas, bands;
  for (const auto& f : invariants) {
    omegas.push_back(f(seed));
    bands.push_back(band);
  }
  OccupancyGrid cells = grid_level_sets(invariants, omegas, bands, geometry);
  const auto seed_cell = geometry.cell_of(seed);
  require(seed_cell && cells.occupied(*seed_cell), ErrorCode::empty_intersection,
          "the seed's cell is not in the level-set intersection; widen the band");
  return cells;
}

struct ManifoldComparison {
  double subset_gap = 0.0;  // fraction of closure cells outside the manifold
  double hausdorff_gap = 0.0;
  std::size_t manifold_cells = 0;
  std::size_t closure_cells = 0;
};

inline ManifoldComparison compare_manifold_to_zimmer(const OccupancyGrid& manifold, const ClosureCloud& closure) {
  require(manifold.matches(closure.grid), ErrorCode::grid_mismatch, "manifold and closure grids differ");
  ManifoldComparison r;
  r.manifold_cells = manifold.occupied_count();
  r.closure_cells = closure.grid.occupied_count();
  std::size_t outside = 0;
  for (CellKey k : closure.grid.cells()) outside += !manifold.occupied(k);
  r.subset_gap = r.closure_cells ? static_cast<double>(outside) / static_cast<double>(r.closure_cells) : 0.0;
  r.hausdorff_gap = hausdorff_distance(manifold.centers(), closure.cloud);
  return r;
}

/// Fixed-size bit set over a universe of cells.
class CellSet {
 public:
  CellSet() = default;
  explicit CellSet(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}

  std::size_t size() const { return size_; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1; }
  bool any() const {
    for (auto w : words_)
      if (w) return true;
    return false;
  }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  CellSet& operator&=(const CellSet& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }
  friend CellSet operator&(CellSet a, const CellSet& b) { return a &= b; }
  bool subset_of(const CellSet& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & ~o.words_[i]) return false;
    return true;
  }
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size_; ++i)
      if (test(i)) out.push_back(i);
    return out;
  }
  bool operator==(const CellSet&) const = default;
  // Lexicographic on the member index lists, for deterministic output order.
  bool operator<(const CellSet& o) const { return indices() < o.indices(); }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Finite family of cell sets over a common universe. Duplicates are
/// dropped on ingest.
class CellSetSystem {
 public:
  CellSetSystem() = default;
  explicit CellSetSystem(std::size_t universe) : universe_(universe) {}

  std::size_t universe() const { return universe_; }
  const std::vector<CellSet>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

  // Returns false for a duplicate.
  bool add(const CellSet& s) {
    require(s.size() == universe_, ErrorCode::invalid_argument, "member is not over this universe");
    if (std::find(members_.begin(), members_.end(), s) != members_.end()) return false;
    members_.push_back(s);
    return true;
  }

  bool add(std::initializer_list<std::size_t> cells) {
    CellSet s(universe_);
    for (auto c : cells) {
      require(c < universe_, ErrorCode::invalid_argument, "cell outside the universe");
      s.set(c);
    }
    return add(s);
  }

  // Same members regardless of order.
  bool same_family(const CellSetSystem& o) const {
    if (universe_ != o.universe_ || size() != o.size()) return false;
    for (const auto& m : members_)
      if (std::find(o.members_.begin(), o.members_.end(), m) == o.members_.end()) return false;
    return true;
  }

 private:
  std::size_t universe_ = 0;
  std::vector<CellSet> members_;
};

// "members cells" header, then one 0/1 row per member.
inline void write_bit_matrix(std::ostream& os, const CellSetSystem& x) {
  os << x.size() << " " << x.universe() << "\n";
  for (const auto& m : x.members()) {
    for (std::size_t i = 0; i < x.universe(); ++i) os << (m.test(i) ? '1' : '0');
    os << "\n";
  }
}

inline CellSetSystem read_bit_matrix(std::istream& is) {
  std::size_t members = 0, cells = 0;
  require(static_cast<bool>(is >> members >> cells), ErrorCode::invalid_argument,
          "bit matrix needs a 'members cells' header");
  CellSetSystem x(cells);
  for (std::size_t r = 0; r < members; ++r) {
    CellSet s(cells);
    std::size_t i = 0;
    char ch = 0;
    while (i < cells && is.get(ch)) {
      if (ch == '0' || ch == '1') {
        if (ch == '1') s.set(i);
        ++i;
      } else {
        require(std::isspace(static_cast<unsigned char>(ch)) != 0, ErrorCode::invalid_argument,
                std::string("unexpected character in bit matrix: ") + ch);
      }
    }
    require(i == cells, ErrorCode::invalid_argument, "bit matrix row " + std::to_string(r) + " is short");
    x.add(s);
  }
  return x;
}

enum class ExtremeMode { minimal, maximal };
enum class IntersectionMethod { automatic, exact, lattice };

namespace detail {

inline std::vector<CellSet> extremes(const std::set<CellSet>& family, ExtremeMode mode) {
  std::vector<CellSet> all(family.begin(), family.end());
  std::vector<CellSet> out;
  for (const auto& a : all) {
    bool keep = true;
    for (const auto& b : all) {
      if (a == b) continue;
      if (mode == ExtremeMode::minimal ? b.subset_of(a) : a.subset_of(b)) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(a);
  }
  return out;
}

// All nonempty intersections of nonempty subfamilies, by depth-first
// enumeration; an empty partial intersection stays empty, so it is cut.
inline void enumerate_intersections(const std::vector<CellSet>& members, std::size_t next, const CellSet& acc,
                                    std::set<CellSet>& out) {
  for (std::size_t i = next; i < members.size(); ++i) {
    CellSet s = acc & members[i];
    if (!s.any()) continue;
    out.insert(s);
    enumerate_intersections(members, i + 1, s, out);
  }
}

}  // namespace detail

/// Inclusion-minimal (or maximal) sets among the nonempty intersections of
/// subfamilies. The exact path enumerates subfamilies; the lattice path
/// closes the members under pairwise nonempty intersection, which yields
/// the same set of intersections.
inline CellSetSystem minimal_intersections(const CellSetSystem& x, ExtremeMode mode = ExtremeMode::minimal,
                                           IntersectionMethod method = IntersectionMethod::automatic,
                                           std::size_t budget = 24) {
  if (method == IntersectionMethod::automatic)
    method = x.size() <= budget ? IntersectionMethod::exact : IntersectionMethod::lattice;
  std::set<CellSet> x2;
  if (method == IntersectionMethod::exact) {
    require(x.size() <= budget, ErrorCode::budget_exceeded,
            "exact enumeration over " + std::to_string(x.size()) + " members exceeds the budget of " +
                std::to_string(budget));
    CellSet all(x.universe());
    for (std::size_t i = 0; i < x.universe(); ++i) all.set(i);
    detail::enumerate_intersections(x.members(), 0, all, x2);
  } else {
    std::vector<CellSet> work;
    for (const auto& m : x.members())
      if (m.any() && x2.insert(m).second) work.push_back(m);
    std::vector<CellSet> base(x2.begin(), x2.end());
    // Intersecting with the original members suffices: every element of the
    // closure is a member intersected with a smaller element.
    while (!work.empty()) {
      CellSet s = std::move(work.back());
      work.pop_back();
      for (const auto& m : base) {
        CellSet t = s & m;
        if (t.any() && x2.insert(t).second) work.push_back(std::move(t));
      }
    }
  }
  CellSetSystem out(x.universe());
  for (auto& s : detail::extremes(x2, mode)) out.add(s);
  return out;
}

// Plain 2^|X| reference: every nonempty subfamily intersected from scratch.
inline CellSetSystem minimal_intersections_brute(const CellSetSystem& x, ExtremeMode mode) {
  require(x.size() < 31, ErrorCode::budget_exceeded, "brute force limited to 30 members");
  std::set<CellSet> x2;
  const std::size_t m = x.size();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
    CellSet s(x.universe());
    for (std::size_t i = 0; i < x.universe(); ++i) s.set(i);
    for (std::size_t j = 0; j < m; ++j)
      if ((mask >> j) & 1) s &= x.members()[j];
    if (s.any()) x2.insert(s);
  }
  CellSetSystem out(x.universe());
  for (auto& s : detail::extremes(x2, mode)) out.add(s);
  return out;
}

}  // namespace flowkit
