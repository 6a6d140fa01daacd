// Multi-scale hash grid over axis-aligned boxes.
//
// Patches of a covering differ in size by many orders of magnitude, so a single
// uniform grid does not work.  Boxes are grouped into classes by the binary
// exponent of their half-width in every coordinate; each class owns a uniform
// grid whose cell is at least twice the largest half-width in the class, so a
// box touches at most 2^d cells of its class.

#ifndef FREQTILE_BOX_INDEX_HPP
#define FREQTILE_BOX_INDEX_HPP

#include <map>
#include <unordered_map>

#include "freqtile/common.hpp"

namespace freqtile {

class BoxIndex {
 public:
  explicit BoxIndex(std::size_t dim = 1) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return lo_.size(); }

  /// Insert the box center +- halfwidth; returns its id (insertion order).
  std::uint32_t insert(const Point& center, const Point& halfwidth) {
    const auto id = static_cast<std::uint32_t>(lo_.size());
    lo_.push_back(center - halfwidth);
    hi_.push_back(center + halfwidth);
    ClassKey key{};
    for (std::size_t i = 0; i < dim_; ++i) key[i] = std::ilogb(std::max(halfwidth[i], 1e-300)) + 1;
    auto it = classes_.find(key);
    if (it == classes_.end()) {
      Grid g;
      g.cell = Point(dim_);
      for (std::size_t i = 0; i < dim_; ++i) g.cell[i] = 2.0 * std::ldexp(1.0, key[i]);
      it = classes_.emplace(key, std::move(g)).first;
    }
    Grid& g = it->second;
    if (g.members.empty()) {
      g.lo = lo_[id];
      g.hi = hi_[id];
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      g.lo[i] = std::min(g.lo[i], lo_[id][i]);
      g.hi[i] = std::max(g.hi[i], hi_[id][i]);
    }
    g.members.push_back(id);
    CellKey first = cell_of(g, lo_[id]);
    CellKey last = cell_of(g, hi_[id]);
    for_each_cell(first, last, [&](const CellKey& c) { g.cells[c].push_back(id); });
    return id;
  }

  const Point& lo(std::uint32_t id) const { return lo_[id]; }
  const Point& hi(std::uint32_t id) const { return hi_[id]; }

  /// Ids of boxes containing x (closed boxes), in ascending id order.
  std::vector<std::uint32_t> containing(const Point& x) const {
    std::vector<std::uint32_t> out;
    for (const auto& [key, g] : classes_) {
      bool outside = false;
      for (std::size_t i = 0; i < dim_; ++i) outside = outside || x[i] < g.lo[i] || x[i] > g.hi[i];
      if (outside) continue;
      auto it = g.cells.find(cell_of(g, x));
      if (it == g.cells.end()) continue;
      for (std::uint32_t id : it->second)
        if (contains(id, x)) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Ids of boxes intersecting [lo, hi] (closed), in ascending id order.
  std::vector<std::uint32_t> intersecting(const Point& lo, const Point& hi) const {
    std::vector<std::uint32_t> out;
    for (const auto& [key, g] : classes_) {
      // Clip the query to the class's bounding box first.
      Point qlo = lo, qhi = hi;
      bool empty = false;
      for (std::size_t i = 0; i < dim_; ++i) {
        qlo[i] = std::max(qlo[i], g.lo[i]);
        qhi[i] = std::min(qhi[i], g.hi[i]);
        empty = empty || qlo[i] > qhi[i];
      }
      if (empty) continue;
      const CellKey first = cell_of(g, qlo);
      const CellKey last = cell_of(g, qhi);
      double cells = 1.0;
      for (std::size_t i = 0; i < dim_; ++i) cells *= static_cast<double>(last[i] - first[i] + 1);
      if (cells > static_cast<double>(g.members.size())) {
        for (std::uint32_t id : g.members)
          if (overlaps(id, lo, hi)) out.push_back(id);
        continue;
      }
      for_each_cell(first, last, [&](const CellKey& c) {
        auto it = g.cells.find(c);
        if (it == g.cells.end()) return;
        for (std::uint32_t id : it->second)
          if (overlaps(id, lo, hi)) out.push_back(id);
      });
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  using ClassKey = std::array<int, kMaxDim>;
  using CellKey = std::array<std::int64_t, kMaxDim>;

  struct CellHash {
    std::size_t operator()(const CellKey& k) const {
      std::uint64_t h = 1469598103934665603ULL;
      for (std::int64_t v : k) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };

  struct Grid {
    Point cell;
    Point lo, hi;  // bounding box of all members
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells;
    std::vector<std::uint32_t> members;
  };

  CellKey cell_of(const Grid& g, const Point& x) const {
    CellKey k{};
    for (std::size_t i = 0; i < dim_; ++i) k[i] = static_cast<std::int64_t>(std::floor(x[i] / g.cell[i]));
    return k;
  }

  template <class F>
  void for_each_cell(const CellKey& first, const CellKey& last, F&& f) const {
    CellKey c = first;
    while (true) {
      f(c);
      std::size_t i = 0;
      for (; i < dim_; ++i) {
        if (c[i] < last[i]) {
          ++c[i];
          break;
        }
        c[i] = first[i];
      }
      if (i == dim_) return;
    }
  }

  bool contains(std::uint32_t id, const Point& x) const {
    for (std::size_t i = 0; i < dim_; ++i)
      if (x[i] < lo_[id][i] || x[i] > hi_[id][i]) return false;
    return true;
  }
  bool overlaps(std::uint32_t id, const Point& lo, const Point& hi) const {
    for (std::size_t i = 0; i < dim_; ++i)
      if (hi[i] < lo_[id][i] || lo[i] > hi_[id][i]) return false;
    return true;
  }

  std::size_t dim_;
  std::vector<Point> lo_, hi_;
  std::map<ClassKey, Grid> classes_;
};

}  // namespace freqtile

#endif  // FREQTILE_BOX_INDEX_HPP
