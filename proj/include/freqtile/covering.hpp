// Structured admissible coverings of a truncated annulus in R^d \ {0}.
//
// Two families are provided:
//  * build_covering: quasi-balls B(xi_j, delta h(xi_j)) chosen by greedy
//    maximal packing, with T_j zeta = A_j zeta + b_j, A_j = D_a(delta h(xi_j));
//  * besov_covering: the dyadic boxes P_{j,k} (the alpha = 1 case).
//
// A covering is immutable once constructed and safe to read concurrently.

#ifndef FREQTILE_COVERING_HPP
#define FREQTILE_COVERING_HPP

#include <memory>
#include <mutex>
#include <optional>
#include <utility>

#include <nlohmann/json.hpp>

#include "freqtile/anorm.hpp"
#include "freqtile/box_index.hpp"
#include "freqtile/regulation.hpp"

namespace freqtile {

/// Raised when greedy construction cannot certify coverage.
class ConstructionError : public std::runtime_error {
 public:
  ConstructionError(const std::string& what, std::vector<Point> uncovered)
      : std::runtime_error(what), uncovered_(std::move(uncovered)) {}
  const std::vector<Point>& uncovered() const { return uncovered_; }

 private:
  std::vector<Point> uncovered_;
};

/// xi = scales * zeta + offset (componentwise).
struct AffineMap {
  Point scales;
  Point offset;
  double det = 1.0;

  static AffineMap make(const Point& scales, const Point& offset) {
    if (scales.size() != offset.size()) throw DomainError("AffineMap: dimension mismatch");
    double det = 1.0;
    for (double s : scales) {
      if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("AffineMap: scales must be positive");
      det *= s;
    }
    return {scales, offset, det};
  }
  static AffineMap identity(std::size_t dim) {
    Point ones(dim);
    for (double& s : ones) s = 1.0;
    return make(ones, Point(dim));
  }

  Point apply(const Point& zeta) const {
    Point xi = zeta;
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = scales[i] * zeta[i] + offset[i];
    return xi;
  }
  Point inverse(const Point& xi) const {
    Point zeta = xi;
    for (std::size_t i = 0; i < zeta.size(); ++i) zeta[i] = (xi[i] - offset[i]) / scales[i];
    return zeta;
  }
};

enum class PatchClass { J1, J2 };
enum class PatchShape { Ball, Box };

/// Index (j, k) of a Besov box; k has entries in {-2,-1,1,2}, at least one of modulus 2.
struct BesovIndex {
  int j = 0;
  std::array<int, kMaxDim> k{};
};

struct Patch {
  std::size_t index = 0;
  Point center;
  double radius = 0.0;
  AffineMap map;
  PatchClass klass = PatchClass::J1;
  std::optional<BesovIndex> besov;
};

/// max_i |xi_i|^{1/a_i}; the gauge whose level sets bound the Besov boxes.
inline double max_gauge(const QuasiNormContext& ctx, const Point& xi) {
  double m = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) m = std::max(m, std::pow(std::abs(xi[i]), 1.0 / ctx.anisotropy[i]));
  return m;
}

class Covering {
 public:
  using Adjacency = std::vector<std::vector<std::uint32_t>>;

  struct Spec {
    PatchShape shape = PatchShape::Ball;
    Point p0;
    double delta = 0.0;
    double pack_ratio = 0.0;
    std::pair<double, double> annulus{0.0, 0.0};
    double c_split = 0.0;
  };

  Covering(HybridRegulation h, Spec spec, std::vector<Patch> patches, std::optional<Adjacency> neighbors = {})
      : h_(std::make_shared<const HybridRegulation>(std::move(h))),
        spec_(std::move(spec)),
        patches_(std::move(patches)),
        index_(std::make_shared<BoxIndex>(h_->context().dim())) {
    const std::size_t d = dim();
    if (spec_.p0.size() != d) throw DomainError("Covering: p0 dimension mismatch");
    if (!(spec_.annulus.first > 0.0 && spec_.annulus.first < spec_.annulus.second))
      throw DomainError("Covering: empty annulus");
    for (std::size_t j = 0; j < patches_.size(); ++j) {
      const Patch& p = patches_[j];
      if (p.index != j) throw DomainError("Covering: patch indices must be consecutive");
      if (p.center.size() != d || p.map.scales.size() != d) throw DomainError("Covering: patch dimension mismatch");
      index_->insert(p.map.apply(spec_.p0), outer_halfwidths(p));
    }
    if (neighbors) {
      if (neighbors->size() != patches_.size()) throw DomainError("Covering: neighbor list size mismatch");
      neighbors_ = std::move(*neighbors);
    } else {
      neighbors_ = compute_neighbors();
    }
    for (std::size_t j = 0; j < neighbors_.size(); ++j) {
      max_neighbors_ = std::max(max_neighbors_, neighbors_[j].size());
      for (std::uint32_t k : neighbors_[j]) {
        if (k >= patches_.size()) throw DomainError("Covering: neighbor index out of range");
        const auto& back = neighbors_[k];
        if (!std::binary_search(back.begin(), back.end(), static_cast<std::uint32_t>(j)))
          throw DomainError("Covering: neighbor lists are not symmetric");
      }
    }
  }

  std::size_t dim() const { return h_->context().dim(); }
  const QuasiNormContext& context() const { return h_->context(); }
  const HybridRegulation& regulation() const { return *h_; }
  PatchShape shape() const { return spec_.shape; }
  const Point& p0() const { return spec_.p0; }
  double delta() const { return spec_.delta; }
  double pack_ratio() const { return spec_.pack_ratio; }
  std::pair<double, double> annulus() const { return spec_.annulus; }
  double c_split() const { return spec_.c_split; }
  const Spec& spec() const { return spec_; }

  std::size_t size() const { return patches_.size(); }
  const std::vector<Patch>& patches() const { return patches_; }
  const Patch& patch(std::size_t j) const {
    if (j >= patches_.size()) throw DomainError("Covering: invalid patch index");
    return patches_[j];
  }
  const std::vector<std::uint32_t>& neighbors(std::size_t j) const {
    if (j >= patches_.size()) throw DomainError("Covering: invalid patch index");
    return neighbors_[j];
  }
  const Adjacency& adjacency() const { return neighbors_; }
  std::size_t max_neighbors() const { return max_neighbors_; }

  /// Reference sets: P = {|zeta - p0| <= 1}, Q = {|zeta - p0| < outer}, in |.|_a
  /// for balls and in the max-norm for boxes.
  static constexpr double inner_radius() { return 1.0; }
  double outer_radius() const { return spec_.shape == PatchShape::Ball ? 2.0 : 1.5; }

  /// Distance of zeta = T_j^{-1} xi from p0 in the reference gauge.
  double reference_gauge(std::size_t j, const Point& xi) const {
    const Point zeta = patches_[j].map.inverse(xi) - spec_.p0;
    if (spec_.shape == PatchShape::Ball) return aniso_norm(context(), zeta);
    double m = 0.0;
    for (double z : zeta) m = std::max(m, std::abs(z));
    return m;
  }

  bool in_P(std::size_t j, const Point& xi) const { return in_reference(j, xi, inner_radius(), false); }
  bool in_Q(std::size_t j, const Point& xi) const { return in_reference(j, xi, outer_radius(), true); }

  /// Patches whose open set Q_j contains xi, ascending.
  std::vector<std::uint32_t> containing_Q(const Point& xi) const {
    auto ids = index_->containing(xi);
    std::erase_if(ids, [&](std::uint32_t j) { return !in_Q(j, xi); });
    return ids;
  }

  /// Patches whose Q_j bounding box meets [lo, hi], ascending.
  std::vector<std::uint32_t> touching_box(const Point& lo, const Point& hi) const {
    return index_->intersecting(lo, hi);
  }
  const Point& q_box_lo(std::size_t j) const { return index_->lo(static_cast<std::uint32_t>(j)); }
  const Point& q_box_hi(std::size_t j) const { return index_->hi(static_cast<std::uint32_t>(j)); }

  /// Radial coordinate used for the annulus: |xi|_a for balls, max_gauge for boxes.
  double radial(const Point& xi) const {
    return spec_.shape == PatchShape::Ball ? aniso_norm(context(), xi) : max_gauge(context(), xi);
  }
  bool in_annulus(const Point& xi) const {
    const double r = radial(xi);
    return r >= spec_.annulus.first && r <= spec_.annulus.second;
  }
  /// The annulus with one ring of margin removed at each end.
  std::pair<double, double> inner_annulus() const {
    return {2.0 * spec_.annulus.first, 0.5 * spec_.annulus.second};
  }
  bool in_inner(const Point& xi) const {
    const double r = radial(xi);
    const auto [lo, hi] = inner_annulus();
    return r >= lo && r <= hi;
  }
  /// Point with radial coordinate log-uniform on the inner annulus.
  Point sample_inner(Rng& rng) const {
    const auto [lo, hi] = inner_annulus();
    const double r = log_uniform(lo, hi, rng);
    const Point theta = random_direction(dim(), rng);
    if (spec_.shape == PatchShape::Ball) return at_norm(context(), r, theta);
    return dilate(context(), r / max_gauge(context(), theta), theta);
  }

  /// Identity string: FNV-1a of the canonical JSON form, computed once.
  const std::string& id() const;

  /// h(xi_j) from the covering's regulation.
  double regulation_at(std::size_t j) const { return (*h_)(patch(j).center); }

 private:
  Point outer_halfwidths(const Patch& p) const {
    Point w(dim());
    const double outer = outer_radius();
    if (spec_.shape == PatchShape::Ball) {
      // T_j maps the reference ball of radius R onto B(xi_j, R radius_j).
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::pow(outer, context().anisotropy[i]) * p.map.scales[i];
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = outer * p.map.scales[i];
    }
    return w;
  }

  bool in_reference(std::size_t j, const Point& xi, double radius, bool open) const {
    const Point zeta = patches_[j].map.inverse(xi) - spec_.p0;
    const auto& a = context().anisotropy;
    if (spec_.shape == PatchShape::Ball) {
      double s = 0.0;
      for (std::size_t i = 0; i < zeta.size(); ++i) s += zeta[i] * zeta[i] / std::pow(radius, 2.0 * a[i]);
      return open ? s < 1.0 : s <= 1.0;
    }
    for (double z : zeta)
      if (open ? std::abs(z) >= radius : std::abs(z) > radius) return false;
    return true;
  }

  Adjacency compute_neighbors() const {
    Adjacency adj(patches_.size());
    for (std::size_t j = 0; j < patches_.size(); ++j) {
      const auto uj = static_cast<std::uint32_t>(j);
      for (std::uint32_t k : index_->intersecting(index_->lo(uj), index_->hi(uj))) {
        if (k < j) continue;
        if (k == j || q_sets_intersect(j, k)) {
          adj[j].push_back(k);
          if (k != j) adj[k].push_back(uj);
        }
      }
    }
    for (auto& list : adj) std::sort(list.begin(), list.end());
    return adj;
  }

  bool q_sets_intersect(std::size_t j, std::size_t k) const {
    if (spec_.shape == PatchShape::Ball) {
      const double outer = outer_radius();
      return balls_intersect(context(), patches_[j].center, outer * patches_[j].radius, patches_[k].center,
                             outer * patches_[k].radius);
    }
    const auto uj = static_cast<std::uint32_t>(j), uk = static_cast<std::uint32_t>(k);
    for (std::size_t i = 0; i < dim(); ++i)
      if (index_->hi(uj)[i] <= index_->lo(uk)[i] || index_->hi(uk)[i] <= index_->lo(uj)[i]) return false;
    return true;
  }

  std::shared_ptr<const HybridRegulation> h_;
  Spec spec_;
  std::vector<Patch> patches_;
  std::shared_ptr<BoxIndex> index_;
  struct IdCache {
    std::once_flag once;
    std::string value;
  };
  std::shared_ptr<IdCache> id_cache_ = std::make_shared<IdCache>();
  Adjacency neighbors_;
  std::size_t max_neighbors_ = 0;
};

inline const Covering::Adjacency& neighbors(const Covering& c) { return c.adjacency(); }

// ---------------------------------------------------------------------------
// Greedy ball covering

struct BuildOptions {
  double c_split_factor = 4.0;
  std::size_t verify_samples = 20000;
  std::uint64_t seed = 1;
  int max_doublings = 3;
};

namespace detail {

// Largest a_i-power slack: (x + y)^{a} <= kappa (x^a + y^a) with kappa = 2^{max(a-1, 0)}.
inline Point sum_power_slack(const QuasiNormContext& ctx) {
  Point k(ctx.dim());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = std::pow(2.0, std::max(ctx.anisotropy[i] - 1.0, 0.0));
  return k;
}

struct Candidate {
  double norm;
  Point xi;
};

// Grid points covering the shell lo <= |xi|_a < hi.  The spacing in
// coordinate i is sigma^{a_i}/sqrt(d), so every point of the shell lies
// within quasi-distance sigma of a grid point; one extra spacing is kept
// on each side of the shell.
inline void shell_candidates(const QuasiNormContext& ctx, double lo, double hi, double sigma,
                             std::vector<Candidate>& out) {
  const std::size_t d = ctx.dim();
  const auto& a = ctx.anisotropy;
  const double root_d = std::sqrt(static_cast<double>(d));
  std::array<double, kMaxDim> step{};
  for (std::size_t i = 0; i < d; ++i) step[i] = std::pow(sigma, a[i]) / root_d;
  const std::size_t first = out.size();

  // |xi_0| range for which |(xi_0, rest)|_a lies in [lo, hi); rest has weight w = sum rest_i^2 / R^{2 a_i}.
  auto range0 = [&](double R, double rest2_scaled) {
    const double left = 1.0 - rest2_scaled;
    return left <= 0.0 ? 0.0 : std::pow(R, a[0]) * std::sqrt(left);
  };
  auto emit_row = [&](const Point& base, double w_lo, double w_hi) {
    const double inner = range0(lo, w_lo);
    const double outer = range0(hi, w_hi);
    const auto n_lo = static_cast<std::int64_t>(std::floor(inner / step[0])) - 1;
    const auto n_hi = static_cast<std::int64_t>(std::ceil(outer / step[0])) + 1;
    for (std::int64_t n = std::max<std::int64_t>(n_lo, 0); n <= n_hi; ++n) {
      for (int sign : {1, -1}) {
        if (n == 0 && sign < 0) continue;
        Point xi = base;
        xi[0] = sign * static_cast<double>(n) * step[0];
        if (xi.is_zero()) continue;
        const double r = aniso_norm(ctx, xi);
        if (r < lo * 0.5 || r > hi * 2.0) continue;
        out.push_back({r, xi});
      }
    }
  };

  if (d == 1) {
    emit_row(Point(1), 0.0, 0.0);
  } else {
    const double top = std::pow(hi, a[1]) + step[1];
    const auto rows = static_cast<std::int64_t>(std::ceil(top / step[1]));
    for (std::int64_t m = -rows; m <= rows; ++m) {
      Point base(2);
      base[1] = static_cast<double>(m) * step[1];
      // Expand by one row spacing so edge rows still contribute points.
      const double y_in = std::abs(base[1]) + step[1];
      const double y_out = std::max(std::abs(base[1]) - step[1], 0.0);
      emit_row(base, y_in * y_in / std::pow(lo, 2.0 * a[1]), y_out * y_out / std::pow(hi, 2.0 * a[1]));
    }
  }
  std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(), [](const Candidate& x, const Candidate& y) {
    if (x.norm != y.norm) return x.norm < y.norm;
    return std::lexicographical_compare(x.xi.begin(), x.xi.end(), y.xi.begin(), y.xi.end());
  });
}

inline void check_delta_precondition(const HybridRegulation& h, double delta, double r_min, double r_max) {
  const QuasiNormContext& ctx = h.context();
  const double K = ctx.K();
  const int levels = 96;
  const int directions = ctx.dim() == 1 ? 2 : 32;
  for (int l = 0; l <= levels; ++l) {
    const double r = r_min * std::pow(r_max / r_min, static_cast<double>(l) / levels);
    for (int k = 0; k < directions; ++k) {
      Point theta(ctx.dim());
      if (ctx.dim() == 1) {
        theta[0] = k == 0 ? 1.0 : -1.0;
      } else {
        const double phi = 2.0 * std::numbers::pi * k / directions;
        theta[0] = std::cos(phi);
        theta[1] = std::sin(phi);
      }
      const Point xi = at_norm(ctx, r, theta);
      if (!(delta * h(xi) < r / (2.0 * K)))
        throw DomainError("build_covering: delta too large, covering balls would reach the origin");
    }
  }
}

}  // namespace detail

/// Whether d(xi, zeta) > s, decided without a root solve.
inline bool quasi_dist_exceeds(const QuasiNormContext& ctx, const Point& xi, const Point& zeta, double s) {
  double sum = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double diff = xi[i] - zeta[i];
    sum += diff * diff / std::pow(s, 2.0 * ctx.anisotropy[i]);
  }
  return sum > 1.0;
}

/// Greedy maximal packing over a graded candidate lattice (d in {1, 2}).
inline Covering build_covering(const HybridRegulation& h, double delta, double pack_ratio,
                               std::pair<double, double> annulus, int candidate_resolution,
                               const BuildOptions& options = {}) {
  const QuasiNormContext& ctx = h.context();
  const std::size_t d = ctx.dim();
  const auto [r_min, r_max] = annulus;
  if (!(r_min > 0.0) || !(r_min < r_max)) throw DomainError("build_covering: need 0 < r_min < r_max");
  if (!(delta > 0.0)) throw DomainError("build_covering: delta must be positive");
  if (!(pack_ratio > 0.0 && pack_ratio < 1.0)) throw DomainError("build_covering: pack_ratio must lie in (0, 1)");
  if (candidate_resolution < 32) throw DomainError("build_covering: candidate_resolution must be >= 32");
  if (d > 2) throw DomainError("build_covering: only d = 1 and d = 2 are supported");
  const double K = ctx.K();
  detail::check_delta_precondition(h, delta, r_min, r_max);

  const Point kappa = detail::sum_power_slack(ctx);
  auto packing_box = [&](double s) {
    Point w(d);
    for (std::size_t i = 0; i < d; ++i) w[i] = kappa[i] * std::pow(s, ctx.anisotropy[i]);
    return w;
  };

  // Greedy pass, shell by shell in ascending |xi|_a.
  std::vector<Point> centers;
  std::vector<double> h_at;
  BoxIndex packing(d);
  const double shell_ratio = std::pow(2.0, 0.25);
  std::vector<detail::Candidate> cands;
  for (double lo = r_min; lo < r_max; lo *= shell_ratio) {
    const double hi = std::min(lo * shell_ratio, r_max);
    double h_min = std::numeric_limits<double>::infinity();
    for (double r : {lo, std::sqrt(lo * hi), hi})
      for (std::size_t i = 0; i < d; ++i) h_min = std::min(h_min, h(at_norm(ctx, r, Point::axis(d, i))));
    const double sigma = delta * h_min * 4.0 / candidate_resolution;
    cands.clear();
    detail::shell_candidates(ctx, lo, hi, sigma, cands);
    for (const auto& c : cands) {
      if (c.norm < lo || c.norm >= hi) {
        if (!(hi == r_max && c.norm == hi)) continue;
      }
      const double hc = h.eval(c.xi, c.norm);
      const double sc = pack_ratio * delta * hc;
      const Point w = packing_box(sc);
      bool free = true;
      for (std::uint32_t j : packing.intersecting(c.xi - w, c.xi + w)) {
        // d(c, xi_j) <= s  <=>  c lies in the closed ellipsoid B(xi_j, s).
        if (!(quasi_dist_exceeds(ctx, c.xi, centers[j], sc + pack_ratio * delta * h_at[j]))) {
          free = false;
          break;
        }
      }
      if (!free) continue;
      centers.push_back(c.xi);
      h_at.push_back(hc);
      packing.insert(c.xi, w);
    }
  }
  if (centers.empty()) throw ConstructionError("build_covering: no patches accepted", {});

  Point p0(d);
  p0[0] = std::pow(3.0 * K, ctx.anisotropy[0]);
  const double c_split = options.c_split_factor * r_min;

  auto assemble = [&](double cover_delta, double ratio) {
    std::vector<Patch> patches(centers.size());
    for (std::size_t j = 0; j < centers.size(); ++j) {
      Patch& p = patches[j];
      p.index = j;
      p.center = centers[j];
      p.radius = cover_delta * h_at[j];
      const Point scales = dilation(ctx, p.radius).entries;
      Point offset = centers[j];
      for (std::size_t i = 0; i < d; ++i) offset[i] -= scales[i] * p0[i];
      p.map = AffineMap::make(scales, offset);
      p.klass = balls_intersect(ctx, p.center, p.radius, Point(d), c_split) ? PatchClass::J1 : PatchClass::J2;
      if (in_ball(ctx, p.center, 2.0 * p.radius, Point(d)))
        throw ConstructionError("build_covering: a patch set Q_j contains the origin", {});
    }
    Covering::Spec spec{PatchShape::Ball, p0, cover_delta, ratio, annulus, c_split};
    return Covering(h, spec, std::move(patches));
  };

  double cover_delta = delta;
  double ratio = pack_ratio;
  for (int attempt = 0;; ++attempt) {
    Covering cov = assemble(cover_delta, ratio);
    Rng rng(options.seed);
    std::vector<Point> uncovered;
    for (std::size_t s = 0; s < options.verify_samples; ++s) {
      const Point xi = cov.sample_inner(rng);
      const auto ids = cov.containing_Q(xi);
      if (!std::any_of(ids.begin(), ids.end(), [&](std::uint32_t j) { return cov.in_P(j, xi); }))
        uncovered.push_back(xi);
    }
    if (uncovered.empty()) return cov;
    if (attempt == options.max_doublings)
      throw ConstructionError("build_covering: " + std::to_string(uncovered.size()) + " samples remain uncovered",
                              std::move(uncovered));
    cover_delta *= 2.0;
    ratio *= 0.5;
  }
}

// ---------------------------------------------------------------------------
// Besov boxes

/// Diagonal of B(k): 2^{-(a_i+1)} where |k_i| = 1 and (1 - 2^{-a_i})/2 where |k_i| = 2.
inline Point besov_B(const QuasiNormContext& ctx, const std::array<int, kMaxDim>& k) {
  Point b(ctx.dim());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double a = ctx.anisotropy[i];
    const int m = std::abs(k[i]);
    if (m == 1) b[i] = std::pow(2.0, -(a + 1.0));
    else if (m == 2) b[i] = (1.0 - std::pow(2.0, -a)) / 2.0;
    else throw DomainError("besov_B: entries of k must lie in {-2, -1, 1, 2}");
  }
  return b;
}

/// E = {-2,-1,1,2}^d minus {-1,1}^d in lexicographic order.
inline std::vector<std::array<int, kMaxDim>> besov_index_set(std::size_t d) {
  static constexpr int kValues[] = {-2, -1, 1, 2};
  std::vector<std::array<int, kMaxDim>> out;
  std::array<std::size_t, kMaxDim> digit{};
  while (true) {
    std::array<int, kMaxDim> k{};
    bool has_two = false;
    for (std::size_t i = 0; i < d; ++i) {
      k[i] = kValues[digit[i]];
      has_two = has_two || std::abs(k[i]) == 2;
    }
    if (has_two) out.push_back(k);
    std::size_t i = d;
    while (i > 0) {
      --i;
      if (++digit[i] < 4) break;
      digit[i] = 0;
      if (i == 0) return out;
    }
  }
}

/// The dyadic box covering with patches P_{j,k}, j_min <= j <= j_max.
inline Covering besov_covering(const QuasiNormContext& ctx, int j_min, int j_max, double c_split_factor = 4.0) {
  if (j_min > j_max) throw DomainError("besov_covering: j_min > j_max");
  const std::size_t d = ctx.dim();
  const auto ks = besov_index_set(d);
  HybridRegulation h = alpha_regulation(ctx, 1.0);
  const double r_min = std::ldexp(1.0, j_min - 1);
  const double c_split = c_split_factor * r_min;
  std::vector<Patch> patches;
  for (int j = j_min; j <= j_max; ++j) {
    for (const auto& k : ks) {
      Patch p;
      p.index = patches.size();
      p.besov = BesovIndex{j, k};
      const Point b = besov_B(ctx, k);
      Point scales(d), center(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double a = ctx.anisotropy[i];
        scales[i] = std::pow(2.0, j * a) * b[i];
        const int m = std::abs(k[i]);
        const double lo = std::pow((m - 1) * std::ldexp(1.0, j - 1), a);
        const double hi = std::pow(m * std::ldexp(1.0, j - 1), a);
        const double sign = k[i] > 0 ? 1.0 : -1.0;
        center[i] = sign * 0.5 * (lo + hi);
        if (0.5 * (lo + hi) - 1.5 * scales[i] <= 0.0 && m == 2)
          throw DomainError("besov_covering: anisotropy too large, Q boxes would reach the origin");
      }
      p.center = center;
      p.radius = std::ldexp(1.0, j);
      p.map = AffineMap::make(scales, center);
      // Smallest |.|_a over the closed P box, attained at its corner nearest the origin.
      Point corner(d);
      for (std::size_t i = 0; i < d; ++i)
        corner[i] = std::abs(k[i]) == 2 ? center[i] - (k[i] > 0 ? 1.0 : -1.0) * scales[i] : 0.0;
      p.klass = aniso_norm(ctx, corner) >= c_split ? PatchClass::J2 : PatchClass::J1;
      patches.push_back(std::move(p));
    }
  }
  Covering::Spec spec{PatchShape::Box, Point(d), 1.0, 1.0, {r_min, std::ldexp(1.0, j_max)}, c_split};
  return Covering(std::move(h), spec, std::move(patches));
}

/// {±n^beta} ∪ {±n^{-beta}}, 1 <= n <= n_max, beta = 1/(1 - alpha), sorted.
inline std::vector<double> alpha_knots_1d(double alpha, int n_max) {
  if (alpha == 1.0) throw DomainError("alpha_knots_1d: alpha = 1 is the Besov case, use besov_covering");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha_knots_1d: alpha must lie in [0, 1)");
  if (n_max < 2) throw DomainError("alpha_knots_1d: n_max must be >= 2");
  const double beta = 1.0 / (1.0 - alpha);
  std::vector<double> knots;
  for (int n = 1; n <= n_max; ++n) {
    const double hi = std::pow(n, beta);
    knots.insert(knots.end(), {hi, -hi});
    if (n > 1) knots.insert(knots.end(), {1.0 / hi, -1.0 / hi});
  }
  std::sort(knots.begin(), knots.end());
  return knots;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct AdmissibilityReport {
  std::size_t n_samples = 0;
  double covered_fraction = 0.0;
  std::size_t max_overlap = 0;
  double min_dist_to_origin = 0.0;
  double max_transition_norm = 0.0;
  std::vector<Point> uncovered;
};

/// Samples the inner annulus; coverage counts the sets P_j, overlap counts Q_j.
inline AdmissibilityReport check_admissible(const Covering& c, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 10000) throw DomainError("check_admissible: need at least 10^4 samples");
  const QuasiNormContext& ctx = c.context();
  AdmissibilityReport rep;
  rep.n_samples = n_samples;
  Rng rng(seed);
  std::size_t covered = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Point xi = c.sample_inner(rng);
    const auto ids = c.containing_Q(xi);
    rep.max_overlap = std::max(rep.max_overlap, ids.size());
    if (std::any_of(ids.begin(), ids.end(), [&](std::uint32_t j) { return c.in_P(j, xi); })) ++covered;
    else if (rep.uncovered.size() < 32) rep.uncovered.push_back(xi);
  }
  rep.covered_fraction = static_cast<double>(covered) / static_cast<double>(n_samples);
  const double K = ctx.K_est.value_or(1.0);
  rep.min_dist_to_origin = std::numeric_limits<double>::infinity();
  for (const Patch& p : c.patches()) {
    const double reach = c.shape() == PatchShape::Ball ? K * p.radius : 0.0;
    double dist = aniso_norm(ctx, p.center) - reach;
    if (c.shape() == PatchShape::Box) {
      // Closest point of the open Q box to the origin.
      Point nearest(c.dim());
      for (std::size_t i = 0; i < c.dim(); ++i) {
        const double lo = c.q_box_lo(p.index)[i], hi = c.q_box_hi(p.index)[i];
        nearest[i] = lo > 0.0 ? lo : (hi < 0.0 ? hi : 0.0);
      }
      dist = aniso_norm(ctx, nearest);
    }
    rep.min_dist_to_origin = std::min(rep.min_dist_to_origin, dist);
  }
  for (std::size_t j = 0; j < c.size(); ++j) {
    for (std::uint32_t k : c.neighbors(j)) {
      for (std::size_t i = 0; i < c.dim(); ++i)
        rep.max_transition_norm =
            std::max(rep.max_transition_norm, c.patch(j).map.scales[i] / c.patch(k).map.scales[i]);
    }
  }
  return rep;
}

struct PackingReport {
  std::size_t pairs_checked = 0;
  std::size_t violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();  // min d(xi_i, xi_j) / (s_i + s_j)
};

/// Exhaustive pairwise check that the packing balls B(xi_j, pack_ratio r_j)
/// are disjoint; a conservative box prefilter skips pairs that provably are.
inline PackingReport check_packing(const Covering& c) {
  if (c.shape() != PatchShape::Ball) throw DomainError("check_packing: ball coverings only");
  const QuasiNormContext& ctx = c.context();
  const Point kappa = detail::sum_power_slack(ctx);
  BoxIndex idx(c.dim());
  std::vector<double> s(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) {
    s[j] = c.pack_ratio() * c.patch(j).radius;
    Point w(c.dim());
    // Twice the packing radius, so near-touching pairs enter the margin statistic.
    for (std::size_t i = 0; i < c.dim(); ++i) w[i] = kappa[i] * std::pow(2.0 * s[j], ctx.anisotropy[i]);
    idx.insert(c.patch(j).center, w);
  }
  PackingReport rep;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const auto uj = static_cast<std::uint32_t>(j);
    for (std::uint32_t k : idx.intersecting(idx.lo(uj), idx.hi(uj))) {
      if (k <= j) continue;
      ++rep.pairs_checked;
      const double dist = quasi_dist(ctx, c.patch(j).center, c.patch(k).center);
      const double margin = dist / (s[j] + s[k]);
      rep.min_margin = std::min(rep.min_margin, margin);
      if (!(margin > 1.0)) ++rep.violations;
    }
  }
  return rep;
}

/// sup_i #{j : P_j of c2 meets P_i of c1} and the symmetric count.
struct CrossOverlap {
  std::size_t sup_J = 0;
  std::size_t sup_I = 0;
};

inline CrossOverlap cross_overlap(const Covering& c1, const Covering& c2) {
  if (c1.shape() != PatchShape::Ball || c2.shape() != PatchShape::Ball)
    throw DomainError("cross_overlap: ball coverings only");
  const QuasiNormContext& ctx = c1.context();
  auto count = [&](const Covering& x, const Covering& y) {
    std::size_t best = 0;
    for (const Patch& p : x.patches()) {
      const Point w = ball_halfwidths(ctx, p.radius);
      std::size_t n = 0;
      for (std::uint32_t k : y.touching_box(p.center - w, p.center + w))
        if (balls_intersect(ctx, p.center, p.radius, y.patch(k).center, y.patch(k).radius)) ++n;
      best = std::max(best, n);
    }
    return best;
  };
  return {count(c1, c2), count(c2, c1)};
}

struct TilingReport {
  std::size_t n_samples = 0;
  std::size_t uncovered = 0;
  std::size_t interior_collisions = 0;  // samples lying in two or more open P boxes
};

/// For box coverings: sample the annulus in the max gauge and count closed and open P memberships.
inline TilingReport check_tiling(const Covering& c, std::size_t n_samples, std::uint64_t seed) {
  if (c.shape() != PatchShape::Box) throw DomainError("check_tiling: box coverings only");
  const QuasiNormContext& ctx = c.context();
  TilingReport rep;
  rep.n_samples = n_samples;
  Rng rng(seed);
  const auto [lo, hi] = c.annulus();
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Point theta = random_direction(c.dim(), rng);
    const Point xi = dilate(ctx, log_uniform(lo, hi, rng) / max_gauge(ctx, theta), theta);
    std::size_t closed = 0, open = 0;
    for (std::uint32_t j : c.containing_Q(xi)) {
      const Point z = c.patch(j).map.inverse(xi);
      double m = 0.0;
      for (double zi : z) m = std::max(m, std::abs(zi));
      if (m <= 1.0) ++closed;
      if (m < 1.0) ++open;
    }
    if (closed == 0) ++rep.uncovered;
    if (open > 1) ++rep.interior_collisions;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Covering& c) {
  nlohmann::json j;
  j["shape"] = c.shape() == PatchShape::Ball ? "ball" : "box";
  j["anisotropy"] = to_json(c.context());
  j["regulation"] = to_json(c.regulation());
  j["p0"] = c.p0().to_vector();
  j["delta"] = c.delta();
  j["pack_ratio"] = c.pack_ratio();
  j["annulus"] = {c.annulus().first, c.annulus().second};
  j["C_split"] = c.c_split();
  nlohmann::json patches = nlohmann::json::array();
  for (const Patch& p : c.patches()) {
    nlohmann::json q;
    q["j"] = p.index;
    q["center"] = p.center.to_vector();
    q["radius"] = p.radius;
    q["scales"] = p.map.scales.to_vector();
    q["offset"] = p.map.offset.to_vector();
    q["klass"] = p.klass == PatchClass::J1 ? "J1" : "J2";
    if (p.besov)
      q["besov"] = {{"j", p.besov->j},
                    {"k", std::vector<int>(p.besov->k.begin(), p.besov->k.begin() + static_cast<long>(c.dim()))}};
    patches.push_back(std::move(q));
  }
  j["patches"] = std::move(patches);
  j["neighbors"] = c.adjacency();
  return j;
}

inline Covering covering_from_json(const nlohmann::json& j) {
  try {
    QuasiNormContext ctx = context_from_json(j.at("anisotropy"));
    HybridRegulation h = regulation_from_json(ctx, j.at("regulation"));
    Covering::Spec spec;
    const std::string shape = j.at("shape").get<std::string>();
    if (shape != "ball" && shape != "box") throw DomainError("covering: unknown shape '" + shape + "'");
    spec.shape = shape == "ball" ? PatchShape::Ball : PatchShape::Box;
    spec.p0 = Point::from(j.at("p0").get<std::vector<double>>());
    spec.delta = j.at("delta").get<double>();
    spec.pack_ratio = j.at("pack_ratio").get<double>();
    const auto ann = j.at("annulus").get<std::vector<double>>();
    if (ann.size() != 2) throw DomainError("covering: annulus must have two entries");
    spec.annulus = {ann[0], ann[1]};
    spec.c_split = j.at("C_split").get<double>();
    std::vector<Patch> patches;
    for (const auto& q : j.at("patches")) {
      Patch p;
      p.index = q.at("j").get<std::size_t>();
      p.center = Point::from(q.at("center").get<std::vector<double>>());
      p.radius = q.at("radius").get<double>();
      p.map = AffineMap::make(Point::from(q.at("scales").get<std::vector<double>>()),
                              Point::from(q.at("offset").get<std::vector<double>>()));
      const std::string klass = q.at("klass").get<std::string>();
      if (klass != "J1" && klass != "J2") throw DomainError("covering: unknown klass '" + klass + "'");
      p.klass = klass == "J1" ? PatchClass::J1 : PatchClass::J2;
      if (q.contains("besov")) {
        BesovIndex b;
        b.j = q.at("besov").at("j").get<int>();
        const auto k = q.at("besov").at("k").get<std::vector<int>>();
        if (k.size() != ctx.dim()) throw DomainError("covering: besov index dimension mismatch");
        std::copy(k.begin(), k.end(), b.k.begin());
        p.besov = b;
      }
      patches.push_back(std::move(p));
    }
    auto adj = j.at("neighbors").get<Covering::Adjacency>();
    return Covering(std::move(h), std::move(spec), std::move(patches), std::move(adj));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("covering: malformed JSON: ") + e.what());
  }
}

inline const std::string& Covering::id() const {
  std::call_once(id_cache_->once, [this] { id_cache_->value = hex64(fnv1a(to_json(*this).dump())); });
  return id_cache_->value;
}

/// Identity of a covering: FNV-1a of its canonical JSON serialization.
inline std::string covering_id(const Covering& c) { return c.id(); }

}  // namespace freqtile

#endif  // FREQTILE_COVERING_HPP
