// Tight frame eta_{n,j} with eta^_{n,j} = phi_j e_{n,j}, where
//
//   e_{n,j}(xi) = (2a)^{-d/2} |T_j|^{-1/2} chi_{K_a}(T_j^{-1} xi) exp(i (pi/a) n . T_j^{-1} xi)
//
// and K_a is the cube of half-side a centered at p0.  Coefficients
// <phi_j f^, e_{n,j}> are computed by trapezoidal quadrature on an M^d grid
// over K_a, i.e. by one FFT per patch.

#ifndef FREQTILE_FRAME_HPP
#define FREQTILE_FRAME_HPP

#include <map>

#include "freqtile/bapu.hpp"
#include "freqtile/fft.hpp"

namespace freqtile {

/// Smallest half-side a with {|zeta - p0|_a <= 2} inside p0 + [-a, a]^d.
inline double cube_halfside(const QuasiNormContext& ctx) {
  double a = 0.0;
  for (double ai : ctx.anisotropy.exponents()) a = std::max(a, std::pow(2.0, ai));
  return a;
}

/// Box coverings use the cube [-2, 2]^d around their outer box [-3/2, 3/2]^d.
inline double cube_halfside(const Covering& c) {
  return c.shape() == PatchShape::Ball ? cube_halfside(c.context()) : 2.0;
}

struct FrameGeometry {
  double a = 2.0;
  int N_c = 16;
  int M = 64;

  void validate() const {
    if (!(a > 0.0)) throw DomainError("FrameGeometry: cube half-side must be positive");
    if (N_c < 0) throw DomainError("FrameGeometry: N_c must be nonnegative");
    if (M < 4 * N_c || M < 4 || M % 2 != 0) throw DomainError("FrameGeometry: need even M >= 4 N_c");
  }
};

inline FrameGeometry make_geometry(const Covering& c, int N_c, int M) {
  FrameGeometry g{cube_halfside(c), N_c, M};
  g.validate();
  return g;
}

using MultiIndex = std::array<int, kMaxDim>;

struct CoefficientEntry {
  std::uint32_t j = 0;
  MultiIndex n{};
  Complex c;
};

inline bool entry_key_less(const CoefficientEntry& x, const CoefficientEntry& y) {
  if (x.j != y.j) return x.j < y.j;
  return x.n < y.n;
}

/// Sparse frame coefficients, sorted by (j, n).
class CoefficientSet {
 public:
  CoefficientSet() = default;
  CoefficientSet(std::size_t dim, FrameGeometry geometry, std::string covering_id, int bump_order,
                 std::vector<CoefficientEntry> entries, std::vector<std::uint32_t> skipped = {},
                 std::map<std::uint32_t, double> patch_energy = {})
      : dim_(dim),
        geometry_(geometry),
        covering_id_(std::move(covering_id)),
        bump_order_(bump_order),
        entries_(std::move(entries)),
        skipped_(std::move(skipped)),
        patch_energy_(std::move(patch_energy)) {
    geometry_.validate();
    std::sort(entries_.begin(), entries_.end(), entry_key_less);
    for (const auto& e : entries_)
      for (std::size_t i = 0; i < dim_; ++i)
        if (std::abs(e.n[i]) > geometry_.N_c) throw DomainError("CoefficientSet: multi-index beyond N_c");
  }

  std::size_t dim() const { return dim_; }
  const FrameGeometry& geometry() const { return geometry_; }
  const std::string& covering_id() const { return covering_id_; }
  int bump_order() const { return bump_order_; }
  const std::vector<CoefficientEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::uint32_t>& skipped() const { return skipped_; }
  /// Per-patch quadrature value of ||phi_j f^||^2 (all M^d discrete coefficients).
  const std::map<std::uint32_t, double>& patch_energy() const { return patch_energy_; }

  std::pair<std::size_t, std::size_t> range(std::uint32_t j) const {
    auto lo = std::lower_bound(entries_.begin(), entries_.end(), j,
                               [](const CoefficientEntry& e, std::uint32_t v) { return e.j < v; });
    auto hi = std::upper_bound(lo, entries_.end(), j,
                               [](std::uint32_t v, const CoefficientEntry& e) { return v < e.j; });
    return {static_cast<std::size_t>(lo - entries_.begin()), static_cast<std::size_t>(hi - entries_.begin())};
  }
  std::vector<std::uint32_t> patches() const {
    std::vector<std::uint32_t> out;
    for (const auto& e : entries_)
      if (out.empty() || out.back() != e.j) out.push_back(e.j);
    return out;
  }
  double energy() const {
    double s = 0.0;
    for (const auto& e : entries_) s += std::norm(e.c);
    return s;
  }
  double patch_sum_sq(std::uint32_t j) const {
    auto [lo, hi] = range(j);
    double s = 0.0;
    for (std::size_t t = lo; t < hi; ++t) s += std::norm(entries_[t].c);
    return s;
  }

  /// Same metadata, different entries.
  CoefficientSet with_entries(std::vector<CoefficientEntry> entries) const {
    return CoefficientSet(dim_, geometry_, covering_id_, bump_order_, std::move(entries), skipped_, patch_energy_);
  }

 private:
  std::size_t dim_ = 1;
  FrameGeometry geometry_;
  std::string covering_id_;
  int bump_order_ = 3;
  std::vector<CoefficientEntry> entries_;
  std::vector<std::uint32_t> skipped_;
  std::map<std::uint32_t, double> patch_energy_;
};

namespace detail {

inline void check_geometry(const Bapu& b, const FrameGeometry& g) {
  g.validate();
  const double need = cube_halfside(b.covering());
  if (g.a < need * (1.0 - 1e-12)) throw DomainError("FrameGeometry: cube does not contain the reference set Q");
}

inline bool in_cube(const Point& zeta, const Point& p0, double a) {
  for (std::size_t i = 0; i < zeta.size(); ++i)
    if (std::abs(zeta[i] - p0[i]) > a) return false;
  return true;
}

inline Box q_box(const Covering& c, std::size_t j) { return {c.q_box_lo(j), c.q_box_hi(j)}; }

// Grid node zeta_m = p0 - a + 2 a m / M in every coordinate.
inline Point grid_node(const Point& p0, double a, int M, const MultiIndex& m) {
  Point z = p0;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += -a + 2.0 * a * m[i] / M;
  return z;
}

inline std::size_t power(int M, std::size_t d) {
  std::size_t t = 1;
  for (std::size_t i = 0; i < d; ++i) t *= static_cast<std::size_t>(M);
  return t;
}

}  // namespace detail

/// eta^_{n,j}(xi); 0 off Q_j.
inline Complex eta_hat_eval(const Bapu& b, const FrameGeometry& g, std::size_t j, const MultiIndex& n,
                            const Point& xi) {
  const Covering& c = b.covering();
  const Patch& p = c.patch(j);
  if (!c.in_Q(j, xi)) return {0.0, 0.0};
  const Point zeta = p.map.inverse(xi);
  if (!detail::in_cube(zeta, c.p0(), g.a)) return {0.0, 0.0};
  const double phi = Bapu::phi_from(b.local(xi), j);
  const double d = static_cast<double>(c.dim());
  double phase = 0.0;
  for (std::size_t i = 0; i < c.dim(); ++i) phase += n[i] * zeta[i];
  phase *= std::numbers::pi / g.a;
  return phi * std::pow(2.0 * g.a, -d / 2.0) / std::sqrt(p.map.det) * std::polar(1.0, phase);
}

/// Patches whose Q_j can meet the support of f.
inline std::vector<std::uint32_t> relevant_patches(const Covering& c, const SpectralFunction& f,
                                                   std::vector<std::uint32_t>* skipped = nullptr) {
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (f.may_touch(detail::q_box(c, j))) out.push_back(static_cast<std::uint32_t>(j));
    else if (skipped) skipped->push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

/// Samples of phi_j(T_j zeta) * f^(T_j zeta) on the M^d grid over K_a.
inline void sample_patch(const Bapu& b, const FrameGeometry& g, std::size_t j, const SpectralFunction* f, int M,
                         bool square_phi, FftBuffer& buf) {
  const Covering& c = b.covering();
  const Patch& p = c.patch(j);
  const std::size_t d = c.dim();
  MultiIndex m{};
  for (std::size_t flat = 0; flat < buf.size(); ++flat) {
    unravel(flat, M, d, m);
    const Point xi = p.map.apply(detail::grid_node(c.p0(), g.a, M, m));
    Complex v(0.0, 0.0);
    if (c.in_Q(j, xi)) {
      double phi = Bapu::phi_from(b.local(xi), j);
      if (square_phi) phi *= phi;
      if (phi != 0.0) v = f ? phi * (*f)(xi) : Complex(phi, 0.0);
    }
    buf[flat] = v;
  }
}

/// Frame coefficients c_{n,j} = <f^, eta^_{n,j}> for |n_i| <= N_c.
inline CoefficientSet analyze(const Bapu& b, const FrameGeometry& g, const SpectralFunction& f) {
  detail::check_geometry(b, g);
  const Covering& c = b.covering();
  const std::size_t d = c.dim();
  if (f.dim() != d) throw DomainError("analyze: dimension mismatch");
  std::vector<std::uint32_t> skipped;
  const auto patches = relevant_patches(c, f, &skipped);
  const int M = g.M, N = g.N_c;
  const std::size_t per_patch = detail::power(2 * N + 1, d);
  std::vector<std::vector<CoefficientEntry>> out(patches.size());
  std::vector<double> full_energy(patches.size());
  const double dd = static_cast<double>(d);

  parallel_for(patches.size(), [&](std::size_t t) {
    const std::uint32_t j = patches[t];
    const Patch& p = c.patch(j);
    FftBuffer buf(detail::power(M, d));
    sample_patch(b, g, j, &f, M, false, buf);
    fft_inplace(buf, M, d, -1);
    const double scale = std::sqrt(p.map.det) * std::pow(2.0 * g.a, -dd / 2.0) * std::pow(2.0 * g.a / M, dd);
    double total = 0.0;
    for (std::size_t k = 0; k < buf.size(); ++k) total += std::norm(buf[k]);
    full_energy[t] = total * scale * scale;
    auto& entries = out[t];
    entries.reserve(per_patch);
    MultiIndex idx{};
    for (std::size_t flat = 0; flat < per_patch; ++flat) {
      unravel(flat, 2 * N + 1, d, idx);
      CoefficientEntry e;
      e.j = j;
      std::size_t src = 0;
      double phase = 0.0;
      int parity = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const int n = idx[i] - N;
        e.n[i] = n;
        src = src * static_cast<std::size_t>(M) + static_cast<std::size_t>((n % M + M) % M);
        phase -= std::numbers::pi * n * c.p0()[i] / g.a;
        parity += n;
      }
      // zeta_m = p0 - a + 2am/M turns exp(-i pi n zeta_m / a) into
      // exp(-i pi n p0 / a) (-1)^n exp(-2 pi i n m / M).
      const double sign = (parity % 2 == 0) ? 1.0 : -1.0;
      e.c = scale * sign * std::polar(1.0, phase) * buf[src];
      entries.push_back(e);
    }
  });

  std::vector<CoefficientEntry> all;
  std::map<std::uint32_t, double> energy;
  for (std::size_t t = 0; t < patches.size(); ++t) {
    all.insert(all.end(), out[t].begin(), out[t].end());
    energy[patches[t]] = full_energy[t];
  }
  return CoefficientSet(d, g, c.id(), b.bump().order, std::move(all), std::move(skipped), std::move(energy));
}

/// Pointwise synthesis sum_j sum_n c_{n,j} eta^_{n,j}(xi) at many points.
inline std::vector<Complex> synthesize(const CoefficientSet& cs, const Bapu& b, const std::vector<Point>& points) {
  const Covering& c = b.covering();
  if (cs.covering_id() != c.id()) throw DomainError("synthesize: coefficients belong to a different covering");
  if (cs.dim() != c.dim()) throw DomainError("synthesize: dimension mismatch");
  const FrameGeometry& g = cs.geometry();
  const std::size_t d = c.dim();
  const int N = g.N_c;
  const double norm_const = std::pow(2.0 * g.a, -static_cast<double>(d) / 2.0);
  std::vector<Complex> out(points.size());
  parallel_for(points.size(), [&](std::size_t s) {
    const Point& xi = points[s];
    if (xi.size() != d) throw DomainError("synthesize: dimension mismatch");
    const LocalBumps loc = b.local(xi);
    Complex total(0.0, 0.0);
    std::vector<Complex> pw(static_cast<std::size_t>(d) * (2 * N + 1));
    for (std::size_t t = 0; t < loc.ids.size(); ++t) {
      const std::uint32_t j = loc.ids[t];
      auto [lo, hi] = cs.range(j);
      if (lo == hi) continue;
      const Patch& p = c.patch(j);
      const Point zeta = p.map.inverse(xi);
      if (!detail::in_cube(zeta, c.p0(), g.a)) continue;
      for (std::size_t i = 0; i < d; ++i) {
        const Complex w = std::polar(1.0, std::numbers::pi * zeta[i] / g.a);
        const Complex winv = std::conj(w);
        Complex up(1.0, 0.0), down(1.0, 0.0);
        pw[i * (2 * N + 1) + N] = 1.0;
        for (int n = 1; n <= N; ++n) {
          up *= w;
          down *= winv;
          pw[i * (2 * N + 1) + N + n] = up;
          pw[i * (2 * N + 1) + N - n] = down;
        }
      }
      Complex series(0.0, 0.0);
      for (std::size_t e = lo; e < hi; ++e) {
        const auto& entry = cs.entries()[e];
        Complex term = entry.c;
        for (std::size_t i = 0; i < d; ++i) term *= pw[i * (2 * N + 1) + N + entry.n[i]];
        series += term;
      }
      const double phi = loc.g[t] / std::sqrt(loc.sum_sq);
      total += phi * norm_const / std::sqrt(p.map.det) * series;
    }
    out[s] = total;
  });
  return out;
}

inline Complex synthesize(const CoefficientSet& cs, const Bapu& b, const Point& xi) {
  return synthesize(cs, b, std::vector<Point>{xi})[0];
}

/// sum |c|^2 / ||f||^2 with the norm taken from f's independent oracle.
inline double parseval_check(const CoefficientSet& cs, const SpectralFunction& f) {
  if (!f.l2_norm_oracle()) throw DomainError("parseval_check: f has no l2_norm_oracle");
  const double oracle = *f.l2_norm_oracle();
  const double e = cs.energy();
  if (oracle == 0.0) {
    if (e == 0.0) return 1.0;
    throw DomainError("parseval_check: zero oracle with nonzero coefficients");
  }
  return e / (oracle * oracle);
}

/// mu_j(y) = (2 pi)^{-d/2} int_{K_a} phi_j(T_j zeta) exp(i y.zeta) d zeta by
/// quadrature on a grid^d lattice; samples are cached on construction.
class AtomEvaluator {
 public:
  AtomEvaluator(const Bapu& b, const FrameGeometry& g, std::size_t j, int grid)
      : dim_(b.dim()), a_(g.a), grid_(grid), map_(b.covering().patch(j).map) {
    if (grid < 64) throw DomainError("eta_time_eval: grid must be >= 64");
    detail::check_geometry(b, g);
    const Covering& c = b.covering();
    FftBuffer buf(detail::power(grid, dim_));
    sample_patch(b, g, j, nullptr, grid, false, buf);
    MultiIndex m{};
    for (std::size_t flat = 0; flat < buf.size(); ++flat) {
      if (buf[flat].real() == 0.0) continue;
      unravel(flat, grid, dim_, m);
      nodes_.push_back(detail::grid_node(c.p0(), a_, grid, m));
      weights_.push_back(buf[flat].real());
    }
    cell_ = std::pow(2.0 * a_ / grid, static_cast<double>(dim_)) * std::pow(2.0 * std::numbers::pi, -0.5 * dim_);
  }

  Complex mu(const Point& y) const {
    Complex s(0.0, 0.0);
    for (std::size_t t = 0; t < nodes_.size(); ++t) {
      double phase = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) phase += y[i] * nodes_[t][i];
      s += weights_[t] * std::polar(1.0, phase);
    }
    return cell_ * s;
  }

  /// eta_{n,j}(x) = (2a)^{-d/2} |T_j|^{1/2} exp(i x.b_j) mu_j((pi/a) n + A_j^T x).
  Complex eta(const MultiIndex& n, const Point& x) const {
    Point y(dim_);
    double phase = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      y[i] = std::numbers::pi / a_ * n[i] + map_.scales[i] * x[i];
      phase += x[i] * map_.offset[i];
    }
    return std::pow(2.0 * a_, -0.5 * dim_) * std::sqrt(map_.det) * std::polar(1.0, phase) * mu(y);
  }

  /// Largest |y| at which the quadrature still resolves the integrand's oscillation.
  double y_limit() const { return std::numbers::pi * grid_ / (4.0 * a_); }

  /// max over a y-lattice in [-y_max, y_max]^d of |mu_j(y)| (1 + |y|)^2.
  double decay_constant(int points_per_axis) const {
    const double ymax = y_limit();
    double best = 0.0;
    MultiIndex m{};
    const std::size_t total = detail::power(points_per_axis, dim_);
    for (std::size_t flat = 0; flat < total; ++flat) {
      unravel(flat, points_per_axis, dim_, m);
      Point y(dim_);
      for (std::size_t i = 0; i < dim_; ++i) y[i] = -ymax + 2.0 * ymax * m[i] / (points_per_axis - 1);
      const double r = y.euclidean();
      best = std::max(best, std::abs(mu(y)) * (1.0 + r) * (1.0 + r));
    }
    return best;
  }

 private:
  std::size_t dim_;
  double a_;
  int grid_;
  AffineMap map_;
  std::vector<Point> nodes_;
  std::vector<double> weights_;
  double cell_ = 1.0;
};

inline Complex eta_time_eval(const Bapu& b, const FrameGeometry& g, std::size_t j, const MultiIndex& n,
                             const Point& x, int grid) {
  return AtomEvaluator(b, g, j, grid).eta(n, x);
}

}  // namespace freqtile

#endif  // FREQTILE_FRAME_HPP
