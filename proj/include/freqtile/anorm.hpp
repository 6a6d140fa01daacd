// Anisotropic quasi-norm |.|_a, dilations D_a(t) and the induced quasi-distance.
//
// For an anisotropy a = (a_1, ..., a_d) with a_i > 0 and sum(a) = d, the
// quasi-norm of xi != 0 is the unique t > 0 with |D_a(1/t) xi| = 1.  Balls of
// the quasi-distance d(xi, zeta) = |xi - zeta|_a are axis-aligned ellipsoids
// with semi-axes R^{a_i}; several helpers below exploit that to avoid root
// solves in hot loops.

#ifndef FREQTILE_ANORM_HPP
#define FREQTILE_ANORM_HPP

#include <limits>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "freqtile/common.hpp"

namespace freqtile {

class Anisotropy {
 public:
  explicit Anisotropy(std::vector<double> a) : a_(std::move(a)) {
    if (a_.empty() || a_.size() > kMaxDim) throw DomainError("Anisotropy: dimension must be in [1, 4]");
    double sum = 0.0;
    for (double ai : a_) {
      if (!(ai > 0.0) || !std::isfinite(ai)) throw DomainError("Anisotropy: entries must be positive");
      sum += ai;
    }
    const double d = static_cast<double>(a_.size());
    if (std::abs(sum - d) > 1e-12 * d) throw DomainError("Anisotropy: entries must sum to the dimension");
    alpha1_ = *std::min_element(a_.begin(), a_.end());
    alpha2_ = *std::max_element(a_.begin(), a_.end());
  }
  static Anisotropy isotropic(std::size_t d) { return Anisotropy(std::vector<double>(d, 1.0)); }

  std::size_t dim() const { return a_.size(); }
  double operator[](std::size_t i) const { return a_[i]; }
  std::span<const double> exponents() const { return a_; }
  double alpha1() const { return alpha1_; }
  double alpha2() const { return alpha2_; }
  bool is_isotropic() const { return alpha1_ == 1.0 && alpha2_ == 1.0; }

  friend bool operator==(const Anisotropy& x, const Anisotropy& y) { return x.a_ == y.a_; }

 private:
  std::vector<double> a_;
  double alpha1_ = 1.0;
  double alpha2_ = 1.0;
};

/// Anisotropy plus solver tolerance and the empirical quasi-triangle constant.
struct QuasiNormContext {
  explicit QuasiNormContext(Anisotropy a, double tol = 1e-10) : anisotropy(std::move(a)), root_tol(tol) {
    if (!(root_tol > 0.0) || root_tol > 1e-6) throw DomainError("QuasiNormContext: root_tol must lie in (0, 1e-6]");
  }

  std::size_t dim() const { return anisotropy.dim(); }

  /// Populated by estimate_K; coverings require it.
  double K() const {
    if (!K_est) throw DomainError("QuasiNormContext: K_est not estimated");
    return *K_est;
  }

  Anisotropy anisotropy;
  double root_tol;
  std::optional<double> K_est;
};

/// Diagonal matrix stored by its entries.
struct Diagonal {
  Point entries;

  Point apply(const Point& x) const {
    Point y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= entries[i];
    return y;
  }
  Point solve(const Point& y) const {
    Point x = y;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] /= entries[i];
    return x;
  }
  double det() const {
    double p = 1.0;
    for (double e : entries) p *= e;
    return p;
  }
};

inline Diagonal dilation(const QuasiNormContext& ctx, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("dilation: t must be positive and finite");
  Point e(ctx.dim());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::pow(t, ctx.anisotropy[i]);
  return {e};
}

/// D_a(t) xi without materializing the matrix.
inline Point dilate(const QuasiNormContext& ctx, double t, Point xi) {
  for (std::size_t i = 0; i < xi.size(); ++i) xi[i] *= std::pow(t, ctx.anisotropy[i]);
  return xi;
}

namespace detail {

// Residual in log-space: F(u) = sum xi_i^2 exp(-2 a_i u) - 1, strictly
// decreasing and convex in u = log t.
inline double residual(const Anisotropy& a, const Point& xi, double u, double* slope) {
  double f = -1.0;
  double df = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (xi[i] == 0.0) continue;
    const double term = xi[i] * xi[i] * std::exp(-2.0 * a[i] * u);
    f += term;
    df -= 2.0 * a[i] * term;
  }
  if (slope) *slope = df;
  return f;
}

}  // namespace detail

/// |xi|_a; 0 for xi = 0.
///
/// The root of the log-space residual is bracketed by
///   lo = max_i log|xi_i| / a_i            (one term alone already reaches 1)
///   hi = max_i (log|xi_i| + log(d)/2) / a_i
/// and found by Newton iteration started at lo.  Convexity makes the Newton
/// iterates increase monotonically towards the root, so no step can leave the
/// bracket; bisection is kept as a guard against rounding.
inline double aniso_norm(const QuasiNormContext& ctx, const Point& xi) {
  if (xi.size() != ctx.dim()) throw DomainError("aniso_norm: dimension mismatch");
  if (!xi.is_finite()) throw DomainError("aniso_norm: non-finite input");
  if (xi.is_zero()) return 0.0;
  const Anisotropy& a = ctx.anisotropy;
  if (a.is_isotropic()) return xi.euclidean();
  if (xi.size() == 1) return std::pow(std::abs(xi[0]), 1.0 / a[0]);

  const double half_log_d = 0.5 * std::log(static_cast<double>(xi.size()));
  double lo = -std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (xi[i] == 0.0) continue;
    const double l = std::log(std::abs(xi[i]));
    lo = std::max(lo, l / a[i]);
    hi = std::max(hi, (l + half_log_d) / a[i]);
  }
  double u = lo;
  for (int it = 0; it < 100; ++it) {
    double df = 0.0;
    const double f = detail::residual(a, xi, u, &df);
    if (f == 0.0) break;
    if (f > 0.0) lo = std::max(lo, u);
    else hi = std::min(hi, u);
    double next = u - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - u);
    u = next;
    if (step <= 0.05 * ctx.root_tol || hi - lo <= 0.05 * ctx.root_tol) break;
  }
  return std::exp(u);
}

inline double quasi_dist(const QuasiNormContext& ctx, const Point& xi, const Point& zeta) {
  return aniso_norm(ctx, xi - zeta);
}

/// Exact membership test for the open quasi-ball B_d(center, radius).
inline bool in_ball(const QuasiNormContext& ctx, const Point& center, double radius, const Point& xi) {
  double s = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double diff = xi[i] - center[i];
    s += diff * diff / std::pow(radius, 2.0 * ctx.anisotropy[i]);
  }
  return s < 1.0;
}

/// |xi_i| <= |xi|_a^{a_i}: the axis-aligned box containing B_d(0, radius).
inline Point ball_halfwidths(const QuasiNormContext& ctx, double radius) {
  Point w(ctx.dim());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::pow(radius, ctx.anisotropy[i]);
  return w;
}

/// Whether the closed quasi-balls B(c1, r1) and B(c2, r2) intersect.
///
/// Both are ellipsoids with diagonal shape matrices S_k = diag(r_k^{2 a_i});
/// they intersect iff max_{s in (0,1)} sum_i D_i^2 s(1-s) / (s S1_i + (1-s) S2_i) <= 1
/// where D = c2 - c1.  The maximized function is concave, so golden-section
/// search is exact up to the iteration tolerance.
inline bool balls_intersect(const QuasiNormContext& ctx, const Point& c1, double r1, const Point& c2, double r2) {
  const std::size_t d = ctx.dim();
  std::array<double, kMaxDim> d2{}, s1{}, s2{};
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = c2[i] - c1[i];
    d2[i] = diff * diff;
    s1[i] = std::pow(r1, 2.0 * ctx.anisotropy[i]);
    s2[i] = std::pow(r2, 2.0 * ctx.anisotropy[i]);
    // Separated along a coordinate axis: the bounding boxes are disjoint.
    if (std::abs(diff) > std::sqrt(s1[i]) + std::sqrt(s2[i])) return false;
  }
  auto g = [&](double s) {
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i) v += d2[i] * s * (1.0 - s) / (s * s1[i] + (1.0 - s) * s2[i]);
    return v;
  };
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double g1 = g(x1), g2 = g(x2);
  for (int it = 0; it < 80; ++it) {
    if (g1 > 1.0 + 1e-12 || g2 > 1.0 + 1e-12) return false;
    if (g1 < g2) {
      lo = x1; x1 = x2; g1 = g2;
      x2 = lo + kInvPhi * (hi - lo); g2 = g(x2);
    } else {
      hi = x2; x2 = x1; g2 = g1;
      x1 = hi - kInvPhi * (hi - lo); g1 = g(x1);
    }
  }
  return std::max(g1, g2) <= 1.0 + 1e-12;
}

/// Point with |.|_a = r in the direction of the Euclidean unit vector theta.
inline Point at_norm(const QuasiNormContext& ctx, double r, const Point& theta) {
  return dilate(ctx, r, theta);
}

/// Draw xi with |xi|_a log-uniform on [lo, hi] and a uniform direction.
inline Point sample_log_annulus(const QuasiNormContext& ctx, double lo, double hi, Rng& rng) {
  const double r = log_uniform(lo, hi, rng);
  return at_norm(ctx, r, random_direction(ctx.dim(), rng));
}

/// Empirical quasi-triangle constant: 1.1 times the largest ratio
/// |xi + zeta|_a / (|xi|_a + |zeta|_a) over random pairs.  Stored in ctx.K_est.
inline double estimate_K(QuasiNormContext& ctx, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw DomainError("estimate_K: need at least 100 samples");
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Point xi = sample_log_annulus(ctx, 1e-3, 1e3, rng);
    Point zeta = sample_log_annulus(ctx, 1e-3, 1e3, rng);
    // Every eighth pair probes the same-direction extreme of the ratio.
    if (s % 8 == 0) zeta = dilate(ctx, log_uniform(0.25, 4.0, rng), xi);
    const double denom = aniso_norm(ctx, xi) + aniso_norm(ctx, zeta);
    worst = std::max(worst, aniso_norm(ctx, xi + zeta) / denom);
  }
  ctx.K_est = 1.1 * worst;
  return *ctx.K_est;
}

inline nlohmann::json to_json(const QuasiNormContext& ctx) {
  nlohmann::json j;
  j["a"] = std::vector<double>(ctx.anisotropy.exponents().begin(), ctx.anisotropy.exponents().end());
  j["root_tol"] = ctx.root_tol;
  if (ctx.K_est) j["K_est"] = *ctx.K_est;
  return j;
}

inline QuasiNormContext context_from_json(const nlohmann::json& j) {
  QuasiNormContext ctx(Anisotropy(j.at("a").get<std::vector<double>>()), j.value("root_tol", 1e-10));
  if (j.contains("K_est")) ctx.K_est = j.at("K_est").get<double>();
  return ctx;
}

/// Parse "a1,a2,..." as used on the command line.
inline Anisotropy parse_anisotropy(const std::string& text) {
  std::vector<double> a;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      a.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DomainError("anisotropy: cannot parse '" + item + "'");
    }
  }
  return Anisotropy(std::move(a));
}

}  // namespace freqtile

#endif  // FREQTILE_ANORM_HPP
