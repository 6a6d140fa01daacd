// Bump function, BAPU psi_j = g_j / sum_k g_k and square-root BAPU
// phi_j = g_j / sqrt(sum_k g_k^2), where g_j(xi) = Phi(T_j^{-1} xi).

#ifndef FREQTILE_BAPU_HPP
#define FREQTILE_BAPU_HPP

#include "freqtile/covering.hpp"
#include "freqtile/parallel.hpp"
#include "freqtile/spectral.hpp"

namespace freqtile {

struct BumpFunction {
  QuasiNormContext ctx;
  Point p0;
  double inner_radius = 1.0;
  double outer_radius = 2.0;
  int order = 3;
  PatchShape shape = PatchShape::Ball;

  void validate() const {
    if (!(inner_radius > 0.0 && inner_radius < outer_radius)) throw DomainError("BumpFunction: need 0 < inner < outer");
    if (order < 1) throw DomainError("BumpFunction: order must be >= 1");
    if (p0.size() != ctx.dim()) throw DomainError("BumpFunction: p0 dimension mismatch");
  }
};

/// 1 on the inner set, 0 outside the outer set, smoothstep in between.
inline double bump_eval(const BumpFunction& b, const Point& zeta) {
  const double width = b.outer_radius - b.inner_radius;
  if (b.shape == PatchShape::Box) {
    double v = 1.0;
    for (std::size_t i = 0; i < zeta.size(); ++i) {
      const double t = std::abs(zeta[i] - b.p0[i]);
      if (t >= b.outer_radius) return 0.0;
      if (t > b.inner_radius) v *= 1.0 - smoothstep((t - b.inner_radius) / width, b.order);
    }
    return v;
  }
  // Ellipsoid tests settle the two flat regions without a root solve.
  double s_in = 0.0, s_out = 0.0;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const double z = zeta[i] - b.p0[i];
    const double a2 = 2.0 * b.ctx.anisotropy[i];
    s_in += z * z / std::pow(b.inner_radius, a2);
    s_out += z * z / std::pow(b.outer_radius, a2);
  }
  if (s_in <= 1.0) return 1.0;
  if (s_out >= 1.0) return 0.0;
  const double t = aniso_norm(b.ctx, zeta - b.p0);
  return 1.0 - smoothstep((t - b.inner_radius) / width, b.order);
}

/// Values g_k(xi) for every patch whose Q_k contains xi.
struct LocalBumps {
  std::vector<std::uint32_t> ids;
  std::vector<double> g;
  double sum = 0.0;
  double sum_sq = 0.0;

  double value(std::size_t j) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), static_cast<std::uint32_t>(j));
    return it != ids.end() && *it == j ? g[static_cast<std::size_t>(it - ids.begin())] : 0.0;
  }
};

class Bapu {
 public:
  explicit Bapu(std::shared_ptr<const Covering> covering, int order = 3, bool exhaustive_denominator = false)
      : cov_(std::move(covering)),
        bump_{cov_->context(), cov_->p0(), Covering::inner_radius(), cov_->outer_radius(), order, cov_->shape()},
        exhaustive_(exhaustive_denominator) {
    bump_.validate();
  }

  const Covering& covering() const { return *cov_; }
  std::shared_ptr<const Covering> covering_ptr() const { return cov_; }
  const BumpFunction& bump() const { return bump_; }
  std::size_t dim() const { return cov_->dim(); }
  std::size_t size() const { return cov_->size(); }

  double g(std::size_t j, const Point& xi) const { return bump_eval(bump_, cov_->patch(j).map.inverse(xi)); }

  /// All nonzero g_k(xi).  Candidates come from the covering's spatial index;
  /// the exhaustive mode scans every patch and exists to validate that index.
  LocalBumps local(const Point& xi) const {
    LocalBumps out;
    if (exhaustive_) {
      for (std::size_t k = 0; k < cov_->size(); ++k) push(out, k, xi);
    } else {
      for (std::uint32_t k : cov_->containing_Q(xi)) push(out, k, xi);
    }
    return out;
  }

  double psi(std::size_t j, const Point& xi) const { return normalized(j, xi, false); }
  double phi(std::size_t j, const Point& xi) const { return normalized(j, xi, true); }

  /// phi_j from precomputed local bumps, without the annulus check; 0 where g = 0.
  static double phi_from(const LocalBumps& loc, std::size_t j) {
    const double gj = loc.value(j);
    return gj == 0.0 ? 0.0 : gj / std::sqrt(loc.sum_sq);
  }

 private:
  void push(LocalBumps& out, std::size_t k, const Point& xi) const {
    const double v = g(k, xi);
    if (v == 0.0) return;
    out.ids.push_back(static_cast<std::uint32_t>(k));
    out.g.push_back(v);
    out.sum += v;
    out.sum_sq += v * v;
  }

  double normalized(std::size_t j, const Point& xi, bool root) const {
    cov_->patch(j);
    if (xi.size() != dim()) throw DomainError("Bapu: dimension mismatch");
    if (!cov_->in_annulus(xi)) throw DomainError("Bapu: xi lies outside the covered annulus");
    if (!cov_->in_Q(j, xi)) return 0.0;
    const double gj = g(j, xi);
    if (gj == 0.0) return 0.0;
    const LocalBumps loc = local(xi);
    return root ? gj / std::sqrt(loc.sum_sq) : gj / loc.sum;
  }

  std::shared_ptr<const Covering> cov_;
  BumpFunction bump_;
  bool exhaustive_;
};

inline double psi_eval(const Bapu& b, std::size_t j, const Point& xi) { return b.psi(j, xi); }
inline double phi_eval(const Bapu& b, std::size_t j, const Point& xi) { return b.phi(j, xi); }

struct PouReport {
  std::size_t n_samples = 0;
  double max_psi_residual = 0.0;
  double max_phi2_residual = 0.0;
  std::size_t uncovered = 0;  // samples with g(xi) = 0 (residual 1)
  Point worst_xi;
};

/// Max over inner-annulus samples of |sum_j psi_j - 1| and |sum_j phi_j^2 - 1|.
/// The sums add the individually normalized terms, so they measure the
/// floating-point and neighbor-set error of the evaluation path.
inline PouReport verify_pou(const Bapu& b, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 10000) throw DomainError("verify_pou: need at least 10^4 samples");
  const Covering& c = b.covering();
  std::vector<Point> pts(n_samples);
  Rng rng(seed);
  for (auto& p : pts) p = c.sample_inner(rng);
  std::vector<double> r_psi(n_samples), r_phi(n_samples);
  parallel_for(n_samples, [&](std::size_t s) {
    const LocalBumps loc = b.local(pts[s]);
    if (loc.ids.empty()) {
      r_psi[s] = r_phi[s] = 1.0;
      return;
    }
    const double root = std::sqrt(loc.sum_sq);
    double sp = 0.0, sq = 0.0;
    for (double gk : loc.g) {
      sp += gk / loc.sum;
      const double ph = gk / root;
      sq += ph * ph;
    }
    r_psi[s] = std::abs(sp - 1.0);
    r_phi[s] = std::abs(sq - 1.0);
  });
  PouReport rep;
  rep.n_samples = n_samples;
  rep.worst_xi = Point(c.dim());
  for (std::size_t s = 0; s < n_samples; ++s) {
    if (r_psi[s] == 1.0 && r_phi[s] == 1.0) ++rep.uncovered;
    if (std::max(r_psi[s], r_phi[s]) > std::max(rep.max_psi_residual, rep.max_phi2_residual)) rep.worst_xi = pts[s];
    rep.max_psi_residual = std::max(rep.max_psi_residual, r_psi[s]);
    rep.max_phi2_residual = std::max(rep.max_phi2_residual, r_phi[s]);
  }
  return rep;
}

enum class MultiplierMode { Psi, Phi2, Phi2Tilde };

/// The frequency-domain product m_j f^ with m_j = psi_j, phi_j^2 or
/// sum_{k in neighbors(j)} phi_k^2.  Points outside the covered annulus map to 0.
inline SpectralFunction multiplier_apply(const Bapu& b, std::size_t j, const SpectralFunction& f, MultiplierMode mode) {
  const Covering& c = b.covering();
  c.patch(j);
  std::vector<std::uint32_t> support{static_cast<std::uint32_t>(j)};
  if (mode == MultiplierMode::Phi2Tilde) support = c.neighbors(j);
  Box box{c.q_box_lo(support[0]), c.q_box_hi(support[0])};
  for (std::uint32_t k : support)
    for (std::size_t i = 0; i < c.dim(); ++i) {
      box.lo[i] = std::min(box.lo[i], c.q_box_lo(k)[i]);
      box.hi[i] = std::max(box.hi[i], c.q_box_hi(k)[i]);
    }
  auto cov = b.covering_ptr();
  auto eval = [b, j, f, mode, support, cov](const Point& xi) -> Complex {
    if (!cov->in_annulus(xi)) return {0.0, 0.0};
    double m = 0.0;
    if (mode == MultiplierMode::Phi2Tilde) {
      const LocalBumps loc = b.local(xi);
      if (loc.ids.empty()) return {0.0, 0.0};
      for (std::size_t t = 0; t < loc.ids.size(); ++t)
        if (std::binary_search(support.begin(), support.end(), loc.ids[t])) m += loc.g[t] * loc.g[t];
      m /= loc.sum_sq;
    } else {
      if (!cov->in_Q(j, xi)) return {0.0, 0.0};
      if (mode == MultiplierMode::Psi) {
        m = b.psi(j, xi);
      } else {
        const double p = b.phi(j, xi);
        m = p * p;
      }
    }
    return m == 0.0 ? Complex(0.0, 0.0) : m * f(xi);
  };
  return SpectralFunction(c.context(), eval, std::nullopt, std::nullopt, box);
}

}  // namespace freqtile

#endif  // FREQTILE_BAPU_HPP
