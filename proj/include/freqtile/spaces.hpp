// Decomposition-space norms, coefficient-space norms, thresholding and the
// retract check.
//
// Spatial L_p norms go through FFTs: for samples G of g^ on a uniform grid
// with spacing D, nu(y) = D^d sum_m G_m exp(i y.zeta_m) is (2 pi)^{d/2} g(y)
// up to a unimodular factor, sampled at y-spacing 2 pi / (L M D).

#ifndef FREQTILE_SPACES_HPP
#define FREQTILE_SPACES_HPP

#include <limits>

#include "freqtile/frame.hpp"

namespace freqtile {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct SpaceParams {
  double p = 2.0;
  double q = 2.0;
  double beta = 0.0;

  void validate() const {
    if (!(p > 0.0) || std::isnan(p)) throw DomainError("SpaceParams: p must lie in (0, inf]");
    if (!(q > 0.0) || std::isnan(q)) throw DomainError("SpaceParams: q must lie in (0, inf]");
    if (!std::isfinite(beta)) throw DomainError("SpaceParams: beta must be finite");
  }
};

struct NormReport {
  double decomposition_norm = 0.0;
  double frame_norm = 0.0;
  double coefficient_norm = 0.0;
  std::vector<std::pair<std::uint32_t, double>> per_patch_terms;
  double max_tail = 0.0;           // largest spatial tail fraction over patches
  bool reduced_accuracy = false;   // p < 1
};

/// (sum t^q)^{1/q}, or max for q = inf.
inline double lq_aggregate(const std::vector<double>& terms, double q) {
  if (std::isinf(q)) {
    double m = 0.0;
    for (double t : terms) m = std::max(m, t);
    return m;
  }
  double s = 0.0;
  for (double t : terms) s += std::pow(t, q);
  return std::pow(s, 1.0 / q);
}

struct SpatialNorm {
  double value = 0.0;
  double tail = 0.0;  // share of sum |nu|^2 in the outer half of the y-period
};

/// ||g||_{L_p} for g^ sampled on an M^d grid with the given spacing.
/// The samples must vanish near the grid boundary.  nu is evaluated on a
/// y-lattice refined `oversample` times per axis, one shifted FFT per offset;
/// 0 picks 32 in one dimension and 8 otherwise.
inline SpatialNorm spatial_lp(const FftBuffer& samples, int M, std::size_t d, const Point& spacing, double p,
                              int oversample = 0) {
  if (samples.size() != detail::power(M, d)) throw DomainError("spatial_lp: sample count mismatch");
  const int L = oversample > 0 ? oversample : (d == 1 ? 32 : 8);
  double cell = 1.0;
  for (std::size_t i = 0; i < d; ++i) cell *= spacing[i];
  const double scale = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(d));

  if (p == 2.0) {
    double s = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) s += std::norm(samples[k]);
    return {std::sqrt(s * cell), 0.0};
  }

  double dy_cell = 1.0;
  Point dy(d);
  for (std::size_t i = 0; i < d; ++i) {
    dy[i] = 2.0 * std::numbers::pi / (L * M * spacing[i]);
    dy_cell *= dy[i];
  }

  // Offset s shifts y by s dy: multiply G_m by exp(2 pi i s.m / (L M)).
  FftBuffer buf(samples.size());
  MultiIndex m{}, k{}, shift{};
  double sum = 0.0, best = 0.0, all2 = 0.0, outer2 = 0.0;
  Point best_y(d);
  const std::size_t n_shifts = detail::power(L, d);
  for (std::size_t sf = 0; sf < n_shifts; ++sf) {
    unravel(sf, L, d, shift);
    for (std::size_t flat = 0; flat < samples.size(); ++flat) {
      if (samples[flat] == Complex(0.0, 0.0)) {
        buf[flat] = 0.0;
        continue;
      }
      unravel(flat, M, d, m);
      double ph = 0.0;
      for (std::size_t i = 0; i < d; ++i) ph += static_cast<double>(shift[i]) * m[i];
      buf[flat] = samples[flat] * std::polar(1.0, 2.0 * std::numbers::pi * ph / (static_cast<double>(L) * M));
    }
    fft_inplace(buf, M, d, +1);
    for (std::size_t flat = 0; flat < buf.size(); ++flat) {
      const double v = cell * std::abs(buf[flat]);
      unravel(flat, M, d, k);
      bool outer = false;
      for (std::size_t i = 0; i < d; ++i) {
        const int kk = k[i] < M / 2 ? k[i] : M - k[i];
        if (kk > M / 4) outer = true;
      }
      all2 += v * v;
      if (outer) outer2 += v * v;
      if (std::isinf(p)) {
        if (v > best) {
          best = v;
          for (std::size_t i = 0; i < d; ++i)
            best_y[i] = ((k[i] < M / 2 ? k[i] : k[i] - M) * L + shift[i]) * dy[i];
        }
      } else {
        sum += std::pow(v, p);
      }
    }
  }
  const double tail = all2 > 0.0 ? outer2 / all2 : 0.0;
  if (!std::isinf(p)) return {scale * std::pow(sum * dy_cell, 1.0 / p), tail};
  if (best == 0.0) return {0.0, tail};

  // Refine the grid maximum by coordinate-wise golden-section search on the
  // directly evaluated sum.
  std::vector<Point> nodes;
  std::vector<Complex> vals;
  for (std::size_t flat = 0; flat < samples.size(); ++flat) {
    if (samples[flat] == Complex(0.0, 0.0)) continue;
    unravel(flat, M, d, m);
    Point z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = m[i] * spacing[i];
    nodes.push_back(z);
    vals.push_back(samples[flat]);
  }
  auto nu = [&](const Point& y) {
    Complex s(0.0, 0.0);
    for (std::size_t t = 0; t < nodes.size(); ++t) {
      double ph = 0.0;
      for (std::size_t i = 0; i < d; ++i) ph += y[i] * nodes[t][i];
      s += vals[t] * std::polar(1.0, ph);
    }
    return cell * std::abs(s);
  };
  Point y = best_y;
  double val = nu(y);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (std::size_t i = 0; i < d; ++i) {
      double lo = y[i] - dy[i], hi = y[i] + dy[i];
      Point t = y;
      auto at = [&](double v) {
        t[i] = v;
        return nu(t);
      };
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      double f1 = at(x1), f2 = at(x2);
      for (int it = 0; it < 40; ++it) {
        if (f1 > f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - gr * (hi - lo);
          f1 = at(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + gr * (hi - lo);
          f2 = at(x2);
        }
      }
      const double xm = 0.5 * (lo + hi), fm = at(xm);
      if (fm > val) {
        val = fm;
        y[i] = xm;
      }
    }
  }
  return {scale * val, tail};
}

namespace detail {

// Samples of f on the grid lo + (hi - lo) m / M.
inline void sample_box(const SpectralFunction::Evaluator& f, const Box& box, int M, std::size_t d, FftBuffer& buf,
                       Point& spacing) {
  spacing = Point(d);
  for (std::size_t i = 0; i < d; ++i) spacing[i] = (box.hi[i] - box.lo[i]) / M;
  MultiIndex m{};
  Point xi(d);
  for (std::size_t flat = 0; flat < buf.size(); ++flat) {
    unravel(flat, M, d, m);
    for (std::size_t i = 0; i < d; ++i) xi[i] = box.lo[i] + m[i] * spacing[i];
    buf[flat] = f(xi);
  }
}

inline double patch_weight(const Covering& c, std::size_t j, double exponent) {
  return exponent == 0.0 ? 1.0 : std::pow(c.regulation_at(j), exponent);
}

inline double lp_of(const std::vector<Complex>& xs, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (const auto& x : xs) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (const auto& x : xs) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

// Per-patch (sum_n |c_{n,j}|^p)^{1/p}, in patch order.
inline std::vector<std::pair<std::uint32_t, double>> patch_lp(const CoefficientSet& cs, double p) {
  std::vector<std::pair<std::uint32_t, double>> out;
  for (std::uint32_t j : cs.patches()) {
    auto [lo, hi] = cs.range(j);
    std::vector<Complex> xs;
    for (std::size_t t = lo; t < hi; ++t) xs.push_back(cs.entries()[t].c);
    out.emplace_back(j, lp_of(xs, p));
  }
  return out;
}

inline void check_match(const CoefficientSet& cs, const Covering& c, const char* who) {
  if (cs.covering_id() != c.id()) throw DomainError(std::string(who) + ": coefficients belong to a different covering");
}

}  // namespace detail

/// ||phi_j^2(D) f||_{L_p} for one patch, sampled on a grid^d lattice over the patch cube.
inline SpatialNorm patch_lp_norm(const Bapu& b, std::size_t j, const SpectralFunction& f, double p, int grid) {
  const Covering& c = b.covering();
  const Patch& pt = c.patch(j);
  const std::size_t d = c.dim();
  const FrameGeometry g{cube_halfside(c), 1, grid};
  FftBuffer buf(detail::power(grid, d));
  sample_patch(b, g, j, &f, grid, true, buf);
  Point spacing(d);
  for (std::size_t i = 0; i < d; ++i) spacing[i] = 2.0 * g.a / grid;
  SpatialNorm s = spatial_lp(buf, grid, d, spacing, p);
  // g^(xi) = G(T^{-1} xi): Plancherel picks up |T|^{1/2}, the spatial side |T|^{1 - 1/p}.
  s.value *= std::isinf(p) ? pt.map.det : std::pow(pt.map.det, 1.0 - 1.0 / p);
  return s;
}

/// (sum_j (h(xi_j)^beta ||phi_j^2(D) f||_{L_p})^q)^{1/q}.
inline NormReport decomposition_norm(const Bapu& b, const SpectralFunction& f, const SpaceParams& params, int grid) {
  params.validate();
  if (!f.support_hint()) throw DomainError("decomposition_norm: f needs a support_hint");
  if (grid < 128 || grid % 2 != 0) throw DomainError("decomposition_norm: grid must be even and >= 128");
  const Covering& c = b.covering();
  const auto patches = relevant_patches(c, f);
  std::vector<double> terms(patches.size()), tails(patches.size());
  parallel_for(patches.size(), [&](std::size_t t) {
    const SpatialNorm s = patch_lp_norm(b, patches[t], f, params.p, grid);
    terms[t] = detail::patch_weight(c, patches[t], params.beta) * s.value;
    tails[t] = s.tail;
  });
  NormReport rep;
  rep.reduced_accuracy = params.p < 1.0;
  for (std::size_t t = 0; t < patches.size(); ++t) {
    rep.per_patch_terms.emplace_back(patches[t], terms[t]);
    rep.max_tail = std::max(rep.max_tail, tails[t]);
  }
  rep.decomposition_norm = lq_aggregate(terms, params.q);
  return rep;
}

/// Sequence-space norm with weight h(xi_j)^{beta + d/2 - d/p}.
inline double coefficient_norm(const CoefficientSet& cs, const Covering& c, const SpaceParams& params) {
  params.validate();
  detail::check_match(cs, c, "coefficient_norm");
  const double d = static_cast<double>(c.dim());
  const double expo = params.beta + d / 2.0 - (std::isinf(params.p) ? 0.0 : d / params.p);
  std::vector<double> terms;
  for (auto [j, v] : detail::patch_lp(cs, params.p)) terms.push_back(detail::patch_weight(c, j, expo) * v);
  return lq_aggregate(terms, params.q);
}

/// Right side of the norm equivalence, using <f, eta^p_{n,j}> = |T_j|^{1/2 - 1/p} c_{n,j}.
inline double frame_norm(const CoefficientSet& cs, const Covering& c, const SpaceParams& params) {
  params.validate();
  detail::check_match(cs, c, "frame_norm");
  const double expo = 0.5 - (std::isinf(params.p) ? 0.0 : 1.0 / params.p);
  std::vector<double> terms;
  for (auto [j, v] : detail::patch_lp(cs, params.p))
    terms.push_back(detail::patch_weight(c, j, params.beta) * std::pow(c.patch(j).map.det, expo) * v);
  return lq_aggregate(terms, params.q);
}

/// Keeps the `keep` largest |c| (ties by (j, n)) or all with |c| >= tau.
inline CoefficientSet threshold(const CoefficientSet& cs, std::optional<std::size_t> keep,
                                std::optional<double> tau = std::nullopt) {
  if (keep && tau) throw DomainError("threshold: give either keep or tau, not both");
  if (!keep && !tau) throw DomainError("threshold: need keep or tau");
  std::vector<CoefficientEntry> es = cs.entries();
  if (tau) {
    if (!(*tau >= 0.0)) throw DomainError("threshold: tau must be nonnegative");
    std::erase_if(es, [&](const CoefficientEntry& e) { return std::abs(e.c) < *tau; });
    return cs.with_entries(std::move(es));
  }
  const std::size_t k = std::min(*keep, es.size());
  std::stable_sort(es.begin(), es.end(), [](const CoefficientEntry& x, const CoefficientEntry& y) {
    const double ax = std::abs(x.c), ay = std::abs(y.c);
    if (ax != ay) return ax > ay;
    return entry_key_less(x, y);
  });
  es.resize(k);
  return cs.with_entries(std::move(es));
}

/// ||f^ - synthesize(c)|| / ||f^|| by midpoint quadrature on about n_samples
/// points over the box holding supp f^ and the Q-boxes of the patches in c.
inline double reconstruct_error(const SpectralFunction& f, const CoefficientSet& cs, const Bapu& b,
                                std::size_t n_samples) {
  if (!f.l2_norm_oracle()) throw DomainError("reconstruct_error: f has no l2_norm_oracle");
  auto sb = f.support_box();
  if (!sb) throw DomainError("reconstruct_error: f has unbounded support");
  const Covering& c = b.covering();
  const std::size_t d = c.dim();
  Box box = *sb;
  for (std::uint32_t j : cs.patches())
    for (std::size_t i = 0; i < d; ++i) {
      box.lo[i] = std::min(box.lo[i], c.q_box_lo(j)[i]);
      box.hi[i] = std::max(box.hi[i], c.q_box_hi(j)[i]);
    }
  const int per_axis = std::max(2, static_cast<int>(std::ceil(std::pow(static_cast<double>(n_samples), 1.0 / d))));
  std::vector<Point> pts;
  pts.reserve(detail::power(per_axis, d));
  MultiIndex m{};
  double cell = 1.0;
  for (std::size_t i = 0; i < d; ++i) cell *= (box.hi[i] - box.lo[i]) / per_axis;
  for (std::size_t flat = 0; flat < detail::power(per_axis, d); ++flat) {
    unravel(flat, per_axis, d, m);
    Point x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = box.lo[i] + (m[i] + 0.5) * (box.hi[i] - box.lo[i]) / per_axis;
    pts.push_back(x);
  }
  std::vector<Complex> syn(pts.size(), Complex(0.0, 0.0));
  if (cs.size() > 0) syn = synthesize(cs, b, pts);
  std::vector<double> num(pts.size()), den(pts.size());
  parallel_for(pts.size(), [&](std::size_t s) {
    const Complex v = f(pts[s]);
    num[s] = std::norm(syn[s] - v);
    den[s] = std::norm(v);
  });
  double sn = 0.0, sd = 0.0;
  for (std::size_t s = 0; s < pts.size(); ++s) {
    sn += num[s];
    sd += den[s];
  }
  const double oracle2 = *f.l2_norm_oracle() * *f.l2_norm_oracle();
  if (oracle2 == 0.0) return sn == 0.0 ? 0.0 : kInfinity;
  if (std::abs(sd * cell - oracle2) > 0.05 * oracle2)
    throw DomainError("reconstruct_error: n_samples too small to resolve f");
  return std::sqrt(sn / sd);
}

namespace detail {

inline Box image_box(const AffineMap& T, const Box& b) {
  Box out{Point(b.lo.size()), Point(b.lo.size())};
  for (std::size_t i = 0; i < b.lo.size(); ++i) {
    const double x = T.scales[i] * b.lo[i] + T.offset[i], y = T.scales[i] * b.hi[i] + T.offset[i];
    out.lo[i] = std::min(x, y);
    out.hi[i] = std::max(x, y);
  }
  return out;
}

inline Box enlarge(const Box& b, double factor) {
  Box out = b;
  for (std::size_t i = 0; i < b.lo.size(); ++i) {
    const double mid = 0.5 * (b.lo[i] + b.hi[i]), half = 0.5 * (b.hi[i] - b.lo[i]) * factor;
    out.lo[i] = mid - half;
    out.hi[i] = mid + half;
  }
  return out;
}

inline bool is_identity(const AffineMap& T) {
  for (std::size_t i = 0; i < T.scales.size(); ++i)
    if (T.scales[i] != 1.0 || T.offset[i] != 0.0) return false;
  return true;
}

inline Box required_box(const SpectralFunction& f, const char* who) {
  auto sb = f.support_box();
  if (!sb) throw DomainError(std::string(who) + ": f has unbounded support");
  return *sb;
}

// ||f_T||_{L_p} with f_T^ = f^ o T^{-1}, sampled on T(box) enlarged by `margin`.
inline double dilated_lp(const SpectralFunction& f, const AffineMap& T, const Box& box, double p, int grid,
                         double margin) {
  const std::size_t d = f.dim();
  const Box tb = enlarge(image_box(T, box), margin);
  auto ev = [&](const Point& xi) { return f(T.inverse(xi)); };
  FftBuffer buf(power(grid, d));
  Point spacing;
  sample_box(ev, tb, grid, d, buf, spacing);
  return spatial_lp(buf, grid, d, spacing, p).value;
}

inline void check_grid(int grid, const char* who) {
  if (grid < 16 || grid % 2 != 0) throw DomainError(std::string(who) + ": grid must be even and >= 16");
}

}  // namespace detail

/// ||f_T||_{L_p} / (|T|^{1 - 1/p} ||f||_{L_p}), expected 1.  The two sides
/// are sampled on different grids: supp f^ itself, and T(supp f^) enlarged by 25%.
inline double dilation_scaling_check(const QuasiNormContext& ctx, const AffineMap& T, const SpectralFunction& f,
                                     double p, int grid) {
  if (T.scales.size() != ctx.dim() || f.dim() != ctx.dim()) throw DomainError("dilation_scaling_check: dimension mismatch");
  if (!(p > 0.0)) throw DomainError("dilation_scaling_check: p must be positive");
  detail::check_grid(grid, "dilation_scaling_check");
  const Box box = detail::required_box(f, "dilation_scaling_check");
  const AffineMap id = AffineMap::identity(ctx.dim());
  const double base = detail::dilated_lp(f, id, box, p, grid, 1.0);
  if (base == 0.0) throw DomainError("dilation_scaling_check: f vanishes");
  const bool same = detail::is_identity(T);
  const double scaled = same ? base : detail::dilated_lp(f, T, box, p, grid, 1.25);
  const double factor = std::isinf(p) ? T.det : std::pow(T.det, 1.0 - 1.0 / p);
  return scaled / (factor * base);
}

/// ||f_T||_{L_q} / (|T|^{1/p - 1/q} ||f_T||_{L_p}) for p <= q.
inline double nikolskii_check(const QuasiNormContext& ctx, const AffineMap& T, const SpectralFunction& f, double p,
                              double q, int grid) {
  if (!(p > 0.0) || !(q > 0.0)) throw DomainError("nikolskii_check: p and q must be positive");
  if (p > q) throw DomainError("nikolskii_check: need p <= q");
  if (T.scales.size() != ctx.dim() || f.dim() != ctx.dim()) throw DomainError("nikolskii_check: dimension mismatch");
  detail::check_grid(grid, "nikolskii_check");
  const Box box = detail::required_box(f, "nikolskii_check");
  const double np = detail::dilated_lp(f, T, box, p, grid, 1.0);
  if (np == 0.0) throw DomainError("nikolskii_check: f vanishes");
  if (p == q) return 1.0;
  const double nq = detail::dilated_lp(f, T, box, q, grid, 1.0);
  const double expo = (1.0 / p) - (std::isinf(q) ? 0.0 : 1.0 / q);
  return nq / (std::pow(T.det, expo) * np);
}

}  // namespace freqtile

#endif  // FREQTILE_SPACES_HPP
