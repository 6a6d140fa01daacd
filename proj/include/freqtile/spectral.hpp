// Frequency-domain function representation.
//
// f^(xi) = (2 pi)^{-d/2} int f(x) exp(-i x.xi) dx is held as a closed-form
// evaluator together with optional support metadata; every numerical stage
// evaluates it at exactly the points it needs.

#ifndef FREQTILE_SPECTRAL_HPP
#define FREQTILE_SPECTRAL_HPP

#include <functional>
#include <memory>

#include "freqtile/anorm.hpp"

namespace freqtile {

/// Axis-aligned box [lo, hi].
struct Box {
  Point lo, hi;

  bool contains(const Point& x) const {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }
  bool intersects(const Box& o) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (hi[i] < o.lo[i] || o.hi[i] < lo[i]) return false;
    return true;
  }
  /// Smallest |x|_a over the box (attained at the point nearest the origin coordinatewise).
  double min_norm(const QuasiNormContext& ctx) const {
    Point p(lo.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = lo[i] > 0.0 ? lo[i] : (hi[i] < 0.0 ? hi[i] : 0.0);
    return aniso_norm(ctx, p);
  }
  /// Largest |x|_a over the box, attained at a corner since |.|_a grows with every |x_i|.
  double max_norm(const QuasiNormContext& ctx) const {
    Point p(lo.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::max(std::abs(lo[i]), std::abs(hi[i]));
    return aniso_norm(ctx, p);
  }
};

/// Bounding box of the quasi-ball B(center, radius).
inline Box ball_box(const QuasiNormContext& ctx, const Point& center, double radius) {
  const Point w = ball_halfwidths(ctx, radius);
  return {center - w, center + w};
}

class SpectralFunction {
 public:
  using Evaluator = std::function<Complex(const Point&)>;

  /// support_hint: annulus [s_min, s_max] in |.|_a outside of which the
  /// evaluator vanishes; spot-checked on 100 exterior points.  support_box
  /// optionally tightens the support further.
  SpectralFunction(QuasiNormContext ctx, Evaluator f, std::optional<std::pair<double, double>> support_hint = {},
                   std::optional<double> l2_norm_oracle = {}, std::optional<Box> support_box = {},
                   std::uint64_t check_seed = 99)
      : ctx_(std::make_shared<const QuasiNormContext>(std::move(ctx))),
        f_(std::move(f)),
        hint_(support_hint),
        oracle_(l2_norm_oracle),
        box_(std::move(support_box)) {
    if (!f_) throw DomainError("SpectralFunction: empty evaluator");
    if (hint_) {
      const auto [lo, hi] = *hint_;
      if (!(lo >= 0.0 && lo < hi) || !std::isfinite(hi)) throw DomainError("SpectralFunction: invalid support_hint");
      Rng rng(check_seed);
      for (int k = 0; k < 100; ++k) {
        const bool inside_hole = lo > 0.0 && k % 2 == 0;
        const double r = inside_hole ? lo * uniform01(rng) : hi * (1.0 + 1e-9 + 3.0 * uniform01(rng));
        const Point xi = at_norm(*ctx_, std::max(r, 1e-300), random_direction(dim(), rng));
        if (aniso_norm(*ctx_, xi) >= lo && aniso_norm(*ctx_, xi) <= hi) continue;
        if (f_(xi) != Complex(0.0, 0.0))
          throw DomainError("SpectralFunction: evaluator is nonzero outside its support_hint");
      }
    }
    if (oracle_ && !(*oracle_ >= 0.0)) throw DomainError("SpectralFunction: l2_norm_oracle must be nonnegative");
  }

  std::size_t dim() const { return ctx_->dim(); }
  const QuasiNormContext& context() const { return *ctx_; }
  Complex operator()(const Point& xi) const { return f_(xi); }
  const Evaluator& evaluator() const { return f_; }
  const std::optional<std::pair<double, double>>& support_hint() const { return hint_; }
  const std::optional<double>& l2_norm_oracle() const { return oracle_; }

  /// Bounding box of the support: support_box if given, else the box of the hint's outer ball.
  std::optional<Box> support_box() const {
    if (box_) return box_;
    if (hint_) return ball_box(*ctx_, Point(dim()), hint_->second);
    return std::nullopt;
  }

  /// Whether the support can meet the given box.
  bool may_touch(const Box& b) const {
    if (auto sb = support_box(); sb && !sb->intersects(b)) return false;
    if (hint_) {
      if (b.min_norm(*ctx_) > hint_->second) return false;
      if (b.max_norm(*ctx_) < hint_->first) return false;
    }
    return true;
  }

  SpectralFunction with_oracle(double l2) const {
    SpectralFunction g = *this;
    g.oracle_ = l2;
    return g;
  }

 private:
  std::shared_ptr<const QuasiNormContext> ctx_;
  Evaluator f_;
  std::optional<std::pair<double, double>> hint_;
  std::optional<double> oracle_;
  std::optional<Box> box_;
};

/// Trapezoidal quadrature of int |f^|^2 on the lattice (spacing h_i) anchored at
/// the origin, restricted to the box.  For compactly supported smooth f^ the
/// rule converges faster than any power of h.
inline double lattice_l2_squared(const SpectralFunction& f, const Box& box, const Point& spacing) {
  const std::size_t d = f.dim();
  std::array<std::int64_t, kMaxDim> first{}, last{};
  double cell = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    first[i] = static_cast<std::int64_t>(std::floor(box.lo[i] / spacing[i]));
    last[i] = static_cast<std::int64_t>(std::ceil(box.hi[i] / spacing[i]));
    cell *= spacing[i];
  }
  double sum = 0.0;
  std::array<std::int64_t, kMaxDim> idx = first;
  Point xi(d);
  while (true) {
    for (std::size_t i = 0; i < d; ++i) xi[i] = static_cast<double>(idx[i]) * spacing[i];
    sum += std::norm(f(xi));
    std::size_t i = 0;
    for (; i < d; ++i) {
      if (idx[i] < last[i]) {
        ++idx[i];
        break;
      }
      idx[i] = first[i];
    }
    if (i == d) break;
  }
  return sum * cell;
}

}  // namespace freqtile

#endif  // FREQTILE_SPECTRAL_HPP
