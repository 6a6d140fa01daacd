// Ramp functions, hybrid regulation functions and moderateness diagnostics.
//
// A hybrid regulation function blends a low-frequency rule h1 (vanishing at
// the origin at least linearly) with a high-frequency rule h2 (bounded below):
//
//   h(xi) = rho(|xi|_a) h1(xi) + (1 - rho(|xi|_a)) h2(xi),
//
// where rho is 1 below t_lo and 0 above t_hi.  It sets the covering radius
// delta * h(xi_j) of every patch.

#ifndef FREQTILE_REGULATION_HPP
#define FREQTILE_REGULATION_HPP

#include <functional>
#include <utility>
#include <variant>

#include "freqtile/anorm.hpp"

namespace freqtile {

/// Polynomial smoothstep of degree 2s+1 rising from 0 at u <= 0 to 1 at u >= 1.
/// Its first s derivatives vanish at both ends, and S(u) + S(1-u) = 1.
inline double smoothstep(double u, int s) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  // Bernstein form S(u) = sum_{k=s+1}^{2s+1} C(2s+1, k) u^k (1-u)^{2s+1-k}:
  // every term is nonnegative, so there is no cancellation.
  const int n = 2 * s + 1;
  const double v = 1.0 - u;
  double binom = 1.0;  // C(n, k)
  for (int k = 0; k < s + 1; ++k) binom = binom * (n - k) / (k + 1);
  double sum = 0.0;
  for (int k = s + 1; k <= n; ++k) {
    sum += binom * std::pow(u, k) * std::pow(v, n - k);
    binom = binom * (n - k) / (k + 1);
  }
  return std::min(sum, 1.0);
}

struct RampFunction {
  double t_lo = 2.0 / 3.0;
  double t_hi = 4.0 / 3.0;
  int order = 3;

  void validate() const {
    if (!(t_lo > 0.0 && t_lo < t_hi)) throw DomainError("RampFunction: need 0 < t_lo < t_hi");
    if (order < 1) throw DomainError("RampFunction: order must be >= 1");
  }
};

inline double ramp_eval(const RampFunction& ramp, double r) {
  if (r < 0.0 || std::isnan(r)) throw DomainError("ramp_eval: negative argument");
  if (r <= ramp.t_lo) return 1.0;
  if (r >= ramp.t_hi) return 0.0;
  return 1.0 - smoothstep((r - ramp.t_lo) / (ramp.t_hi - ramp.t_lo), ramp.order);
}

/// coeff * |xi|_a^exponent
struct PowerRule {
  double coeff = 1.0;
  double exponent = 1.0;
};

/// Opaque rule; receives the point and its precomputed quasi-norm.
using RuleEvaluator = std::function<double(const Point& xi, double norm)>;

using RegulationRule = std::variant<PowerRule, RuleEvaluator>;

/// Constants of the growth envelopes
///   c0 |xi|^r <= h1(xi) <= c1 |xi|   and   c2 <= h2(xi) <= c3 |xi|.
struct GrowthEnvelope {
  double c0 = 1.0, c1 = 1.0, r = 1.0, c2 = 1.0, c3 = 1.0;
};

class HybridRegulation {
 public:
  HybridRegulation(QuasiNormContext ctx, RampFunction ramp, RegulationRule h1, RegulationRule h2,
                   GrowthEnvelope envelope, std::optional<double> alpha = std::nullopt)
      : ctx_(std::move(ctx)),
        ramp_(ramp),
        h1_(std::move(h1)),
        h2_(std::move(h2)),
        envelope_(envelope),
        alpha_(alpha) {
    ramp_.validate();
    if (envelope_.r < 1.0) throw DomainError("HybridRegulation: h1 exponent r must be >= 1");
  }

  /// User-supplied rules, accepted only if their growth envelopes hold on
  /// sampled points of the working annulus: h1 is checked where the ramp is
  /// positive, h2 where it is below one.
  static HybridRegulation custom(QuasiNormContext ctx, RampFunction ramp, RegulationRule h1, RegulationRule h2,
                                 GrowthEnvelope envelope, std::pair<double, double> annulus,
                                 std::size_t n_samples = 2000, std::uint64_t seed = 7) {
    HybridRegulation h(std::move(ctx), ramp, std::move(h1), std::move(h2), envelope);
    auto [lo, hi] = annulus;
    if (!(lo > 0.0 && lo < hi)) throw DomainError("HybridRegulation: empty annulus");
    Rng rng(seed);
    const double slack = 1e-12;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const Point xi = sample_log_annulus(h.ctx_, lo, hi, rng);
      const double n = aniso_norm(h.ctx_, xi);
      if (n < h.ramp_.t_hi) {
        const double v = evaluate(h.h1_, xi, n);
        if (v < envelope.c0 * std::pow(n, envelope.r) * (1 - slack) || v > envelope.c1 * n * (1 + slack))
          throw DomainError("HybridRegulation: h1 violates its growth envelope");
      }
      if (n > h.ramp_.t_lo) {
        const double v = evaluate(h.h2_, xi, n);
        if (v < envelope.c2 * (1 - slack) || v > envelope.c3 * n * (1 + slack))
          throw DomainError("HybridRegulation: h2 violates its growth envelope");
      }
    }
    return h;
  }

  const QuasiNormContext& context() const { return ctx_; }
  const RampFunction& ramp() const { return ramp_; }
  const GrowthEnvelope& envelope() const { return envelope_; }
  std::optional<double> alpha() const { return alpha_; }
  const RegulationRule& h1() const { return h1_; }
  const RegulationRule& h2() const { return h2_; }

  /// True when h depends on xi only through |xi|_a.
  bool is_radial() const {
    return std::holds_alternative<PowerRule>(h1_) && std::holds_alternative<PowerRule>(h2_);
  }

  double operator()(const Point& xi) const {
    if (xi.is_zero()) throw DomainError("hybrid_eval: xi must be nonzero");
    return eval(xi, aniso_norm(ctx_, xi));
  }

  /// Evaluate with a precomputed quasi-norm of xi.
  double eval(const Point& xi, double norm) const {
    const double rho = ramp_eval(ramp_, norm);
    if (rho == 1.0) return evaluate(h1_, xi, norm);
    if (rho == 0.0) return evaluate(h2_, xi, norm);
    return rho * evaluate(h1_, xi, norm) + (1.0 - rho) * evaluate(h2_, xi, norm);
  }

  static double evaluate(const RegulationRule& rule, const Point& xi, double norm) {
    if (const auto* p = std::get_if<PowerRule>(&rule)) return p->coeff * std::pow(norm, p->exponent);
    return std::get<RuleEvaluator>(rule)(xi, norm);
  }

 private:
  QuasiNormContext ctx_;
  RampFunction ramp_;
  RegulationRule h1_;
  RegulationRule h2_;
  GrowthEnvelope envelope_;
  std::optional<double> alpha_;
};

inline double hybrid_eval(const HybridRegulation& h, const Point& xi) { return h(xi); }

/// The alpha-modulation family: h1 = |xi|_a^{2-alpha}, h2 = |xi|_a^alpha.
inline HybridRegulation alpha_regulation(const QuasiNormContext& ctx, double alpha, RampFunction ramp = {}) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha_regulation: alpha must lie in [0, 1]");
  ramp.validate();
  // h1 matters below t_hi, h2 above t_lo; the envelope constants are exact there.
  GrowthEnvelope env;
  env.c0 = 1.0;
  env.r = 2.0 - alpha;
  env.c1 = std::pow(ramp.t_hi, 1.0 - alpha);
  env.c2 = std::pow(ramp.t_lo, alpha);
  env.c3 = std::pow(ramp.t_lo, alpha - 1.0);
  return HybridRegulation(ctx, ramp, PowerRule{1.0, 2.0 - alpha}, PowerRule{1.0, alpha}, env, alpha);
}

struct ModerateReport {
  double R_emp = 1.0;
  Point worst_xi;
  Point worst_zeta;
};

/// Largest observed h(xi)/h(zeta) (or its reciprocal) over pairs with
/// d(xi, zeta) <= delta0 h(xi) and |xi|_a log-uniform on the annulus.
inline ModerateReport check_moderate(const HybridRegulation& h, double delta0, std::size_t n_samples,
                                     std::pair<double, double> annulus, std::uint64_t seed) {
  const auto [lo, hi] = annulus;
  if (!(delta0 > 0.0)) throw DomainError("check_moderate: delta0 must be positive");
  if (!(lo > 0.0) || lo >= hi) throw DomainError("check_moderate: empty annulus");
  const QuasiNormContext& ctx = h.context();
  Rng rng(seed);
  ModerateReport report;
  report.worst_xi = report.worst_zeta = Point(ctx.dim());
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Point xi = sample_log_annulus(ctx, lo, hi, rng);
    const double hx = h(xi);
    const double step = delta0 * hx * uniform01(rng);
    const Point zeta = xi + at_norm(ctx, step, random_direction(ctx.dim(), rng));
    if (zeta.is_zero()) continue;
    const double hz = h(zeta);
    const double ratio = std::max(hx / hz, hz / hx);
    if (ratio > report.R_emp) {
      report.R_emp = ratio;
      report.worst_xi = xi;
      report.worst_zeta = zeta;
    }
  }
  return report;
}

/// Min/max over n in [1, n_max] of the two alpha-knot spacing rules
///   |(n+1)^b - n^b| / n^{alpha b}   and   |n^{-b} - (n+1)^{-b}| / n^{-b(2-alpha)},
/// with b = 1/(1 - alpha).
struct KnotRuleBounds {
  double high_min, high_max, low_min, low_max;
};

inline KnotRuleBounds knot_rule_bounds(double alpha, int n_max) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("knot_rule_bounds: alpha must lie in [0, 1)");
  if (n_max < 1) throw DomainError("knot_rule_bounds: n_max must be positive");
  const double beta = 1.0 / (1.0 - alpha);
  KnotRuleBounds b{1e300, 0.0, 1e300, 0.0};
  for (int n = 1; n <= n_max; ++n) {
    const double x = n, y = n + 1.0;
    // (n+1)^b - n^b = n^b expm1(b log1p(1/n)) avoids cancellation for large n.
    const double high = std::pow(x, beta) * std::expm1(beta * std::log1p(1.0 / x)) / std::pow(x, alpha * beta);
    const double low = (std::pow(x, -beta) - std::pow(y, -beta)) / std::pow(x, -beta * (2.0 - alpha));
    b.high_min = std::min(b.high_min, high);
    b.high_max = std::max(b.high_max, high);
    b.low_min = std::min(b.low_min, low);
    b.low_max = std::max(b.low_max, low);
  }
  return b;
}

inline nlohmann::json to_json(const HybridRegulation& h) {
  if (!h.alpha()) throw DomainError("HybridRegulation: only alpha-family regulations are serializable");
  return {{"kind", "alpha"},
          {"alpha", *h.alpha()},
          {"ramp", {{"t_lo", h.ramp().t_lo}, {"t_hi", h.ramp().t_hi}, {"order", h.ramp().order}}}};
}

inline HybridRegulation regulation_from_json(const QuasiNormContext& ctx, const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "alpha") throw DomainError("regulation: unsupported kind");
  RampFunction ramp;
  if (j.contains("ramp")) {
    const auto& r = j.at("ramp");
    ramp.t_lo = r.at("t_lo").get<double>();
    ramp.t_hi = r.at("t_hi").get<double>();
    ramp.order = r.at("order").get<int>();
  }
  return alpha_regulation(ctx, j.at("alpha").get<double>(), ramp);
}

}  // namespace freqtile

#endif  // FREQTILE_REGULATION_HPP
