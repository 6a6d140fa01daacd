// Registered band-limited test functions.  All use the compactly supported
// profile B(u) = exp(1 - 1/(1 - u^2)) for |u| < 1, so supports are exact.

#ifndef FREQTILE_REGISTRY_HPP
#define FREQTILE_REGISTRY_HPP

#include <nlohmann/json.hpp>

#include "freqtile/spectral.hpp"

namespace freqtile {

inline double smooth_profile(double u) {
  const double u2 = u * u;
  if (u2 >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u2));
}

struct TestFunctionSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

namespace detail {

inline double param(const nlohmann::json& p, const char* key) {
  if (!p.contains(key)) throw DomainError(std::string("registry: missing parameter '") + key + "'");
  return p.at(key).get<double>();
}

inline Point param_point(const nlohmann::json& v, std::size_t d) {
  const auto xs = v.get<std::vector<double>>();
  if (xs.size() != d) throw DomainError("registry: point parameter has wrong dimension");
  return Point::from(xs);
}

// Lattice spacing resolving features whose coordinate-i extent is at least width_i.
inline double oracle_l2(const SpectralFunction& f, const Box& box, const Point& min_width) {
  Point h = min_width;
  for (double& x : h) x /= 48.0;
  return std::sqrt(lattice_l2_squared(f, box, h));
}

}  // namespace detail

/// Builds the named test function with exact support metadata and an l2
/// oracle from dense lattice quadrature.
inline SpectralFunction registry_instantiate(const QuasiNormContext& ctx, const TestFunctionSpec& spec) {
  const std::size_t d = ctx.dim();
  const auto& p = spec.params;
  const auto& a = ctx.anisotropy;
  try {
    if (spec.name == "gaussbump_annular") {
      // Radial profile in |xi|_a around `center` with half-width `width`.
      const double c = detail::param(p, "center");
      const double w = detail::param(p, "width");
      const double amp = p.value("amplitude", 1.0);
      if (!(w > 0.0 && w < c)) throw DomainError("gaussbump_annular: need 0 < width < center");
      auto f = [ctx, c, w, amp](const Point& xi) -> Complex {
        if (amp == 0.0) return {0.0, 0.0};
        return {amp * smooth_profile((aniso_norm(ctx, xi) - c) / w), 0.0};
      };
      SpectralFunction sf(ctx, f, std::make_pair(c - w, c + w));
      Point width(d);
      for (std::size_t i = 0; i < d; ++i)
        width[i] = std::min(std::pow(w, a[i]), std::pow(c + w, a[i]) - std::pow(c - w, a[i]));
      return sf.with_oracle(amp == 0.0 ? 0.0 : detail::oracle_l2(sf, *sf.support_box(), width));
    }
    if (spec.name == "multi_bump" || spec.name == "atom_like") {
      // Sum of profiles B(|xi - center_k|_a / width_k); atom_like has one bump
      // modulated by exp(-i x0.xi), a time shift by x0.
      std::vector<Point> centers;
      std::vector<double> widths, amps;
      Point shift(d);
      if (spec.name == "atom_like") {
        centers.push_back(detail::param_point(p.at("center"), d));
        widths.push_back(detail::param(p, "width"));
        amps.push_back(p.value("amplitude", 1.0));
        if (p.contains("shift")) shift = detail::param_point(p.at("shift"), d);
      } else {
        for (const auto& v : p.at("centers")) centers.push_back(detail::param_point(v, d));
        if (centers.empty()) throw DomainError("multi_bump: need at least one center");
        const auto& wv = p.at("widths");
        widths = wv.is_array() ? wv.get<std::vector<double>>() : std::vector<double>(centers.size(), wv.get<double>());
        amps = p.contains("amplitudes") ? p.at("amplitudes").get<std::vector<double>>()
                                        : std::vector<double>(centers.size(), 1.0);
        if (widths.size() != centers.size() || amps.size() != centers.size())
          throw DomainError("multi_bump: centers, widths and amplitudes differ in length");
      }
      Box box;
      double s_min = std::numeric_limits<double>::infinity(), s_max = 0.0;
      Point width(d);
      for (double& x : width) x = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k) {
        if (!(widths[k] > 0.0)) throw DomainError("registry: widths must be positive");
        if (in_ball(ctx, centers[k], widths[k], Point(d)))
          throw DomainError("registry: a bump support contains the origin");
        const Box bk = ball_box(ctx, centers[k], widths[k]);
        if (k == 0) box = bk;
        for (std::size_t i = 0; i < d; ++i) {
          box.lo[i] = std::min(box.lo[i], bk.lo[i]);
          box.hi[i] = std::max(box.hi[i], bk.hi[i]);
          width[i] = std::min(width[i], std::pow(widths[k], a[i]));
        }
        s_min = std::min(s_min, bk.min_norm(ctx));
        s_max = std::max(s_max, bk.max_norm(ctx));
      }
      auto f = [ctx, centers, widths, amps, shift](const Point& xi) -> Complex {
        double v = 0.0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
          if (amps[k] == 0.0 || !in_ball(ctx, centers[k], widths[k], xi)) continue;
          v += amps[k] * smooth_profile(quasi_dist(ctx, xi, centers[k]) / widths[k]);
        }
        if (v == 0.0) return {0.0, 0.0};
        double phase = 0.0;
        for (std::size_t i = 0; i < xi.size(); ++i) phase -= shift[i] * xi[i];
        return v * std::polar(1.0, phase);
      };
      SpectralFunction sf(ctx, f, std::make_pair(s_min, s_max), std::nullopt, box);
      const bool zero = std::all_of(amps.begin(), amps.end(), [](double x) { return x == 0.0; });
      return sf.with_oracle(zero ? 0.0 : detail::oracle_l2(sf, box, width));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("registry: malformed parameters for '" + spec.name + "': " + e.what());
  }
  throw DomainError("registry: unknown test function '" + spec.name + "'");
}

inline nlohmann::json to_json(const TestFunctionSpec& s) { return {{"name", s.name}, {"params", s.params}}; }

inline TestFunctionSpec function_spec_from_json(const nlohmann::json& j) {
  try {
    return {j.at("name").get<std::string>(), j.value("params", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("registry: malformed function spec: ") + e.what());
  }
}

}  // namespace freqtile

#endif  // FREQTILE_REGISTRY_HPP
