// Shared generators and fixtures for the unit tests.

#ifndef FREQTILE_TESTS_SUPPORT_HPP
#define FREQTILE_TESTS_SUPPORT_HPP

#include <map>
#include <memory>
#include <mutex>

#include "freqtile/pipeline.hpp"

namespace ft = freqtile;

namespace testing_support {

inline ft::QuasiNormContext context(std::vector<double> a, std::uint64_t seed = 3) {
  ft::QuasiNormContext ctx{ft::Anisotropy(std::move(a))};
  ft::estimate_K(ctx, 20000, seed);
  return ctx;
}

/// Random anisotropy in dimension d: positive weights rescaled to sum d.
inline ft::Anisotropy random_anisotropy(std::size_t d, ft::Rng& rng) {
  std::vector<double> w(d);
  double s = 0.0;
  for (double& x : w) {
    x = 0.3 + 1.4 * ft::uniform01(rng);
    s += x;
  }
  for (double& x : w) x *= static_cast<double>(d) / s;
  // Remove the rounding residue so the sum is d to the last bit.
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < d; ++i) t += w[i];
  w[d - 1] = static_cast<double>(d) - t;
  return ft::Anisotropy(w);
}

/// Nonzero point with coordinates of mixed magnitude and sign.
inline ft::Point random_point(std::size_t d, ft::Rng& rng) {
  ft::Point p(d);
  for (double& x : p) x = (ft::uniform01(rng) < 0.5 ? -1.0 : 1.0) * ft::log_uniform(1e-3, 1e3, rng);
  return p;
}

inline const std::vector<double>& aniso2() {
  static const std::vector<double> a{0.5, 1.5};
  return a;
}

/// Cached coverings: d = 1 (a = 1, delta = 0.25, [2^-6, 2^6]) and
/// d = 2 (a = (1/2, 3/2), delta = 0.2, [1/8, 8]).
inline std::shared_ptr<const ft::Covering> covering(std::size_t d, double alpha) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, double>, std::shared_ptr<const ft::Covering>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{d, alpha}];
  if (!slot) {
    const auto ctx = d == 1 ? context({1.0}) : context(aniso2());
    const auto h = ft::alpha_regulation(ctx, alpha);
    slot = std::make_shared<const ft::Covering>(
        d == 1 ? ft::build_covering(h, 0.25, 0.35, {1.0 / 64, 64.0}, 32)
               : ft::build_covering(h, 0.2, 0.35, {0.125, 8.0}, 32));
  }
  return slot;
}

inline std::shared_ptr<const ft::Covering> besov(std::size_t d, int j_min = -4, int j_max = 4) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, int, int>, std::shared_ptr<const ft::Covering>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{d, j_min, j_max}];
  if (!slot) slot = std::make_shared<const ft::Covering>(ft::besov_covering(context(std::vector<double>(d, 1.0)), j_min, j_max));
  return slot;
}

// Hand-built ball covering from explicit centers and radii (b_j = xi_j - A_j p0).
inline ft::Covering manual_covering(const ft::QuasiNormContext& ctx, const std::vector<ft::Point>& centers,
                                    const std::vector<double>& radii) {
  const std::size_t d = ctx.dim();
  ft::Point p0(d);
  p0[0] = std::pow(3.0 * ctx.K(), ctx.anisotropy[0]);
  std::vector<ft::Patch> patches;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    ft::Patch p;
    p.index = j;
    p.center = centers[j];
    p.radius = radii[j];
    const auto scales = ft::dilation(ctx, radii[j]).entries;
    ft::Point off = centers[j];
    for (std::size_t i = 0; i < d; ++i) off[i] -= scales[i] * p0[i];
    p.map = ft::AffineMap::make(scales, off);
    patches.push_back(p);
  }
  return ft::Covering(ft::alpha_regulation(ctx, 1.0), {ft::PatchShape::Ball, p0, 0.1, 0.35, {0.5, 100.0}, 2.0},
                      std::move(patches));
}

}  // namespace testing_support

#endif  // FREQTILE_TESTS_SUPPORT_HPP
