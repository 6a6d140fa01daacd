// Acceptance run: `acceptance N` checks criterion N (all of them without an
// argument) and prints one PASS/FAIL line per criterion, preceded by indented
// detail lines.  Exit status is nonzero iff a requested criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>

#include "freqtile/pipeline.hpp"

using namespace freqtile;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

__attribute__((format(printf, 1, 2))) void note(const char* fmt, ...) {
  std::va_list ap;
  va_start(ap, fmt);
  std::printf("  ");
  std::vprintf(fmt, ap);
  std::printf("\n");
  std::fflush(stdout);
  va_end(ap);
}

QuasiNormContext make_ctx(const std::vector<double>& a, std::uint64_t seed = 1) {
  QuasiNormContext ctx{Anisotropy(a)};
  estimate_K(ctx, 20000, seed);
  return ctx;
}

// The covering set shared by the partition, admissibility and frame criteria.
struct CoveringCase {
  std::size_t d;
  double alpha;
  double delta;
  std::pair<double, double> annulus;
  int N_c, M;
};

const std::vector<CoveringCase>& covering_cases() {
  static const std::vector<CoveringCase> cases = {
      {1, 0.0, 0.25, {1.0 / 64, 64.0}, 32, 128},
      {1, 0.5, 0.25, {1.0 / 64, 64.0}, 32, 128},
      {1, 1.0, 0.25, {1.0 / 64, 64.0}, 32, 128},
      // Reduced annulus keeps the alpha = 0.5 covering under 10^4 patches.
      {2, 0.5, 0.2, {1.0 / 16, 16.0}, 16, 64},
      {2, 1.0, 0.2, {1.0 / 64, 64.0}, 16, 64},
  };
  return cases;
}

QuasiNormContext case_ctx(const CoveringCase& cc) {
  return make_ctx(cc.d == 1 ? std::vector<double>{1.0} : std::vector<double>{0.5, 1.5});
}

std::shared_ptr<const Covering> build(const CoveringCase& cc, int resolution = 32) {
  const auto ctx = case_ctx(cc);
  return std::make_shared<const Covering>(
      build_covering(alpha_regulation(ctx, cc.alpha), cc.delta, 0.35, cc.annulus, resolution));
}

std::string label(const CoveringCase& cc) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "d=%zu alpha=%.2g", cc.d, cc.alpha);
  return buf;
}

// Band-limited test functions whose widths are comparable to the local patch scale.
std::vector<TestFunctionSpec> test_functions(std::size_t d) {
  if (d == 1) return default_config().functions;
  return {
      {"gaussbump_annular", {{"center", 1.0}, {"width", 0.6}}},
      {"multi_bump", {{"centers", {{1.5, 0.5}, {-1.0, -1.0}}}, {"widths", {1.0, 0.8}}, {"amplitudes", {1.0, -0.5}}}},
      {"atom_like", {{"center", {0.5, 2.0}}, {"width", 1.2}, {"shift", {0.4, -0.3}}}},
  };
}

// reconstruct_error rejects sample counts that do not resolve f on the
// quadrature box; double until it accepts.
double recon_error(const SpectralFunction& f, const CoefficientSet& cs, const Bapu& b) {
  std::size_t n = b.covering().dim() == 1 ? 20000 : 40000;
  for (int attempt = 0;; ++attempt, n *= 2) {
    try {
      return reconstruct_error(f, cs, b, n);
    } catch (const DomainError& e) {
      if (attempt == 5 || std::string(e.what()).find("too small") == std::string::npos) throw;
    }
  }
}

// 1. Quasi-norm homogeneity.
bool criterion1() {
  const auto t0 = Clock::now();
  Rng rng(11);
  double worst = 0.0;
  const std::vector<std::vector<double>> anisotropies = {{1.0}, {0.5, 1.5}, {1.0, 1.0}, {0.4, 0.9, 1.7}};
  std::size_t evaluations = 0;
  for (const auto& a : anisotropies) {
    QuasiNormContext ctx{Anisotropy(a)};
    for (int s = 0; s < 1000; ++s) {
      Point xi(a.size());
      for (double& x : xi) x = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * log_uniform(1e-3, 1e3, rng);
      const double n = aniso_norm(ctx, xi);
      for (double t : {1e-3, 0.37, 5.0, 1e4}) {
        const double nt = aniso_norm(ctx, dilate(ctx, t, xi));
        worst = std::max(worst, std::abs(nt / (t * n) - 1.0));
        ++evaluations;
      }
    }
  }
  const double secs = seconds_since(t0);
  note("%zu evaluations, max relative deviation %.3e, %.3f s", evaluations, worst, secs);
  // 10^3 samples x 4 factors per anisotropy; the time bound applies per anisotropy.
  return worst <= 1e-9 && secs / static_cast<double>(anisotropies.size()) < 1.0;
}

// 2. Partition of unity.
bool criterion2() {
  bool ok = true;
  for (const auto& cc : covering_cases()) {
    const auto t0 = Clock::now();
    const auto c = build(cc);
    const double t_build = seconds_since(t0);
    const auto t1 = Clock::now();
    const Bapu b(c);
    const auto r = verify_pou(b, 10000, 7);
    const double secs = seconds_since(t1);
    const bool pass = r.max_psi_residual <= 1e-10 && r.max_phi2_residual <= 1e-10 && r.uncovered == 0 && secs < 30.0;
    note("%s: %zu patches, psi residual %.3e, phi^2 residual %.3e, %zu uncovered, %.2f s (+%.2f s build) %s",
           label(cc).c_str(), c->size(), r.max_psi_residual, r.max_phi2_residual, r.uncovered, secs, t_build,
           pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  return ok;
}

// 3. Covering admissibility.
bool criterion3() {
  bool ok = true;
  for (const auto& cc : covering_cases()) {
    const auto t0 = Clock::now();
    const auto c = build(cc);
    const auto adm = check_admissible(*c, 10000, 5);
    const auto pk = check_packing(*c);
    const double secs = seconds_since(t0);
    const auto c2 = build(cc, 64);
    const auto adm2 = check_admissible(*c2, 10000, 5);
    const long shift = static_cast<long>(adm2.max_overlap) - static_cast<long>(adm.max_overlap);
    const bool pass = adm.covered_fraction == 1.0 && pk.violations == 0 && adm.max_overlap <= 64 &&
                      adm2.max_overlap <= 64 && std::abs(shift) <= 2 && adm.min_dist_to_origin > 0.0 && secs < 60.0;
    note("%s: %zu patches, covered %.6f, packing violations %zu of %zu pairs, max_overlap %zu (resolution 64: %zu), "
           "min dist to origin %.3e, %.2f s %s",
           label(cc).c_str(), c->size(), adm.covered_fraction, pk.violations, pk.pairs_checked, adm.max_overlap,
           adm2.max_overlap, adm.min_dist_to_origin, secs, pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  return ok;
}

// 4 and 5 share the analysis of each function.
bool frame_criterion(bool reconstruction) {
  bool ok = true;
  for (const auto& cc : covering_cases()) {
    const auto t0 = Clock::now();
    const auto c = build(cc);
    const Bapu b(c);
    const auto g = make_geometry(*c, cc.N_c, cc.M);
    const auto specs = test_functions(cc.d);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const auto f = registry_instantiate(c->context(), specs[k]);
      const auto cs = analyze(b, g, f);
      if (!reconstruction) {
        const double ratio = parseval_check(cs, f);
        const bool pass = std::abs(ratio - 1.0) <= 1e-4;
        note("%s %s: sum|c|^2/||f||^2 = %.9f (|ratio-1| = %.2e) %s", label(cc).c_str(), specs[k].name.c_str(), ratio,
               std::abs(ratio - 1.0), pass ? "ok" : "FAIL");
        ok = ok && pass;
        continue;
      }
      const double err = recon_error(f, cs, b);
      std::vector<double> curve;
      bool monotone = true;
      for (double frac : {0.01, 0.05, 0.1, 0.5, 1.0}) {
        const auto keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(cs.size())));
        curve.push_back(recon_error(f, threshold(cs, keep), b));
        if (curve.size() > 1) monotone = monotone && curve.back() <= curve[curve.size() - 2] * (1.0 + 1e-12);
      }
      const bool pass = err <= 1e-4 && monotone;
      note("%s %s: reconstruction error %.3e; keep 1/5/10/50/100%% -> %.3e %.3e %.3e %.3e %.3e %s %s",
             label(cc).c_str(), specs[k].name.c_str(), err, curve[0], curve[1], curve[2], curve[3], curve[4],
             monotone ? "monotone" : "NOT monotone", pass ? "ok" : "FAIL");
      ok = ok && pass;
    }
    const double secs = seconds_since(t0);
    note("%s: %.1f s", label(cc).c_str(), secs);
    if (!reconstruction && secs >= 120.0) ok = false;
  }
  return ok;
}

// 6. Norm equivalence across a dilated family.
bool criterion6() {
  const CoveringCase cc = covering_cases()[1];
  const auto c = build(cc);
  const Bapu b(c);
  const auto g = make_geometry(*c, cc.N_c, cc.M);
  std::vector<SpectralFunction> family;
  std::vector<CoefficientSet> coeffs;
  for (int m = -2; m <= 2; ++m) {
    const double s = std::ldexp(1.0, m);
    family.push_back(registry_instantiate(c->context(), {"gaussbump_annular", {{"center", s}, {"width", 0.6 * s}}}));
    coeffs.push_back(analyze(b, g, family.back()));
  }
  nlohmann::json report = nlohmann::json::array();
  bool ok = true;
  const std::vector<std::pair<double, double>> pqs = {{2, 2}, {1, 1}, {2, 1}, {kInfinity, kInfinity}};
  for (auto [p, q] : pqs)
    for (double beta : {-1.0, 0.0, 1.0}) {
      const SpaceParams sp{p, q, beta};
      std::vector<double> ratios;
      for (std::size_t m = 0; m < family.size(); ++m) {
        const double dn = decomposition_norm(b, family[m], sp, 128).decomposition_norm;
        const double fn = frame_norm(coeffs[m], *c, sp);
        ratios.push_back(dn / fn);
      }
      const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
      const bool finite = std::all_of(ratios.begin(), ratios.end(), [](double r) { return std::isfinite(r) && r > 0.0; });
      const bool pass = finite && *mx / *mn < 4.0;
      note("p=%g q=%g beta=%+g: ratio in [%.4f, %.4f], spread %.3f %s", p, q, beta, *mn, *mx, *mx / *mn,
             pass ? "ok" : "FAIL");
      report.push_back({{"p", exponent_json(p)},
                        {"q", exponent_json(q)},
                        {"beta", beta},
                        {"ratios", ratios},
                        {"lower_constant", *mn},
                        {"upper_constant", *mx}});
      ok = ok && pass;
    }
  std::ofstream("acceptance_norm_equivalence.json") << nlohmann::json{{"covering_id", c->id()}, {"constants", report}}.dump(2)
                                                    << '\n';
  note("constants written to acceptance_norm_equivalence.json");
  return ok;
}

// 7. Dilation scaling and Nikolskii-type inequality.
bool criterion7() {
  bool ok = true;
  const auto ctx = make_ctx({1.0});
  const auto f =
      registry_instantiate(ctx, {"atom_like", {{"center", {1.5}}, {"width", 1.0}, {"shift", {0.3}}}});
  const std::vector<std::pair<double, double>> maps = {{2.0, 0.0}, {0.5, 0.0}, {3.7, 1.3}, {0.2, -0.4}, {8.0, 5.0}};
  for (auto [s, o] : maps) {
    const auto T = AffineMap::make(Point::from(std::vector<double>{s}), Point::from(std::vector<double>{o}));
    for (double p : {1.0, 2.0, kInfinity}) {
      const double r = dilation_scaling_check(ctx, T, f, p, 256);
      const bool pass = std::abs(r - 1.0) <= 1e-4;
      note("dilation T = %g xi %+g, p=%g: ratio %.8f %s", s, o, p, r, pass ? "ok" : "FAIL");
      ok = ok && pass;
    }
  }
  const auto c = build(covering_cases()[1]);
  const auto bump = registry_instantiate(c->context(), {"multi_bump", {{"centers", {c->p0().to_vector()}}, {"widths", {1.0}}}});
  const std::size_t step = c->size() / 10;
  for (auto [p, q] : std::vector<std::pair<double, double>>{{1.0, 2.0}, {2.0, kInfinity}}) {
    std::vector<double> r;
    for (std::size_t t = 0; t < 10; ++t) r.push_back(nikolskii_check(c->context(), c->patch(t * step).map, bump, p, q, 128));
    const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
    const bool pass = std::isfinite(*mx) && *mn > 0.0 && *mx / *mn <= 2.0;
    note("nikolskii p=%g q=%g over 10 patches: [%.6f, %.6f], spread %.6f %s", p, q, *mn, *mx, *mx / *mn,
           pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  return ok;
}

// 8. Alpha-knot spacing rules.
bool criterion8() {
  const auto t0 = Clock::now();
  bool ok = true;
  for (double alpha : {0.25, 0.5, 0.75}) {
    const auto b = knot_rule_bounds(alpha, 10000);
    const bool pass = b.high_min >= 1.0 / 3 && b.high_max <= 3.0 && b.low_min >= 1.0 / 3 && b.low_max <= 3.0;
    note("alpha=%.2f: high-frequency rule in [%.4f, %.4f], low-frequency rule in [%.4f, %.4f] %s", alpha, b.high_min,
           b.high_max, b.low_min, b.low_max, pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  const double secs = seconds_since(t0);
  note("%.4f s", secs);
  return ok && secs < 1.0;
}

// 9. Besov corridors.
bool criterion9() {
  bool ok = true;
  for (std::size_t d : {1u, 2u}) {
    const auto ctx = make_ctx(std::vector<double>(d, 1.0));
    const Covering c = besov_covering(ctx, -4, 4);
    const auto t = check_tiling(c, 100000, 9);
    bool entries = true;
    for (const auto& k : besov_index_set(d)) {
      const Point b = besov_B(ctx, k);
      // 2^{-(1+1)} for |k_i| = 1 and (1 - 2^{-1})/2 for |k_i| = 2: both exactly 1/4.
      for (double x : b) entries = entries && x == 0.25;
    }
    for (const Patch& p : c.patches()) {
      const int j = p.besov->j;
      for (std::size_t i = 0; i < d; ++i) {
        const int k = p.besov->k[i];
        const double center = (k > 0 ? 1.0 : -1.0) * (std::abs(k) == 2 ? 3.0 : 1.0) * std::ldexp(1.0, j - 2);
        entries = entries && p.map.scales[i] == std::ldexp(0.25, j) && p.map.offset[i] == center;
      }
    }
    const bool pass = t.uncovered == 0 && t.interior_collisions == 0 && entries;
    note("d=%zu: %zu patches, %zu samples, %zu uncovered, %zu interior double memberships, B(k) and T_{j,k} %s %s", d,
           c.size(), t.n_samples, t.uncovered, t.interior_collisions, entries ? "exact" : "MISMATCH",
           pass ? "ok" : "FAIL");
    ok = ok && pass;
  }
  return ok;
}

// 10. Two selftest runs give identical artifacts.
bool criterion10() {
  const fs::path root = fs::temp_directory_path() / ("freqtile_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> outputs;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    const std::string cmd =
        "cd '" + (root / run).string() + "' && '" FREQTILE_CLI_PATH "' selftest -o out > hashes.json";
    const int rc = std::system(cmd.c_str());
    if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
      note("selftest run %s failed", run);
      return false;
    }
    std::ifstream in(root / run / "hashes.json");
    std::stringstream ss;
    ss << in.rdbuf();
    outputs.push_back(ss.str());
  }
  bool ok = outputs[0] == outputs[1];
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(root / "a" / "out")) {
    const auto name = e.path().filename();
    const bool same = fs::exists(root / "b" / "out" / name) &&
                      file_hash(e.path().string()) == file_hash((root / "b" / "out" / name).string());
    if (!same) note("%s differs", name.c_str());
    ok = ok && same;
    ++n;
  }
  const auto j = nlohmann::json::parse(outputs[0]);
  note("%zu artifacts, combined hash %s / %s", n, j.at("combined").get<std::string>().c_str(),
         nlohmann::json::parse(outputs[1]).at("combined").get<std::string>().c_str());
  fs::remove_all(root);
  return ok && n > 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<bool()>>> criteria = {
      {"quasi-norm homogeneity", criterion1},
      {"partition of unity", criterion2},
      {"covering admissibility", criterion3},
      {"tight-frame Parseval", [] { return frame_criterion(false); }},
      {"reconstruction and retract", [] { return frame_criterion(true); }},
      {"norm equivalence", criterion6},
      {"dilation scaling and Nikolskii", criterion7},
      {"alpha-knot geometry", criterion8},
      {"Besov covering", criterion9},
      {"determinism", criterion10},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) which.push_back(i);
  bool all = true;
  for (int n : which) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << n << '\n';
      return 2;
    }
    const auto t0 = Clock::now();
    bool pass = false;
    try {
      pass = criteria[n - 1].second();
    } catch (const std::exception& e) {
      note("exception: %s", e.what());
    }
    std::printf("criterion %d (%s): %s [%.1f s]\n", n, criteria[n - 1].first, pass ? "PASS" : "FAIL",
                seconds_since(t0));
    std::fflush(stdout);
    all = all && pass;
  }
  return all ? 0 : 1;
}
