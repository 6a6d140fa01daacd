// Coefficient files, run configuration and the end-to-end pipeline.
//
// Coefficient file layout: the line "FTCOEF1", one line of JSON header
// (covering_id, the covering itself, the analyzed function, bump order and
// frame geometry), a little-endian uint64 record count, then per record
// uint32 j, int32 n[d], float64 re, float64 im.

#ifndef FREQTILE_PIPELINE_HPP
#define FREQTILE_PIPELINE_HPP

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "freqtile/registry.hpp"
#include "freqtile/spaces.hpp"

namespace freqtile {

inline constexpr std::string_view kCoefficientMagic = "FTCOEF1\n";

struct CoefficientFile {
  nlohmann::json header;
  CoefficientSet coefficients;

  Covering covering() const { return covering_from_json(header.at("covering")); }
  std::optional<TestFunctionSpec> function() const {
    if (!header.contains("function") || header.at("function").is_null()) return std::nullopt;
    return function_spec_from_json(header.at("function"));
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "coefficient files assume a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("coefficient file: truncated record");
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

inline void write_coefficients(const std::string& path, const CoefficientSet& cs, const Covering& c,
                               const std::optional<TestFunctionSpec>& function = std::nullopt) {
  if (cs.covering_id() != c.id()) throw DomainError("write_coefficients: covering does not match coefficients");
  nlohmann::json h;
  h["covering_id"] = cs.covering_id();
  h["dim"] = cs.dim();
  h["a"] = cs.geometry().a;
  h["N_c"] = cs.geometry().N_c;
  h["M"] = cs.geometry().M;
  h["bump_order"] = cs.bump_order();
  h["function"] = function ? to_json(*function) : nlohmann::json(nullptr);
  h["covering"] = to_json(c);
  auto out = detail::open_out(path, true);
  out << kCoefficientMagic << h.dump() << '\n';
  detail::put<std::uint64_t>(out, cs.size());
  for (const auto& e : cs.entries()) {
    detail::put<std::uint32_t>(out, e.j);
    for (std::size_t i = 0; i < cs.dim(); ++i) detail::put<std::int32_t>(out, e.n[i]);
    detail::put<double>(out, e.c.real());
    detail::put<double>(out, e.c.imag());
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline CoefficientFile read_coefficients(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic(kCoefficientMagic.size(), '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCoefficientMagic)
    throw IoError("'" + path + "' is not a coefficient file");
  std::string line;
  if (!std::getline(in, line)) throw IoError("coefficient file: missing header");
  CoefficientFile f;
  try {
    f.header = nlohmann::json::parse(line);
    const std::size_t d = f.header.at("dim").get<std::size_t>();
    if (d < 1 || d > kMaxDim) throw IoError("coefficient file: bad dimension");
    FrameGeometry g{f.header.at("a").get<double>(), f.header.at("N_c").get<int>(), f.header.at("M").get<int>()};
    const auto count = detail::get<std::uint64_t>(in);
    std::vector<CoefficientEntry> es;
    es.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
    for (std::uint64_t r = 0; r < count; ++r) {
      CoefficientEntry e;
      e.j = detail::get<std::uint32_t>(in);
      for (std::size_t i = 0; i < d; ++i) e.n[i] = detail::get<std::int32_t>(in);
      const double re = detail::get<double>(in);
      const double im = detail::get<double>(in);
      e.c = {re, im};
      es.push_back(e);
    }
    f.coefficients = CoefficientSet(d, g, f.header.at("covering_id").get<std::string>(),
                                    f.header.at("bump_order").get<int>(), std::move(es));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("coefficient file: malformed header: ") + e.what());
  }
  return f;
}

/// decomposition, coefficient and frame norms of one function in one report.
inline NormReport norm_report(const Bapu& b, const SpectralFunction& f, const CoefficientSet& cs,
                              const SpaceParams& params, int grid) {
  NormReport rep = decomposition_norm(b, f, params, grid);
  rep.coefficient_norm = coefficient_norm(cs, b.covering(), params);
  rep.frame_norm = frame_norm(cs, b.covering(), params);
  return rep;
}

inline nlohmann::json to_json(const NormReport& r) {
  nlohmann::json terms = nlohmann::json::array();
  for (auto [j, v] : r.per_patch_terms) terms.push_back({j, v});
  return {{"decomposition_norm", r.decomposition_norm},
          {"frame_norm", r.frame_norm},
          {"coefficient_norm", r.coefficient_norm},
          {"ratio", r.frame_norm > 0.0 ? r.decomposition_norm / r.frame_norm : 0.0},
          {"max_tail", r.max_tail},
          {"reduced_accuracy", r.reduced_accuracy},
          {"per_patch_terms", terms}};
}

/// Parses a p or q value; "inf" selects sup aggregation.
inline double parse_exponent(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return kInfinity;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw DomainError("cannot parse exponent '" + s + "'");
    }
  }
  return v.get<double>();
}

inline nlohmann::json exponent_json(double p) { return std::isinf(p) ? nlohmann::json("inf") : nlohmann::json(p); }

struct RunConfig {
  std::vector<double> anisotropy{1.0};
  double alpha = 0.5;
  double delta = 0.25;
  double pack_ratio = 0.35;
  std::pair<double, double> annulus{1.0 / 64.0, 64.0};
  int candidate_resolution = 32;
  int N_c = 32;
  int M = 128;
  int grid = 128;
  int bump_order = 3;
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
  std::vector<TestFunctionSpec> functions;
  SpaceParams norm;
  std::vector<double> keep_fractions{0.01, 0.05, 0.1, 0.5, 1.0};
  double pou_tol = 1e-10;
  double parseval_tol = 1e-4;
  double reconstruction_tol = 1e-4;
  std::string output_dir = "out";
};

/// d = 1, alpha = 0.5 with three registered test functions.
inline RunConfig default_config() {
  RunConfig cfg;
  cfg.functions = {
      {"gaussbump_annular", {{"center", 1.0}, {"width", 0.6}}},
      {"multi_bump", {{"centers", {{-4.0}, {0.5}}}, {"widths", {2.4, 0.3}}, {"amplitudes", {1.0, -0.5}}}},
      {"atom_like", {{"center", {2.0}}, {"width", 1.2}, {"shift", {0.7}}}},
  };
  return cfg;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : c.functions) fs.push_back(to_json(f));
  return {{"anisotropy", c.anisotropy},
          {"alpha", c.alpha},
          {"delta", c.delta},
          {"pack_ratio", c.pack_ratio},
          {"annulus", {c.annulus.first, c.annulus.second}},
          {"candidate_resolution", c.candidate_resolution},
          {"N_c", c.N_c},
          {"M", c.M},
          {"grid", c.grid},
          {"bump_order", c.bump_order},
          {"seed", c.seed},
          {"samples", c.samples},
          {"functions", fs},
          {"norm", {{"p", exponent_json(c.norm.p)}, {"q", exponent_json(c.norm.q)}, {"beta", c.norm.beta}}},
          {"keep_fractions", c.keep_fractions},
          {"thresholds", {{"pou", c.pou_tol}, {"parseval", c.parseval_tol}, {"reconstruction", c.reconstruction_tol}}},
          {"output_dir", c.output_dir}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "anisotropy", "alpha", "delta", "pack_ratio", "annulus", "candidate_resolution", "N_c", "M", "grid",
      "bump_order", "seed", "samples", "functions", "norm", "keep_fractions", "thresholds", "output_dir"};
  if (!j.is_object()) throw DomainError("config: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw DomainError("config: unknown key '" + k + "'");
  RunConfig c = default_config();
  try {
    if (j.contains("anisotropy")) c.anisotropy = j["anisotropy"].get<std::vector<double>>();
    c.alpha = j.value("alpha", c.alpha);
    c.delta = j.value("delta", c.delta);
    c.pack_ratio = j.value("pack_ratio", c.pack_ratio);
    if (j.contains("annulus")) {
      const auto a = j["annulus"].get<std::vector<double>>();
      if (a.size() != 2) throw DomainError("config: annulus needs two entries");
      c.annulus = {a[0], a[1]};
    }
    c.candidate_resolution = j.value("candidate_resolution", c.candidate_resolution);
    c.N_c = j.value("N_c", c.N_c);
    c.M = j.value("M", c.M);
    c.grid = j.value("grid", c.grid);
    c.bump_order = j.value("bump_order", c.bump_order);
    c.seed = j.value("seed", c.seed);
    c.samples = j.value("samples", c.samples);
    if (j.contains("functions")) {
      c.functions.clear();
      for (const auto& f : j["functions"]) c.functions.push_back(function_spec_from_json(f));
    }
    if (j.contains("norm")) {
      const auto& n = j["norm"];
      if (n.contains("p")) c.norm.p = parse_exponent(n["p"]);
      if (n.contains("q")) c.norm.q = parse_exponent(n["q"]);
      c.norm.beta = n.value("beta", c.norm.beta);
    }
    if (j.contains("keep_fractions")) c.keep_fractions = j["keep_fractions"].get<std::vector<double>>();
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      c.pou_tol = t.value("pou", c.pou_tol);
      c.parseval_tol = t.value("parseval", c.parseval_tol);
      c.reconstruction_tol = t.value("reconstruction", c.reconstruction_tol);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
}

/// A failure in a named pipeline stage.  exit_code follows the CLI
/// convention: 2 validation, 4 I/O.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return code_; }

 private:
  std::string stage_;
  int code_;
};

struct PipelineResult {
  int exit_code = 0;  // 0 or 3 (threshold violated)
  std::vector<std::string> artifacts;
  nlohmann::json summary;
};

namespace detail {

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const IoError& e) {
    throw StageError(name, e.what(), 4);
  } catch (const DomainError& e) {
    throw StageError(name, e.what(), 2);
  } catch (const ConstructionError& e) {
    throw StageError(name, e.what(), 2);
  } catch (const std::invalid_argument& e) {
    throw StageError(name, e.what(), 2);
  }
}

inline QuasiNormContext make_context(const std::vector<double>& a, std::uint64_t seed) {
  QuasiNormContext ctx{Anisotropy(a)};
  estimate_K(ctx, 20000, seed);
  return ctx;
}

}  // namespace detail

/// Checks every module precondition before any compute stage runs.
inline void validate_config(const RunConfig& c) {
  detail::stage("validate", [&] {
    if (c.anisotropy.empty() || c.anisotropy.size() > 2)
      throw DomainError("config: the greedy covering supports d in {1, 2}");
    const QuasiNormContext ctx = detail::make_context(c.anisotropy, c.seed);
    const HybridRegulation h = alpha_regulation(ctx, c.alpha);
    if (!(c.delta > 0.0)) throw DomainError("config: delta must be positive");
    if (!(c.pack_ratio > 0.0 && c.pack_ratio < 1.0)) throw DomainError("config: pack_ratio must lie in (0, 1)");
    if (!(c.annulus.first > 0.0 && c.annulus.first < c.annulus.second)) throw DomainError("config: bad annulus");
    if (c.candidate_resolution < 32) throw DomainError("config: candidate_resolution must be >= 32");
    detail::check_delta_precondition(h, c.delta, c.annulus.first, c.annulus.second);
    FrameGeometry{cube_halfside(ctx), c.N_c, c.M}.validate();
    if (c.grid < 128 || c.grid % 2 != 0) throw DomainError("config: grid must be even and >= 128");
    if (c.bump_order < 3) throw DomainError("config: bump_order must be >= 3");
    if (c.samples < 10000) throw DomainError("config: samples must be >= 10^4");
    c.norm.validate();
    for (double k : c.keep_fractions)
      if (!(k > 0.0 && k <= 1.0)) throw DomainError("config: keep fractions must lie in (0, 1]");
    if (c.functions.empty()) throw DomainError("config: no test functions");
    const double lo = 2.0 * c.annulus.first, hi = 0.5 * c.annulus.second;
    for (const auto& spec : c.functions) {
      const SpectralFunction f = registry_instantiate(ctx, spec);
      const auto sb = f.support_box();
      const double s_lo = f.support_hint() ? f.support_hint()->first : sb->min_norm(ctx);
      const double s_hi = f.support_hint() ? f.support_hint()->second : sb->max_norm(ctx);
      if (!(s_lo > lo && s_hi < hi))
        throw DomainError("config: support of '" + spec.name + "' leaves the inner annulus");
    }
    return 0;
  });
}

/// Runs build, admissibility, partition of unity, analysis, Parseval,
/// norms and compression; writes artifacts into cfg.output_dir, which must exist.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  if (!fs::is_directory(cfg.output_dir)) throw StageError("output", "directory '" + cfg.output_dir + "' does not exist", 4);
  PipelineResult res;
  auto path = [&](const std::string& name) {
    res.artifacts.push_back(name);
    return (fs::path(cfg.output_dir) / name).string();
  };
  auto write_json = [&](const std::string& name, const nlohmann::json& j) {
    auto out = detail::open_out(path(name));
    out << j.dump(2) << '\n';
  };
  bool ok = true;
  nlohmann::json& S = res.summary;
  S["config"] = to_json(cfg);

  const QuasiNormContext ctx = detail::make_context(cfg.anisotropy, cfg.seed);
  auto cov = detail::stage("build", [&] {
    BuildOptions opt;
    opt.seed = cfg.seed;
    return std::make_shared<const Covering>(build_covering(alpha_regulation(ctx, cfg.alpha), cfg.delta, cfg.pack_ratio,
                                                           cfg.annulus, cfg.candidate_resolution, opt));
  });
  detail::stage("build", [&] {
    write_json("covering.json", to_json(*cov));
    return 0;
  });
  S["covering"] = {{"id", cov->id()}, {"patches", cov->size()}, {"max_neighbors", cov->max_neighbors()}};

  detail::stage("check", [&] {
    const auto adm = check_admissible(*cov, cfg.samples, cfg.seed);
    const auto pack = check_packing(*cov);
    nlohmann::json j = {{"n_samples", adm.n_samples},
                        {"covered_fraction", adm.covered_fraction},
                        {"max_overlap", adm.max_overlap},
                        {"min_dist_to_origin", adm.min_dist_to_origin},
                        {"max_transition_norm", adm.max_transition_norm},
                        {"packing_pairs", pack.pairs_checked},
                        {"packing_violations", pack.violations}};
    j["pass"] = adm.covered_fraction == 1.0 && pack.violations == 0 && adm.min_dist_to_origin > 0.0;
    ok = ok && j["pass"].get<bool>();
    write_json("admissibility.json", j);
    S["admissibility"] = j;
    return 0;
  });

  const Bapu bapu(cov, cfg.bump_order);
  detail::stage("pou", [&] {
    const auto r = verify_pou(bapu, cfg.samples, cfg.seed);
    nlohmann::json j = {{"n_samples", r.n_samples},
                        {"max_psi_residual", r.max_psi_residual},
                        {"max_phi2_residual", r.max_phi2_residual},
                        {"uncovered", r.uncovered}};
    j["pass"] = std::max(r.max_psi_residual, r.max_phi2_residual) <= cfg.pou_tol;
    ok = ok && j["pass"].get<bool>();
    write_json("pou.json", j);
    S["pou"] = j;
    return 0;
  });

  const FrameGeometry geom = make_geometry(*cov, cfg.N_c, cfg.M);
  S["functions"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.functions.size(); ++k) {
    const auto& spec = cfg.functions[k];
    const std::string tag = "f" + std::to_string(k);
    nlohmann::json fj = {{"name", spec.name}, {"tag", tag}};
    const SpectralFunction f = detail::stage("analyze", [&] { return registry_instantiate(ctx, spec); });
    const CoefficientSet cs = detail::stage("analyze", [&] {
      CoefficientSet out = analyze(bapu, geom, f);
      write_coefficients(path("coeffs_" + tag + ".bin"), out, *cov, spec);
      return out;
    });
    fj["coefficients"] = cs.size();
    detail::stage("parseval", [&] {
      const double ratio = parseval_check(cs, f);
      const double err = reconstruct_error(f, cs, bapu, cfg.samples);
      fj["parseval_ratio"] = ratio;
      fj["reconstruct_error"] = err;
      fj["parseval_pass"] = std::abs(ratio - 1.0) <= cfg.parseval_tol;
      fj["reconstruction_pass"] = err <= cfg.reconstruction_tol;
      ok = ok && fj["parseval_pass"].get<bool>() && fj["reconstruction_pass"].get<bool>();
      return 0;
    });
    detail::stage("norm", [&] {
      const NormReport rep = norm_report(bapu, f, cs, cfg.norm, cfg.grid);
      nlohmann::json j = to_json(rep);
      j["params"] = {{"p", exponent_json(cfg.norm.p)}, {"q", exponent_json(cfg.norm.q)}, {"beta", cfg.norm.beta}};
      write_json("norm_" + tag + ".json", j);
      fj["decomposition_norm"] = rep.decomposition_norm;
      fj["frame_norm"] = rep.frame_norm;
      return 0;
    });
    detail::stage("compress", [&] {
      auto out = detail::open_out(path("compression_" + tag + ".csv"));
      out << "keep_fraction,kept,reconstruct_error\n";
      out.precision(17);
      double prev = kInfinity;
      bool monotone = true;
      for (double frac : cfg.keep_fractions) {
        const auto keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(cs.size())));
        const double err = reconstruct_error(f, threshold(cs, keep), bapu, cfg.samples);
        out << frac << ',' << keep << ',' << err << '\n';
        monotone = monotone && err <= prev * (1.0 + 1e-12);
        prev = err;
      }
      fj["compression_monotone"] = monotone;
      return 0;
    });
    S["functions"].push_back(fj);
  }
  S["pass"] = ok;
  detail::stage("summary", [&] {
    write_json("summary.json", S);
    return 0;
  });
  res.exit_code = ok ? 0 : 3;
  return res;
}

/// FNV-1a of a file's bytes.
inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

}  // namespace freqtile

#endif  // FREQTILE_PIPELINE_HPP
