// freqtile command-line front end.  Exit codes: 0 success, 2 validation
// failure, 3 acceptance threshold violated, 4 I/O error.

#include <CLI11.hpp>
#include <iostream>

#include "freqtile/pipeline.hpp"

using namespace freqtile;
using nlohmann::json;

namespace {

struct Exit {
  int code;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DomainError(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DomainError("'" + path + "': " + e.what());
  }
}

Covering load_covering(const std::string& path) { return covering_from_json(read_json_file(path)); }

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw IoError("cannot open '" + out + "' for writing");
  f << j.dump(2) << '\n';
}

TestFunctionSpec function_arg(const std::string& name, const std::string& params) {
  TestFunctionSpec s;
  s.name = name;
  try {
    s.params = params.empty() ? json::object() : json::parse(params);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("--params: ") + e.what());
  }
  return s;
}

double exponent_arg(const std::string& s) { return parse_exponent(json(s)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freqtile: structured frequency coverings, tight frames and decomposition-space norms"};
  app.require_subcommand(1);

  // covering build | check
  auto* cov = app.add_subcommand("covering", "build or check a covering");
  cov->require_subcommand(1);
  auto* build = cov->add_subcommand("build", "greedy covering for the alpha family");
  double alpha = 0.5, delta = 0.25, pack_ratio = 0.35;
  std::string aniso = "1", annulus = "0.015625,64", out;
  int resolution = 32;
  std::uint64_t seed = 1;
  build->add_option("--alpha", alpha, "alpha in [0, 1]");
  build->add_option("--aniso", aniso, "anisotropy a1,a2,...");
  build->add_option("--delta", delta, "covering radius factor");
  build->add_option("--pack-ratio", pack_ratio, "packing to covering radius ratio");
  build->add_option("--annulus", annulus, "RMIN,RMAX");
  build->add_option("--resolution", resolution, "candidate resolution (>= 32)");
  build->add_option("--seed", seed, "seed for K estimation and verification");
  build->add_option("-o,--output", out, "output JSON (stdout if absent)");

  auto* check = cov->add_subcommand("check", "admissibility and packing report");
  std::string cov_path;
  std::size_t samples = 10000;
  check->add_option("covering", cov_path, "covering JSON")->required();
  check->add_option("--samples", samples, "inner-annulus samples");
  check->add_option("--seed", seed, "sampling seed");

  // bapu check
  auto* bapu = app.add_subcommand("bapu", "partition of unity");
  bapu->require_subcommand(1);
  auto* bcheck = bapu->add_subcommand("check", "verify sum psi = 1 and sum phi^2 = 1");
  int order = 3;
  std::string heatmap;
  double pou_tol = 1e-10;
  bcheck->add_option("covering", cov_path, "covering JSON")->required();
  bcheck->add_option("--samples", samples, "inner-annulus samples");
  bcheck->add_option("--order", order, "smoothstep order");
  bcheck->add_option("--seed", seed, "sampling seed");
  bcheck->add_option("--tol", pou_tol, "residual threshold");
  bcheck->add_option("--heatmap", heatmap, "CSV of per-sample residuals");

  // analyze
  auto* an = app.add_subcommand("analyze", "frame coefficients of a registered test function");
  std::string fn, params;
  int N_c = 32, M = 128;
  an->add_option("covering", cov_path, "covering JSON")->required();
  an->add_option("--fn", fn, "test function name")->required();
  an->add_option("--params", params, "JSON parameters");
  an->add_option("--Nc", N_c, "coefficient truncation");
  an->add_option("--M", M, "FFT grid per dimension");
  an->add_option("--order", order, "smoothstep order");
  an->add_option("-o,--output", out, "coefficient file")->required();

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "evaluate the frame expansion at a frequency");
  std::string coeff_path, at;
  syn->add_option("coefficients", coeff_path, "coefficient file")->required();
  syn->add_option("--at", at, "xi1,xi2,...")->required();

  // parseval
  auto* par = app.add_subcommand("parseval", "sum |c|^2 / ||f||^2 against the function's oracle");
  double parseval_tol = 1e-4;
  par->add_option("coefficients", coeff_path, "coefficient file")->required();
  par->add_option("--tol", parseval_tol, "threshold on |ratio - 1|");

  // norm
  auto* nrm = app.add_subcommand("norm", "decomposition, coefficient and frame norms");
  std::string p_text = "2", q_text = "2";
  double beta = 0.0;
  int grid = 128;
  nrm->add_option("covering", cov_path, "covering JSON")->required();
  nrm->add_option("--fn", fn, "test function name")->required();
  nrm->add_option("--params", params, "JSON parameters");
  nrm->add_option("--p", p_text, "p in (0, inf]");
  nrm->add_option("--q", q_text, "q in (0, inf]");
  nrm->add_option("--beta", beta, "weight exponent");
  nrm->add_option("--grid", grid, "grid per dimension (>= 128)");
  nrm->add_option("--Nc", N_c, "coefficient truncation");
  nrm->add_option("--M", M, "FFT grid per dimension");

  // compress
  auto* cmp = app.add_subcommand("compress", "keep the largest coefficients");
  std::string keep_text;
  cmp->add_option("coefficients", coeff_path, "coefficient file")->required();
  cmp->add_option("--keep", keep_text, "count, or fraction with a trailing %")->required();
  cmp->add_option("-o,--output", out, "output coefficient file")->required();

  // report
  auto* rep = app.add_subcommand("report", "norm report and compression curve");
  std::string out_dir = ".";
  rep->add_option("covering", cov_path, "covering JSON")->required();
  rep->add_option("--fn", fn, "test function name")->required();
  rep->add_option("--params", params, "JSON parameters");
  rep->add_option("--p", p_text, "p in (0, inf]");
  rep->add_option("--q", q_text, "q in (0, inf]");
  rep->add_option("--beta", beta, "weight exponent");
  rep->add_option("--grid", grid, "grid per dimension (>= 128)");
  rep->add_option("--Nc", N_c, "coefficient truncation");
  rep->add_option("--M", M, "FFT grid per dimension");
  rep->add_option("-o,--output-dir", out_dir, "directory for report.json and compression.csv");

  // selftest, run
  auto* st = app.add_subcommand("selftest", "run the pipeline and print artifact hashes");
  std::string config_path;
  st->add_option("--config", config_path, "config JSON (default built in)");
  st->add_option("-o,--output-dir", out_dir, "artifact directory (created if missing)");
  auto* run = app.add_subcommand("run", "run the pipeline from a config");
  run->add_option("config", config_path, "config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (build->parsed()) {
      QuasiNormContext ctx(parse_anisotropy(aniso));
      estimate_K(ctx, 20000, seed);
      const auto ann = parse_list(annulus, "annulus");
      if (ann.size() != 2) throw DomainError("--annulus needs RMIN,RMAX");
      BuildOptions opt;
      opt.seed = seed;
      const Covering c = build_covering(alpha_regulation(ctx, alpha), delta, pack_ratio, {ann[0], ann[1]}, resolution, opt);
      emit(to_json(c), out);
      std::cerr << "patches " << c.size() << " id " << c.id() << '\n';
    } else if (check->parsed()) {
      const Covering c = load_covering(cov_path);
      const auto adm = check_admissible(c, samples, seed);
      const auto pk = check_packing(c);
      json j = {{"n_samples", adm.n_samples},       {"covered_fraction", adm.covered_fraction},
                {"max_overlap", adm.max_overlap},   {"min_dist_to_origin", adm.min_dist_to_origin},
                {"packing_violations", pk.violations}, {"max_neighbors", c.max_neighbors()}};
      const bool pass = adm.covered_fraction == 1.0 && pk.violations == 0 && adm.min_dist_to_origin > 0.0;
      j["pass"] = pass;
      emit(j, "");
      if (!pass) throw Exit{3};
    } else if (bcheck->parsed()) {
      auto c = std::make_shared<const Covering>(load_covering(cov_path));
      const Bapu b(c, order);
      const auto r = verify_pou(b, samples, seed);
      if (!heatmap.empty()) {
        std::ofstream h(heatmap);
        if (!h) throw IoError("cannot open '" + heatmap + "' for writing");
        h.precision(17);
        h << "sample";
        for (std::size_t i = 0; i < c->dim(); ++i) h << ",xi" << i;
        h << ",psi_residual,phi2_residual\n";
        Rng rng(seed);
        for (std::size_t s = 0; s < samples; ++s) {
          const Point xi = c->sample_inner(rng);
          const LocalBumps loc = b.local(xi);
          double sp = 0.0, sq = 0.0;
          for (double g : loc.g) {
            sp += g / loc.sum;
            sq += g * g / loc.sum_sq;
          }
          h << s;
          for (std::size_t i = 0; i < c->dim(); ++i) h << ',' << xi[i];
          h << ',' << (loc.ids.empty() ? 1.0 : std::abs(sp - 1.0)) << ',' << (loc.ids.empty() ? 1.0 : std::abs(sq - 1.0))
            << '\n';
        }
      }
      const bool pass = std::max(r.max_psi_residual, r.max_phi2_residual) <= pou_tol;
      emit({{"n_samples", r.n_samples},
            {"max_psi_residual", r.max_psi_residual},
            {"max_phi2_residual", r.max_phi2_residual},
            {"uncovered", r.uncovered},
            {"pass", pass}},
           "");
      if (!pass) throw Exit{3};
    } else if (an->parsed()) {
      auto c = std::make_shared<const Covering>(load_covering(cov_path));
      const Bapu b(c, order);
      const auto spec = function_arg(fn, params);
      const SpectralFunction f = registry_instantiate(c->context(), spec);
      const CoefficientSet cs = analyze(b, make_geometry(*c, N_c, M), f);
      write_coefficients(out, cs, *c, spec);
      std::cerr << "coefficients " << cs.size() << " energy " << cs.energy() << '\n';
    } else if (syn->parsed()) {
      const CoefficientFile file = read_coefficients(coeff_path);
      auto c = std::make_shared<const Covering>(file.covering());
      const Bapu b(c, file.coefficients.bump_order());
      const Point xi = Point::from(parse_list(at, "--at"));
      if (xi.size() != c->dim()) throw DomainError("--at has the wrong dimension");
      const Complex v = synthesize(file.coefficients, b, xi);
      json j = {{"xi", xi.to_vector()}, {"re", v.real()}, {"im", v.imag()}};
      if (auto spec = file.function()) {
        const Complex e = registry_instantiate(c->context(), *spec)(xi);
        j["f_hat"] = {e.real(), e.imag()};
        j["abs_error"] = std::abs(v - e);
      }
      emit(j, "");
    } else if (par->parsed()) {
      const CoefficientFile file = read_coefficients(coeff_path);
      const auto spec = file.function();
      if (!spec) throw DomainError("parseval: the coefficient file records no function");
      const Covering c = file.covering();
      const double ratio = parseval_check(file.coefficients, registry_instantiate(c.context(), *spec));
      const bool pass = std::abs(ratio - 1.0) <= parseval_tol;
      emit({{"ratio", ratio}, {"energy", file.coefficients.energy()}, {"pass", pass}}, "");
      if (!pass) throw Exit{3};
    } else if (nrm->parsed() || rep->parsed()) {
      auto c = std::make_shared<const Covering>(load_covering(cov_path));
      const Bapu b(c, order);
      const SpectralFunction f = registry_instantiate(c->context(), function_arg(fn, params));
      const SpaceParams sp{exponent_arg(p_text), exponent_arg(q_text), beta};
      const CoefficientSet cs = analyze(b, make_geometry(*c, N_c, M), f);
      const NormReport r = norm_report(b, f, cs, sp, grid);
      json j = to_json(r);
      if (nrm->parsed()) {
        j.erase("per_patch_terms");
        emit(j, "");
      } else {
        namespace fs = std::filesystem;
        if (!fs::is_directory(out_dir)) throw IoError("directory '" + out_dir + "' does not exist");
        emit(j, (fs::path(out_dir) / "report.json").string());
        std::ofstream csv((fs::path(out_dir) / "compression.csv").string());
        if (!csv) throw IoError("cannot write compression.csv");
        csv.precision(17);
        csv << "keep_fraction,kept,reconstruct_error\n";
        for (double frac : {0.01, 0.05, 0.1, 0.5, 1.0}) {
          const auto keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(cs.size())));
          csv << frac << ',' << keep << ',' << reconstruct_error(f, threshold(cs, keep), b, 10000) << '\n';
        }
      }
    } else if (cmp->parsed()) {
      const CoefficientFile file = read_coefficients(coeff_path);
      const Covering c = file.covering();
      std::size_t keep = 0;
      try {
        if (!keep_text.empty() && keep_text.back() == '%') {
          const double frac = std::stod(keep_text.substr(0, keep_text.size() - 1)) / 100.0;
          if (!(frac >= 0.0 && frac <= 1.0)) throw DomainError("--keep percentage must lie in [0, 100]");
          keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(file.coefficients.size())));
        } else {
          const long long k = std::stoll(keep_text);
          if (k < 0) throw DomainError("--keep must be nonnegative");
          keep = static_cast<std::size_t>(k);
        }
      } catch (const std::logic_error& e) {
        if (dynamic_cast<const DomainError*>(&e)) throw;
        throw DomainError("cannot parse --keep '" + keep_text + "'");
      }
      const CoefficientSet small = threshold(file.coefficients, keep);
      write_coefficients(out, small, c, file.function());
      std::cerr << "kept " << small.size() << " of " << file.coefficients.size() << '\n';
    } else if (st->parsed() || run->parsed()) {
      RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
      if (st->parsed()) {
        cfg.output_dir = out_dir == "." ? "selftest_out" : out_dir;
        std::error_code ec;
        std::filesystem::create_directories(cfg.output_dir, ec);
        if (ec) throw IoError("cannot create '" + cfg.output_dir + "': " + ec.message());
      }
      const PipelineResult r = run_pipeline(cfg);
      json hashes = json::object();
      for (const auto& a : r.artifacts) hashes[a] = file_hash((std::filesystem::path(cfg.output_dir) / a).string());
      std::string all;
      for (const auto& [k, v] : hashes.items()) all += k + "=" + v.get<std::string>() + ";";
      emit({{"pass", r.summary.at("pass")}, {"artifacts", hashes}, {"combined", hex64(fnv1a(all))}}, "");
      if (r.exit_code != 0) throw Exit{r.exit_code};
    }
  } catch (const Exit& e) {
    return e.code;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const DomainError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const ConstructionError& e) {
    std::cerr << "construction error: " << e.what() << " (" << e.uncovered().size() << " uncovered points)\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
