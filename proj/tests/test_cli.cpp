#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "support.hpp"

using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freqtile_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Runs the CLI through the shell; returns its exit status.
int cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = "cd '" + dir.string() + "' && '" FREQTILE_CLI_PATH "' " + args + " >out.txt 2>err.txt";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json json_out(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "out.txt")); }

}  // namespace

TEST(Registry, AnnularBumpSupport) {
  for (std::size_t d : {1u, 2u}) {
    const auto ctx = d == 1 ? context({1.0}) : context(aniso2());
    const auto f = ft::registry_instantiate(ctx, {"gaussbump_annular", {{"center", 4.0}, {"width", 0.5}}});
    ASSERT_TRUE(f.support_hint());
    EXPECT_GE(f.support_hint()->first, 3.0);
    EXPECT_LE(f.support_hint()->second, 5.0);
    ft::Rng rng(5);
    for (int s = 0; s < 2000; ++s) {
      const double r = 0.01 + 10.0 * ft::uniform01(rng);
      const ft::Point xi = ft::at_norm(ctx, r, ft::random_direction(d, rng));
      if (r <= 3.5 || r >= 4.5) {
        EXPECT_EQ(std::abs(f(xi)), 0.0);
      }
    }
    EXPECT_NEAR(std::abs(f(ft::at_norm(ctx, 4.0, ft::Point::from(std::vector<double>(d, 1.0 / std::sqrt(static_cast<double>(d))))))), 1.0, 1e-12);
    EXPECT_GT(*f.l2_norm_oracle(), 0.0);
  }
}

TEST(Registry, ZeroAmplitude) {
  const auto ctx = context({1.0});
  const auto f = ft::registry_instantiate(ctx, {"gaussbump_annular", {{"center", 4.0}, {"width", 0.5}, {"amplitude", 0.0}}});
  EXPECT_EQ(*f.l2_norm_oracle(), 0.0);
  EXPECT_EQ(std::abs(f(ft::Point::from(std::vector<double>{4.0}))), 0.0);
  const auto g = ft::registry_instantiate(
      ctx, {"multi_bump", {{"centers", {{2.0}, {5.0}}}, {"widths", 0.5}, {"amplitudes", {0.0, 0.0}}}});
  EXPECT_EQ(*g.l2_norm_oracle(), 0.0);
}

TEST(Registry, DisjointBumpsAdditive) {
  for (std::size_t d : {1u, 2u}) {
    const auto ctx = d == 1 ? context({1.0}) : context(aniso2());
    std::vector<double> c1(d, 0.0), c2(d, 0.0);
    c1[0] = 2.0;
    c2[0] = -3.0;
    if (d == 2) c2[1] = 1.0;
    const auto both = ft::registry_instantiate(
        ctx, {"multi_bump", {{"centers", {c1, c2}}, {"widths", 0.5}, {"amplitudes", {1.0, -0.7}}}});
    const auto f1 = ft::registry_instantiate(ctx, {"multi_bump", {{"centers", {c1}}, {"widths", 0.5}}});
    const auto f2 =
        ft::registry_instantiate(ctx, {"multi_bump", {{"centers", {c2}}, {"widths", 0.5}, {"amplitudes", {-0.7}}}});
    const double sum = std::pow(*f1.l2_norm_oracle(), 2) + std::pow(*f2.l2_norm_oracle(), 2);
    EXPECT_NEAR(std::pow(*both.l2_norm_oracle(), 2) / sum, 1.0, 1e-10);
  }
}

TEST(Registry, Errors) {
  const auto ctx = context({1.0});
  EXPECT_THROW(ft::registry_instantiate(ctx, {"gaussbump", {{"center", 4.0}, {"width", 0.5}}}), ft::DomainError);
  EXPECT_THROW(ft::registry_instantiate(ctx, {"gaussbump_annular", {{"center", 4.0}}}), ft::DomainError);
  EXPECT_THROW(ft::registry_instantiate(ctx, {"gaussbump_annular", {{"center", 1.0}, {"width", 2.0}}}), ft::DomainError);
  EXPECT_THROW(ft::registry_instantiate(ctx, {"atom_like", {{"center", {0.2}}, {"width", 0.5}}}), ft::DomainError);
  EXPECT_THROW(ft::registry_instantiate(ctx, {"multi_bump", {{"centers", {{2.0}}}, {"widths", {0.5, 0.5}}}}),
               ft::DomainError);
  EXPECT_THROW(ft::registry_instantiate(ctx, {"atom_like", {{"center", {2.0, 1.0}}, {"width", 0.5}}}), ft::DomainError);
}

TEST(CoefficientFile, RoundTrip) {
  const auto c = covering(1, 0.5);
  const ft::Bapu b(c);
  const ft::TestFunctionSpec spec{"atom_like", {{"center", {2.0}}, {"width", 1.2}, {"shift", {0.4}}}};
  const auto f = ft::registry_instantiate(c->context(), spec);
  const auto cs = ft::analyze(b, ft::make_geometry(*c, 32, 128), f);
  const auto dir = scratch("coef");
  const auto path = (dir / "c.bin").string();
  ft::write_coefficients(path, cs, *c, spec);
  const auto file = ft::read_coefficients(path);
  EXPECT_EQ(file.coefficients.covering_id(), c->id());
  EXPECT_EQ(file.covering().id(), c->id());
  EXPECT_EQ(file.coefficients.bump_order(), cs.bump_order());
  EXPECT_EQ(file.coefficients.geometry().N_c, 32);
  EXPECT_EQ(file.coefficients.geometry().M, 128);
  ASSERT_TRUE(file.function());
  EXPECT_EQ(ft::to_json(*file.function()), ft::to_json(spec));
  ASSERT_EQ(file.coefficients.size(), cs.size());
  for (std::size_t k = 0; k < cs.size(); ++k) {
    EXPECT_EQ(file.coefficients.entries()[k].j, cs.entries()[k].j);
    EXPECT_EQ(file.coefficients.entries()[k].n, cs.entries()[k].n);
    EXPECT_EQ(file.coefficients.entries()[k].c, cs.entries()[k].c);
  }
  // Writing the reread file reproduces the bytes.
  ft::write_coefficients((dir / "d.bin").string(), file.coefficients, file.covering(), file.function());
  EXPECT_EQ(slurp(dir / "c.bin"), slurp(dir / "d.bin"));

  std::ofstream(dir / "bad.bin") << "NOTCOEF\n{}";
  EXPECT_THROW(ft::read_coefficients((dir / "bad.bin").string()), ft::IoError);
  EXPECT_THROW(ft::read_coefficients((dir / "missing.bin").string()), ft::IoError);
  auto bytes = slurp(dir / "c.bin");
  std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  EXPECT_THROW(ft::read_coefficients((dir / "trunc.bin").string()), ft::IoError);
  fs::remove_all(dir);
}

TEST(Config, RoundTripAndValidation) {
  const auto cfg = ft::default_config();
  ASSERT_EQ(cfg.functions.size(), 3u);
  EXPECT_EQ(ft::to_json(ft::config_from_json(ft::to_json(cfg))), ft::to_json(cfg));
  EXPECT_NO_THROW(ft::validate_config(cfg));

  // Missing keys keep defaults.
  const auto partial = ft::config_from_json({{"alpha", 1.0}});
  EXPECT_EQ(partial.alpha, 1.0);
  EXPECT_EQ(partial.delta, cfg.delta);

  EXPECT_THROW(ft::config_from_json({{"alpah", 1.0}}), ft::DomainError);
  EXPECT_THROW(ft::config_from_json({{"alpha", "big"}}), ft::DomainError);
  EXPECT_THROW(ft::config_from_json({{"annulus", {1.0}}}), ft::DomainError);
  EXPECT_THROW(ft::config_from_json(nlohmann::json::array()), ft::DomainError);
  const auto inf = ft::config_from_json({{"norm", {{"p", "inf"}, {"q", 1}}}});
  EXPECT_TRUE(std::isinf(inf.norm.p));

  auto expect_invalid = [](ft::RunConfig c) {
    try {
      ft::validate_config(c);
      ADD_FAILURE() << "config accepted";
    } catch (const ft::StageError& e) {
      EXPECT_EQ(e.stage(), "validate");
      EXPECT_EQ(e.exit_code(), 2);
    }
  };
  auto c = cfg;
  c.delta = 0.6;
  expect_invalid(c);
  c = cfg;
  c.alpha = 1.5;
  expect_invalid(c);
  c = cfg;
  c.grid = 64;
  expect_invalid(c);
  c = cfg;
  c.samples = 100;
  expect_invalid(c);
  c = cfg;
  c.functions = {{"gaussbump_annular", {{"center", 50.0}, {"width", 10.0}}}};
  expect_invalid(c);
  c = cfg;
  c.anisotropy = {1.0, 1.0, 1.0};
  expect_invalid(c);
}

TEST(Pipeline, DefaultRunAndErrors) {
  auto cfg = ft::default_config();
  const auto dir = scratch("pipe");
  cfg.output_dir = (dir / "a").string();
  fs::create_directories(cfg.output_dir);
  const auto r = ft::run_pipeline(cfg);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_TRUE(r.summary.at("pass").get<bool>());
  for (const char* name : {"covering.json", "admissibility.json", "pou.json", "summary.json", "coeffs_f0.bin",
                           "norm_f0.json", "compression_f0.csv"})
    EXPECT_NE(std::find(r.artifacts.begin(), r.artifacts.end(), name), r.artifacts.end()) << name;
  for (const auto& a : r.artifacts) EXPECT_TRUE(fs::exists(fs::path(cfg.output_dir) / a)) << a;
  for (const auto& fj : r.summary.at("functions")) {
    EXPECT_NEAR(fj.at("parseval_ratio").get<double>(), 1.0, 1e-4);
    EXPECT_TRUE(fj.at("compression_monotone").get<bool>());
  }
  // The written covering reads back hash-equal.
  const auto cov = ft::covering_from_json(nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "covering.json")));
  EXPECT_EQ(cov.id(), r.summary.at("covering").at("id").get<std::string>());

  // Same config, fresh directory: byte-identical artifacts.
  auto again = cfg;
  again.output_dir = (dir / "b").string();
  fs::create_directories(again.output_dir);
  const auto r2 = ft::run_pipeline(again);
  ASSERT_EQ(r2.artifacts, r.artifacts);
  for (const auto& a : r.artifacts) {
    if (a == "summary.json") continue;
    EXPECT_EQ(ft::file_hash((fs::path(cfg.output_dir) / a).string()), ft::file_hash((fs::path(again.output_dir) / a).string()))
        << a;
  }
  // The summary records its own output directory and is otherwise identical.
  auto s1 = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "summary.json"));
  auto s2 = nlohmann::json::parse(slurp(fs::path(again.output_dir) / "summary.json"));
  s1["config"].erase("output_dir");
  s2["config"].erase("output_dir");
  EXPECT_EQ(s1, s2);

  auto missing = cfg;
  missing.output_dir = (dir / "nope").string();
  try {
    ft::run_pipeline(missing);
    ADD_FAILURE() << "missing directory accepted";
  } catch (const ft::StageError& e) {
    EXPECT_EQ(e.exit_code(), 4);
  }

  auto big = cfg;
  big.delta = 0.6;
  big.output_dir = (dir / "c").string();
  fs::create_directories(big.output_dir);
  try {
    ft::run_pipeline(big);
    ADD_FAILURE() << "oversized delta accepted";
  } catch (const ft::StageError& e) {
    EXPECT_EQ(e.exit_code(), 2);
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos);
  }
  EXPECT_TRUE(fs::is_empty(big.output_dir));

  // An unreachable threshold turns into exit code 3 with artifacts still written.
  auto strict = cfg;
  strict.parseval_tol = 0.0;
  strict.output_dir = (dir / "d").string();
  fs::create_directories(strict.output_dir);
  const auto r3 = ft::run_pipeline(strict);
  EXPECT_EQ(r3.exit_code, 3);
  EXPECT_TRUE(fs::exists(fs::path(strict.output_dir) / "summary.json"));
  fs::remove_all(dir);
}

TEST(Cli, SelftestAndRun) {
  const auto dir = scratch("cli_run");
  ASSERT_EQ(cli("selftest -o st", dir), 0) << slurp(dir / "err.txt");
  const auto j = json_out(dir);
  EXPECT_TRUE(j.at("pass").get<bool>());
  EXPECT_TRUE(j.at("artifacts").contains("summary.json"));
  EXPECT_EQ(j.at("artifacts").at("covering.json").get<std::string>(), ft::file_hash((dir / "st/covering.json").string()));

  auto cfg = ft::to_json(ft::default_config());
  cfg["output_dir"] = (dir / "run").string();
  fs::create_directories(dir / "run");
  std::ofstream(dir / "good.json") << cfg.dump();
  EXPECT_EQ(cli("run good.json", dir), 0) << slurp(dir / "err.txt");
  EXPECT_TRUE(fs::exists(dir / "run/summary.json"));

  cfg["delta"] = 0.6;
  std::ofstream(dir / "big.json") << cfg.dump();
  EXPECT_EQ(cli("run big.json", dir), 2);
  EXPECT_NE(slurp(dir / "err.txt").find("validate"), std::string::npos);

  cfg["delta"] = 0.25;
  cfg["output_dir"] = (dir / "absent").string();
  std::ofstream(dir / "absent.json") << cfg.dump();
  EXPECT_EQ(cli("run absent.json", dir), 4);

  std::ofstream(dir / "unknown.json") << R"({"alpah": 0.5})";
  EXPECT_EQ(cli("run unknown.json", dir), 2);
  EXPECT_EQ(cli("run no_such_config.json", dir), 4);
  EXPECT_EQ(cli("frobnicate", dir), 2);
  fs::remove_all(dir);
}

TEST(Cli, CommandChain) {
  const auto dir = scratch("cli_chain");
  ASSERT_EQ(cli("covering build --alpha 0.5 --aniso 1 --delta 0.25 --annulus 0.015625,64 -o cov.json", dir), 0)
      << slurp(dir / "err.txt");
  const auto cov = ft::covering_from_json(nlohmann::json::parse(slurp(dir / "cov.json")));
  EXPECT_EQ(cov.id(), covering(1, 0.5)->id());

  ASSERT_EQ(cli("covering check cov.json --samples 10000", dir), 0);
  auto j = json_out(dir);
  EXPECT_EQ(j.at("covered_fraction").get<double>(), 1.0);
  EXPECT_EQ(j.at("packing_violations").get<int>(), 0);

  ASSERT_EQ(cli("bapu check cov.json --heatmap heat.csv", dir), 0);
  j = json_out(dir);
  EXPECT_LE(j.at("max_phi2_residual").get<double>(), 1e-10);
  EXPECT_TRUE(fs::exists(dir / "heat.csv"));

  const std::string fn = R"(--fn atom_like --params '{"center":[2.0],"width":1.2,"shift":[0.4]}')";
  ASSERT_EQ(cli("analyze cov.json " + fn + " -o c.bin", dir), 0) << slurp(dir / "err.txt");
  ASSERT_EQ(cli("parseval c.bin", dir), 0);
  EXPECT_NEAR(json_out(dir).at("ratio").get<double>(), 1.0, 1e-4);
  EXPECT_EQ(cli("parseval c.bin --tol 0", dir), 3);

  ASSERT_EQ(cli("synthesize c.bin --at 2.3", dir), 0);
  j = json_out(dir);
  EXPECT_LT(j.at("abs_error").get<double>(), 1e-4);
  EXPECT_EQ(cli("synthesize c.bin --at 2.3,1.0", dir), 2);

  ASSERT_EQ(cli("compress c.bin --keep 10% -o small.bin", dir), 0);
  const auto full = ft::read_coefficients((dir / "c.bin").string());
  const auto small = ft::read_coefficients((dir / "small.bin").string());
  EXPECT_EQ(small.coefficients.size(),
            static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(full.coefficients.size()))));
  EXPECT_EQ(cli("compress c.bin --keep -3 -o x.bin", dir), 2);
  EXPECT_EQ(cli("compress c.bin --keep lots -o x.bin", dir), 2);

  ASSERT_EQ(cli("norm cov.json " + fn + " --p inf --q 1 --beta 1", dir), 0) << slurp(dir / "err.txt");
  j = json_out(dir);
  EXPECT_GT(j.at("decomposition_norm").get<double>(), 0.0);
  EXPECT_FALSE(j.contains("per_patch_terms"));
  EXPECT_EQ(cli("norm cov.json " + fn + " --p 0", dir), 2);

  fs::create_directories(dir / "rep");
  ASSERT_EQ(cli("report cov.json " + fn + " -o rep", dir), 0) << slurp(dir / "err.txt");
  j = nlohmann::json::parse(slurp(dir / "rep/report.json"));
  for (const char* k : {"decomposition_norm", "frame_norm", "ratio", "per_patch_terms"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_NE(slurp(dir / "rep/compression.csv").find("keep_fraction,kept,reconstruct_error"), std::string::npos);
  EXPECT_EQ(cli("report cov.json " + fn + " -o missing_dir", dir), 4);

  EXPECT_EQ(cli("covering check absent.json", dir), 4);
  std::ofstream(dir / "junk.json") << "{not json";
  EXPECT_EQ(cli("covering check junk.json", dir), 2);
  EXPECT_EQ(cli("covering build --alpha 0.5 --delta 0.6 -o big.json", dir), 2);
  fs::remove_all(dir);
}
