#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowkit/cli.hpp"

namespace flowkit {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "flowkit_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ExperimentConfig parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  load_ini(cfg, is, "test.ini");
  cfg.validate();
  return cfg;
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config_error);
    return e.what();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return "";
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Config, ParsesEverySection) {
  auto cfg = parse(R"(
# comment
[system]
name = torus_flow
alpha = 0.25
[seeds]
points = 0.1,0.2; 0.3,0.4
sampler = random:3
rng_seed = 9
[grid]
h = 0.05
[horizons]
schedule = 10, 20, 40
[tolerances]
equivalence_cells = 3
[observables]
list = coordinate(0); bump(0.5,0.5;0.25)
[sensitivity]
tail = 5, 15
[output]
directory = out dir
)");
  EXPECT_EQ(cfg.system, "torus_flow");
  EXPECT_DOUBLE_EQ(cfg.params.at("alpha"), 0.25);
  const auto sys = cfg.make_system();
  const auto seeds = cfg.seeds(sys);
  ASSERT_EQ(seeds.size(), 5u);
  EXPECT_DOUBLE_EQ(seeds[1][1], 0.4);
  EXPECT_EQ(cfg.schedule, (std::vector<double>{10, 20, 40}));
  EXPECT_EQ(cfg.observables.size(), 2u);
  EXPECT_DOUBLE_EQ(cfg.tail_t1, 15.0);
  EXPECT_EQ(cfg.output_dir, "out dir");
  // Same seed, same sampled points.
  EXPECT_EQ(cfg.seeds(sys), seeds);
}

TEST(Config, StrictErrors) {
  EXPECT_NE(config_error("[grid]\nhh = 0.1\n").find("unknown key 'hh'"), std::string::npos);
  EXPECT_NE(config_error("[gird]\nh = 0.1\n").find("unknown section"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nh = 0.1\nh = 0.2\n").find("test.ini:3"), std::string::npos);
  EXPECT_NE(config_error("h = 0.1\n").find("outside"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nh = 0.1x\n").find("not a finite number"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nh = -1\n").find("grid.h"), std::string::npos);
  EXPECT_NE(config_error("[seeds]\nsampler = random:4\n").find("rng_seed is mandatory"), std::string::npos);
  EXPECT_NE(config_error("[tolerances]\naverage_tol = 0\n").find("positive"), std::string::npos);
  EXPECT_NE(config_error("[horizons]\nschedule = 20, 10\n").find("increasing"), std::string::npos);
  EXPECT_NE(config_error("[grid\nh = 1\n").find("malformed"), std::string::npos);
  config_error("[seeds]\nsampler = grid:4\nrng_seed = 1\n");
}

TEST(Config, UnknownSystemNamesRegistry) {
  auto cfg = parse("[system]\nname = duffing\n");
  try {
    cfg.make_system();
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is_config_error());
    EXPECT_NE(std::string(e.what()).find("lorenz"), std::string::npos);
  }
}

TEST(Config, SeedDimensionChecked) {
  auto cfg = parse("[system]\nname = lorenz\n[seeds]\npoints = 1,2\n");
  EXPECT_THROW(cfg.seeds(cfg.make_system()), Error);
}

TEST(Report, DoubleFormatting) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "\"inf\"");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "\"-inf\"");
  EXPECT_EQ(format_double(std::nan("")), "\"nan\"");
  for (double v : {M_PI, 1e-300, -2.5e17, 1.0 / 3.0}) EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
}

TEST(Report, ManifestAndPartialFlag) {
  const auto dir = scratch("report");
  Report r("demo", dir / "exp");
  r.results()["x"] = 1.0;
  r.write_series("series", {"t", "v"}, {{0.0, 1.0}, {0.5, 2.0}});
  auto j = r.to_json();
  EXPECT_EQ(j["schema_version"], report_schema_version);
  EXPECT_EQ(j["tool"]["version"], FLOWKIT_VERSION);
  EXPECT_EQ(j["artifacts"][0]["path"], "series.csv");
  EXPECT_FALSE(j["partial_artifacts"].get<bool>());
  EXPECT_EQ(slurp(dir / "exp" / "series.csv"), "t,v\n0,1\n0.5,2\n");
  r.mark_partial();
  EXPECT_TRUE(r.to_json()["partial_artifacts"].get<bool>());
  r.write();
  EXPECT_TRUE(fs::exists(dir / "exp" / "report.json"));
}

TEST(Cli, ClassifyCircle) {
  const auto dir = scratch("classify");
  auto r = run({"classify", "--system", "harmonic_oscillator", "--seed", "1,0", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(slurp(dir / "classify" / "report.json"));
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["config"]["system"]["name"], "harmonic_oscillator");
  EXPECT_EQ(j["results"]["states"][0]["kind"], "Cycle");
  EXPECT_NEAR(j["results"]["states"][0]["period"].get<double>(), 2 * M_PI, 1e-6);
  EXPECT_TRUE(fs::exists(dir / "classify" / "closure_0.csv"));
}

TEST(Cli, PartitionTorusWithSystemParameter) {
  const auto dir = scratch("partition");
  auto r = run({"partition", "--system", "torus_flow", "--alpha", "0.6180339887", "--seeds", "random:10", "--rng-seed",
                "3", "--horizons", "1250,2500,5000,10000", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(slurp(dir / "partition" / "report.json"));
  EXPECT_EQ(j["results"]["representatives"], 1);
  EXPECT_DOUBLE_EQ(j["config"]["system"]["params"]["alpha"].get<double>(), 0.6180339887);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const std::string out = scratch("errors").string();
  auto r = run({"classify", "--system", "duffing", "--seed", "1,0", "--out", out});
  EXPECT_EQ(r.code, cli::exit_config);
  EXPECT_NE(r.err.find("harmonic_oscillator"), std::string::npos);
  EXPECT_EQ(run({"classify", "--system", "torus_flow", "--beta", "2", "--seed", "1,0", "--out", out}).code,
            cli::exit_config);
  EXPECT_EQ(run({"frobnicate"}).code, cli::exit_config);
  EXPECT_EQ(run({"classify", "--out", out, "--seed"}).code, cli::exit_config);
  EXPECT_EQ(run({"partition", "--seeds", "random:3", "--out", out}).code, cli::exit_config);
  EXPECT_EQ(run({"classify", "--config", "/nonexistent/flowkit.ini", "--out", out}).code, cli::exit_config);
  EXPECT_EQ(run({"averages", "--seed", "1,0", "--out", out}).code, cli::exit_config);
  EXPECT_EQ(run({"reproduce", "99", "--out", out}).code, cli::exit_config);
}

TEST(Cli, NumericalFailureExitsThreeWithPartialReport) {
  const auto dir = scratch("diverge");
  auto r = run({"sensitivity", "--system", "linear_contraction", "--rate", "-1", "--seed", "1.5,0", "--out",
                dir.string()});
  EXPECT_EQ(r.code, cli::exit_numerical);
  const auto j = Json::parse(slurp(dir / "sensitivity" / "report.json"));
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["results"]["error"]["code"], "IntegrationDiverged");
  EXPECT_TRUE(j["partial_artifacts"].get<bool>());
}

TEST(Cli, ConfigFileAndFlagOverride) {
  const auto dir = scratch("ini");
  std::ofstream(dir / "c.ini") << "[system]\nname = harmonic_oscillator\n[seeds]\npoints = 0.5,0\n[grid]\nh = 0.1\n"
                                  "[observables]\nlist = coordinate_square(0)\n[horizons]\nschedule = 62.83185307179586, "
                                  "125.66370614359172\n";
  auto r = run({"averages", "--config", (dir / "c.ini").string(), "--h", "0.05", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(slurp(dir / "averages" / "report.json"));
  EXPECT_DOUBLE_EQ(j["config"]["grid"]["h"].get<double>(), 0.05);
  EXPECT_NEAR(j["results"]["states"][0]["observables"][0]["time_plain"].get<double>(), 0.125, 1e-6);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const auto dir = scratch("env");
  ::setenv("FLOWKIT_OUT", dir.string().c_str(), 1);
  auto r = run({"sensitivity", "--system", "harmonic_oscillator", "--seed", "1,0"});
  ::unsetenv("FLOWKIT_OUT");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "sensitivity" / "report.json"));
}

TEST(Cli, ReproduceIsByteIdentical) {
  const auto a = scratch("rep_a"), b = scratch("rep_b");
  ASSERT_EQ(run({"reproduce", "intersection-oracle", "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"reproduce", "4", "--out", b.string()}).code, 0);
  const auto ja = slurp(a / "intersection-oracle" / "report.json");
  EXPECT_FALSE(ja.empty());
  EXPECT_EQ(ja, slurp(b / "intersection-oracle" / "report.json"));
  EXPECT_TRUE(fs::exists(a / "intersection-oracle" / "timing.csv"));
  EXPECT_EQ(ja.find("seconds"), std::string::npos);
}

}  // namespace
}  // namespace flowkit
