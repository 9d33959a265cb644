#include <fracctl/config.hpp>
#include <fracctl/csv.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(FRACCTL_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fracctl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, MissingConfigFails) {
  const auto dir = scratch("missing");
  EXPECT_NE(run("solve --config " + (dir / "nope.json").string() + " --out " + dir.string()), 0);
}

TEST(Cli, UnknownKeyIsConfigError) {
  const auto dir = scratch("badkey");
  write(dir / "c.json", R"({"grid": {"stepz": 3}})");
  EXPECT_EQ(run("solve --config " + (dir / "c.json").string() + " --out " + dir.string()), 2);
}

TEST(Cli, SolveWritesStateAndMeta) {
  const auto dir = scratch("solve");
  write(dir / "c.json", R"({"grid": {"steps": 16}})");
  ASSERT_EQ(run("solve --config " + (dir / "c.json").string() + " --out " + dir.string()), 0);
  const fracctl::Mat y = fracctl::csv::read_nodal_file((dir / "state.csv").string());
  EXPECT_EQ(y.rows(), 2);
  EXPECT_EQ(y.cols(), 17);
  const auto meta = nlohmann::json::parse(slurp(dir / "state_meta.json"));
  EXPECT_EQ(meta["steps"], 16);
}

TEST(Cli, OptimizeThenCertifyRoundTrip) {
  const auto dir = scratch("roundtrip");
  const auto cert = scratch("roundtrip_cert");
  write(dir / "c.json", R"({"certify": {"samples": 50}})");
  const std::string cfg = (dir / "c.json").string();
  ASSERT_EQ(run("optimize --config " + cfg + " --out " + dir.string() + " --threads 2"), 0);
  for (const char* f : {"a.csv", "ell.csv", "history.csv", "state.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(run("certify --config " + cfg + " --controls " + dir.string() + " --out " + cert.string()), 0);
  const auto rep = nlohmann::json::parse(slurp(cert / "report.json"));
  EXPECT_TRUE(rep["passed"].get<bool>());
}

TEST(Cli, CertifyFailsOnZeroControls) {
  const auto dir = scratch("zero");
  write(dir / "c.json", R"({"grid": {"steps": 32}, "certify": {"samples": 20}})");
  fracctl::Config c = fracctl::load_config((dir / "c.json").string());
  const fracctl::TimeGrid g = c.grid();
  {
    std::ofstream a(dir / "a.csv"), l(dir / "ell.csv");
    fracctl::csv::write_nodal(a, g, fracctl::Mat::Zero(4, g.nodes()), "a");
    fracctl::csv::write_nodal(l, g, fracctl::Mat::Zero(2, g.nodes()), "ell");
  }
  EXPECT_EQ(run("certify --config " + (dir / "c.json").string() + " --controls " + dir.string() +
                " --out " + dir.string()),
            4);
}

TEST(Cli, DeterministicOutputs) {
  const auto d1 = scratch("det1");
  const auto d2 = scratch("det2");
  write(d1 / "c.json", R"({"grid": {"steps": 32}, "homotopy": {"stages": 4}, "certify": {"samples": 20}})");
  const std::string cfg = (d1 / "c.json").string();
  // four stages stop at eps = 1/8, so the certificate may legitimately fail (exit 4)
  const int c1 = run("optimize --config " + cfg + " --out " + d1.string() + " --seed 5");
  const int c2 = run("optimize --config " + cfg + " --out " + d2.string() + " --seed 5");
  ASSERT_TRUE(c1 == 0 || c1 == 4) << c1;
  EXPECT_EQ(c1, c2);
  for (const char* f : {"a.csv", "ell.csv", "history.csv", "state.csv", "report.json"}) {
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
}

TEST(Cli, ConvergenceStudy) {
  const auto dir = scratch("conv");
  ASSERT_EQ(run("convergence --out " + dir.string()), 0);
  const auto s = nlohmann::json::parse(slurp(dir / "convergence_summary.json"));
  EXPECT_GE(s["fitted_order"].get<double>(), s["required_order"].get<double>());
  EXPECT_NE(slurp(dir / "convergence.csv").find("1024,"), std::string::npos);
}

TEST(Cli, EnvironmentOverride) {
  const auto dir = scratch("env");
  const std::string cmd = "FRACCTL_GRID_STEPS=8 " + std::string(FRACCTL_BINARY) + " solve --out " +
                          dir.string() + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(fracctl::csv::read_nodal_file((dir / "state.csv").string()).cols(), 9);
}
