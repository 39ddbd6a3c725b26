#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("liad_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args, const std::string& env = "") const {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" LIAD_CLI_PATH "' " + args +
                            " > stdout.txt 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ShotsAtUnitMeanGivesInverseE) {
  ASSERT_EQ(run("shots --lambda 1 --p 1 --out-dir o").code, 0);
  const auto j = json::parse(slurp(dir_ / "o/shots.json"));
  EXPECT_NEAR(j["p_single"].get<double>(), std::exp(-1.0), 1e-15);
  EXPECT_TRUE(fs::exists(dir_ / "o/shots.manifest.json"));
  EXPECT_NE(slurp(dir_ / "stdout.txt").find("P_single=0.36787944117144233"), std::string::npos);
}

TEST_F(Cli, TrajectoryTraceIsReproducible) {
  ASSERT_EQ(run("trajectory --seed 7 --trace --out-dir a").code, 0);
  ASSERT_EQ(run("trajectory --seed 7 --trace --out-dir b").code, 0);
  const auto a = slurp(dir_ / "a/trace.csv");
  EXPECT_GT(a.size(), 100u);
  EXPECT_EQ(a, slurp(dir_ / "b/trace.csv"));
  EXPECT_EQ(slurp(dir_ / "a/outcomes.csv"), slurp(dir_ / "b/outcomes.csv"));
  ASSERT_EQ(run("trajectory --seed 8 --trace --out-dir c").code, 0);
  EXPECT_NE(a, slurp(dir_ / "c/trace.csv"));
}

TEST_F(Cli, ManifestCarriesWhatIsNeededToRerun) {
  write("c.yaml", "gas: {pressure_mbar: 0.5}\n");
  ASSERT_EQ(run("trajectory --config c.yaml --seed 11 --out-dir o").code, 0);
  const auto m = json::parse(slurp(dir_ / "o/trajectory.manifest.json"));
  EXPECT_EQ(m["seed"], 11u);
  EXPECT_EQ(m["version"], LIAD_VERSION);
  EXPECT_EQ(m["config"]["gas"]["pressure_mbar"], 0.5);
  EXPECT_EQ(m["config"]["sim"]["seed"], 11u);
  EXPECT_TRUE(m.contains("wall_time_s"));
  ASSERT_EQ(m["artifacts"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir_ / m["artifacts"][0].get<std::string>()));
}

TEST_F(Cli, SweepBytesIndependentOfWorkers) {
  const std::string common = "sweep --param pressure --grid 0.5:2:log:3 --events 40 --seed 3 ";
  ASSERT_EQ(run(common + "--workers 1 --out-dir w1").code, 0);
  ASSERT_EQ(run(common + "--workers 3 --out-dir w3").code, 0);
  EXPECT_EQ(slurp(dir_ / "w1/sweep.csv"), slurp(dir_ / "w3/sweep.csv"));
  EXPECT_EQ(slurp(dir_ / "w1/sweep.json"), slurp(dir_ / "w3/sweep.json"));
  const auto j = json::parse(slurp(dir_ / "w1/sweep.json"));
  EXPECT_EQ(j["points"].size(), 3u);
  EXPECT_EQ(j["points"][2]["value"], 2.0);
}

TEST_F(Cli, FormatSelectsOneTable) {
  ASSERT_EQ(run("sweep --param power --grid 0.1,0.2 --events 5 --format csv --out-dir o").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "o/sweep.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "o/sweep.json"));
}

TEST_F(Cli, OutputDirFromEnvironment) {
  ASSERT_EQ(run("shots --lambda 2 --p 0.5", "LIAD_OUT_DIR=from_env").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "from_env/shots.json"));
  ASSERT_EQ(run("shots --lambda 2 --p 0.5 --out-dir flag", "LIAD_OUT_DIR=from_env").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "flag/shots.json"));
}

TEST_F(Cli, HoldTraceFeedsSpectrum) {
  write("c.yaml", "gas: {pressure_mbar: 1}\n");
  ASSERT_EQ(run("trajectory --config c.yaml --hold 0.05 --out-dir o").code, 0);
  ASSERT_EQ(run("psd --config c.yaml --input o/trace.csv --out-dir o").code, 0);
  const auto fit = json::parse(slurp(dir_ / "o/fit.json"));
  EXPECT_NEAR(fit["f0_hz"].get<double>() / fit["expected_f0_hz"].get<double>(), 1.0, 0.1);
  EXPECT_TRUE(fs::exists(dir_ / "o/psd.csv"));
}

TEST_F(Cli, VelocityFromLowPressureOutcomes) {
  write("c.yaml", "gas: {pressure_mbar: 2.5e-7}\nlaunch: {kind: delta, speed_mps: 8}\n");
  ASSERT_EQ(run("trajectory --config c.yaml --events 20 --out-dir o").code, 0);
  ASSERT_EQ(run("velocity --config c.yaml --input o/outcomes.csv --out-dir o").code, 0);
  EXPECT_NE(slurp(dir_ / "stdout.txt").find("20 arrivals, median 8.0"), std::string::npos)
      << slurp(dir_ / "stdout.txt");
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("launch").code, 2);
  EXPECT_EQ(run("shots --lambda 1").code, 2);
  EXPECT_EQ(run("shots --lambda 1 --p 1 --bogus").code, 2);
  EXPECT_EQ(run("shots --lambda x --p 1").code, 2);
  EXPECT_EQ(run("sweep --param temperature --grid 1,2").code, 2);
  EXPECT_EQ(run("sweep --param pressure --grid 1:2:cubic:3").code, 2);
  EXPECT_EQ(run("sweep --param pressure --grid 2,1,3").code, 2);
  EXPECT_EQ(run("sweep --param pressure --grid=-1,1").code, 2);
  EXPECT_EQ(run("psd --input missing.csv").code, 2);
  EXPECT_EQ(run("shots --lambda 1 --p 1 --format xml").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, ConfigErrorsExitTwoWithKeyPath) {
  write("bad.yaml", "gas:\n  pressure_mbar: -1\n");
  const auto r = run("trajectory --config bad.yaml");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("gas.pressure_mbar"), std::string::npos) << r.err;
  write("unknown.yaml", "trap: {waist: 6e-6}\n");
  EXPECT_EQ(run("trajectory --config unknown.yaml").code, 2);
  write("broken.yaml", "trap: [\n");
  EXPECT_EQ(run("trajectory --config broken.yaml").code, 2);
}

TEST_F(Cli, RuntimeFailuresExitOne) {
  write("bad.csv", "t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps\n0,0,0,0,0,0\n");
  EXPECT_EQ(run("psd --input bad.csv").code, 1);
  write("none.csv", "event,kind,arrival_time_s,capture_time_s,site_index,site_intensity_fraction,final_energy_J\n");
  EXPECT_EQ(run("velocity --input none.csv").code, 1);
}
