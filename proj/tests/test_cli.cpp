#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("retarget_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the CLI from the scratch directory; `env` is prefixed verbatim.
  CliRun run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + RETARGET_CLI + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  void write_dataset(const std::string& name, const retarget::Dataset& d) const {
    retarget::write_dataset((dir_ / name).string(), d);
  }

  fs::path dir_;
};

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

const char* kQuickSim = "simulate --reps 10 --seed 7 --n 100 --regret-draws 2000 --format csv";

}  // namespace

TEST_F(Cli, HelpListsFlagsAndExitCodes) {
  const CliRun r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--seed", "--threads", "--out", "--folds", "--ridge-lambda", "--propensity-clip",
                           "--variance-mode", "--delta-floor", "--config", "simulate", "fit", "learn", "report"})
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  EXPECT_NE(r.out.find("Exit codes"), std::string::npos);
  const CliRun sub = run("simulate --help");
  EXPECT_EQ(sub.code, 0);
  EXPECT_NE(sub.out.find("--reps"), std::string::npos);
}

TEST_F(Cli, SimulateWritesEighteenRowsWithProvenanceHeader) {
  const CliRun r = run(kQuickSim);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = data_lines(r.out);
  ASSERT_EQ(lines.size(), 19u) << r.out;
  EXPECT_EQ(lines[0], "scenario,scheme,mean_regret,std_regret,R,n,seed");
  EXPECT_NE(r.out.find("# seed = 7"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("# replay: retarget simulate"), std::string::npos);
  // Report rows carry the base seed too.
  EXPECT_NE(lines[1].find(",10,100,7"), std::string::npos) << lines[1];
}

TEST_F(Cli, SimulateIsIndependentOfThreadCount) {
  const CliRun one = run(kQuickSim, "RETARGET_THREADS=1");
  const CliRun three = run(std::string(kQuickSim) + " --threads 3");
  ASSERT_EQ(one.code, 0) << one.err;
  ASSERT_EQ(three.code, 0) << three.err;
  EXPECT_EQ(one.out, three.out);
}

TEST_F(Cli, ReportRendersSavedCsv) {
  ASSERT_EQ(run(std::string(kQuickSim) + " --out bench.csv").code, 0);
  const CliRun r = run("report --in bench.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| Scenario | 1 | w0 |"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("| S-A |"), std::string::npos);
  EXPECT_NE(r.out.find("seed = 7"), std::string::npos) << r.out;
}

TEST_F(Cli, FitPrintsCoefficientsAndEquationResidual) {
  write_dataset("d.csv", fixtures::random_dataset(120, 2, 2, 4));
  const CliRun r = run("fit --data d.csv --equation best_fit --weights uniform --dump-psi psi.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("term,estimate\n1,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\nx2,"), std::string::npos);
  EXPECT_NE(r.out.find("# converged = true"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir_ / "psi.csv").substr(0, 10), "psi0,psi1\n");
  for (const char* mode : {"known", "ols", "irls"})
    EXPECT_EQ(run(std::string("fit --data d.csv --equation on_arm --arm 0 --mode ") + mode).code, 0) << mode;
  EXPECT_EQ(run("fit --data d.csv --equation cate --features poly:2").code, 0);
}

TEST_F(Cli, OverlapFitOnThreeArmsNamesTheRequirement) {
  write_dataset("m3.csv", fixtures::random_dataset(90, 1, 3, 2));
  const CliRun r = run("fit --data m3.csv --equation dv");
  EXPECT_EQ(r.code, 6);
  EXPECT_NE(r.err.find("m = 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("error[precondition]"), std::string::npos) << r.err;
}

TEST_F(Cli, LearnIsByteIdenticalAcrossRuns) {
  write_dataset("d.csv", fixtures::random_dataset(80, 2, 2, 6));
  const CliRun a = run("learn --data d.csv --seed 3 --out a.txt");
  const CliRun b = run("learn --data d.csv --seed 3 --out b.txt");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string text = slurp(dir_ / "a.txt");
  EXPECT_EQ(text, slurp(dir_ / "b.txt"));
  EXPECT_NE(text.find("field,value\npolicy,threshold"), std::string::npos) << text;
}

TEST_F(Cli, LearnFiniteClassReportsGap) {
  write_dataset("d.csv", fixtures::random_dataset(80, 1, 2, 8));
  write("pol.txt", "constant 0\nconstant 1\nthreshold 0 1\n");
  const CliRun r = run("learn --data d.csv --class finite:pol.txt --weights uniform");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\ngamma,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\npolicy_index,"), std::string::npos);
  EXPECT_NE(r.out.find("\ntie,"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithCommandLineOverride) {
  write_dataset("d.csv", fixtures::random_dataset(60, 1, 2, 9));
  write("run.ini", "seed = 5\nridge-lambda = 0.5\n[learn]\nweights = uniform\n");
  const CliRun cfg = run("--config run.ini learn --data d.csv");
  ASSERT_EQ(cfg.code, 0) << cfg.err;
  EXPECT_NE(cfg.out.find("# seed = 5"), std::string::npos) << cfg.out;
  EXPECT_NE(cfg.out.find("# weights = uniform"), std::string::npos);
  EXPECT_NE(cfg.out.find("# ridge-lambda = 0.5"), std::string::npos);
  const CliRun flag = run("--config run.ini learn --data d.csv --seed 9");
  ASSERT_EQ(flag.code, 0) << flag.err;
  EXPECT_NE(flag.out.find("# seed = 9"), std::string::npos) << flag.out;
}

TEST_F(Cli, ExitCodes) {
  write_dataset("d.csv", fixtures::random_dataset(60, 1, 2, 1));
  write("bad.csv", "x1,a,y\n0,0,1\n1,1,oops\n");
  write("unknown.ini", "ripple = 1\n");
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("simulate --no-such-flag").code, 2);
  EXPECT_EQ(run("fit").code, 2);
  EXPECT_EQ(run("--config missing.ini learn --data d.csv").code, 3);
  EXPECT_EQ(run("--config unknown.ini learn --data d.csv").code, 3);
  EXPECT_EQ(run("learn --data d.csv --variance-mode sometimes").code, 4);
  EXPECT_EQ(run("simulate --reps 1 --n 50", "RETARGET_THREADS=zero").code, 4);
  EXPECT_EQ(run("learn --data bad.csv").code, 5);
  EXPECT_EQ(run("learn --data missing.csv").code, 8);
  const CliRun err = run("learn --data missing.csv");
  EXPECT_EQ(err.err.rfind("error[io]", 0), 0u) << err.err;
}
