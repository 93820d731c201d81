#include <gtest/gtest.h>

#include <filesystem>

#include "support/fixtures.hpp"

using namespace retarget;

namespace {

ErrorKind kind_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::kIo;
}

BenchmarkOptions quick_options() {
  BenchmarkOptions o;
  o.replications = 4;
  o.n = 120;
  o.base_seed = 7;
  o.regret_draws = 2000;
  return o;
}

const char* kNoiseless = R"(
[scenario clean]
d = 1
m = 2
covariates = uniform -1 1
propensity = logistic
propensity.1 = 0 1
mean.0 = 0
mean.1 = 0
mean.1.x1 = 1
noise_sd = 0
)";

}  // namespace

TEST(Generate, ZeroNoiseGivesTheMeans) {
  const SimulatedData sim = generate(fixtures::scenario(kNoiseless), 500, 3);
  for (Index i = 0; i < sim.data.size(); ++i)
    EXPECT_EQ(sim.data.outcome(i), sim.oracle.outcome_mean()(i, sim.data.action(i)));
}

TEST(Generate, ConstantPropensityArmFrequency) {
  const auto spec = fixtures::scenario(R"(
[scenario coin]
d = 2
m = 2
covariates = normal
propensity = constant 0.5 0.5
mean.0 = 0
mean.1 = 1
)");
  const Index n = 100000;
  const SimulatedData sim = generate(spec, n, 11);
  double treated = 0.0;
  for (Index i = 0; i < n; ++i) treated += sim.data.action(i);
  const double freq = treated / static_cast<double>(n);
  EXPECT_LT(std::abs(freq - 0.5), 3.0 * std::sqrt(0.25 / static_cast<double>(n))) << freq;
  EXPECT_EQ(sim.oracle.propensity()(5, 1), 0.5);
}

TEST(Generate, OracleMatchesTheScenario) {
  const auto spec = default_scenarios().front();
  const SimulatedData sim = generate(spec, 50, 2);
  for (Index i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = sim.data.covariates().row(i).transpose();
    EXPECT_EQ(sim.oracle.outcome_mean()(i, 1), spec.mean(1, x));
    EXPECT_NEAR(sim.oracle.propensity()(i, 1), 1.0 / (1.0 + std::exp(-4.0 * x(0))), 1e-15);
    EXPECT_EQ(sim.oracle.variance()(i, 0), 1.0);
  }
}

TEST(Generate, DeterministicInSeed) {
  const auto spec = default_scenarios()[1];
  EXPECT_TRUE(generate(spec, 200, 5).data == generate(spec, 200, 5).data);
  EXPECT_FALSE(generate(spec, 200, 5).data == generate(spec, 200, 6).data);
}

// ---------------------------------------------------------------------------
// Scenarios

TEST(Scenarios, ShippedFileMatchesBuiltIn) {
  const std::string path = std::string(RETARGET_SOURCE_DIR) + "/scenarios/default.ini";
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  const auto file = load_scenarios(path);
  const auto builtin = default_scenarios();
  ASSERT_EQ(file.size(), builtin.size());
  for (std::size_t k = 0; k < file.size(); ++k) {
    EXPECT_EQ(file[k].name, builtin[k].name);
    EXPECT_TRUE(generate(file[k], 300, 9).data == generate(builtin[k], 300, 9).data) << file[k].name;
    EXPECT_EQ(file[k].noise_sd, builtin[k].noise_sd);
  }
  EXPECT_EQ(builtin.size(), 3u);
  EXPECT_EQ(builtin[0].name, "S-A");
}

TEST(Scenarios, PerArmNoiseAndPolynomialMeans) {
  const auto spec = fixtures::scenario(R"(
[scenario poly]
d = 2
m = 3
covariates = uniform 0 2
propensity = logistic
propensity.1 = 0 1 0
propensity.2 = 0 0 1
mean.2 = 1
mean.2.x2 = 0 3
noise_sd = 0.1 0.2 0.3
)");
  EXPECT_EQ(spec.m, 3);
  EXPECT_EQ(spec.noise_sd, (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_DOUBLE_EQ(spec.mean(2, Eigen::Vector2d(5.0, 2.0)), 1.0 + 3.0 * 4.0);
  EXPECT_EQ(spec.mean(0, Eigen::Vector2d(5.0, 2.0)), 0.0);
}

TEST(Scenarios, Errors) {
  std::string msg;
  EXPECT_EQ(kind_of([] { parse_scenarios("d = 1\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\nd = 1\nfoo = 2\n"); }, &msg), ErrorKind::kParse);
  EXPECT_NE(msg.find("foo"), std::string::npos) << msg;
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\nmean.5 = 1\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\npropensity.1 = 1 2 3\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\nm = 1\n"); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\npropensity = constant 0.7 0.7\n"); }),
            ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { parse_scenarios("[scenario a]\nnoise_sd = -1\n"); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { parse_scenarios("# nothing\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { load_scenarios("/nonexistent/scenarios.ini"); }), ErrorKind::kIo);
}

// ---------------------------------------------------------------------------
// Benchmark

TEST(Benchmark, EighteenRowsInSchemeOrder) {
  const BenchmarkReport report = run_benchmark(default_scenarios(), default_schemes(), quick_options());
  ASSERT_EQ(report.rows.size(), 18u);
  EXPECT_EQ(report.rows[0].scenario, "S-A");
  EXPECT_EQ(report.rows[0].scheme, "uniform");
  EXPECT_EQ(report.rows[17].scenario, "S-C");
  for (const auto& row : report.rows) {
    EXPECT_GE(row.mean_regret, 0.0);
    EXPECT_TRUE(std::isfinite(row.std_regret));
    EXPECT_EQ(row.replications, 4);
    EXPECT_EQ(row.n, 120);
    EXPECT_EQ(row.seed, 7u);
  }
}

TEST(Benchmark, DeterministicAndThreadIndependent) {
  BenchmarkOptions opts = quick_options();
  const BenchmarkReport a = run_benchmark(default_scenarios(), default_schemes(), opts);
  const BenchmarkReport b = run_benchmark(default_scenarios(), default_schemes(), opts);
  opts.threads = 3;
  const BenchmarkReport c = run_benchmark(default_scenarios(), default_schemes(), opts);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
  EXPECT_EQ(render_report(a, ReportFormat::kCsv), render_report(c, ReportFormat::kCsv));
  EXPECT_EQ(a.regrets, c.regrets);
}

TEST(Benchmark, ReplicationsAreIndependentOfTheirCount) {
  BenchmarkOptions opts = quick_options();
  const BenchmarkReport four = run_benchmark(default_scenarios(), default_schemes(), opts);
  opts.replications = 2;
  const BenchmarkReport two = run_benchmark(default_scenarios(), default_schemes(), opts);
  for (std::size_t row = 0; row < two.regrets.size(); ++row)
    for (std::size_t r = 0; r < 2; ++r) EXPECT_EQ(two.regrets[row][r], four.regrets[row][r]);
}

TEST(Benchmark, NoiselessOracleHasNegligibleRegret) {
  BenchmarkOptions opts = quick_options();
  opts.oracle_nuisances = true;
  opts.n = 400;
  opts.regret_draws = 20000;
  const BenchmarkReport report = run_benchmark({fixtures::scenario(kNoiseless)},
                                               {{WeightKind::kUniform, 0.0}, {WeightKind::kRetargetedHomoskedastic, 0.0}},
                                               opts);
  // Only the gap between neighbouring sample points can be misclassified.
  for (const auto& row : report.rows) EXPECT_LT(row.mean_regret, 1e-4) << row.scheme;
}

TEST(Benchmark, RejectsMultiArmScenarios) {
  const auto spec = fixtures::scenario("[scenario three]\nm = 3\n");
  EXPECT_EQ(kind_of([&] { run_benchmark({spec}, default_schemes(), quick_options()); }), ErrorKind::kPrecondition);
}

// ---------------------------------------------------------------------------
// Rendering

TEST(Report, CellFormat) {
  EXPECT_EQ(format_cell(0.0333, 0.0601), "0.033 (0.060)");
  EXPECT_EQ(format_cell(0.0, 0.0123), "0.000 (0.012)");
  EXPECT_EQ(format_cell(0.5, std::numeric_limits<double>::quiet_NaN()), "0.500 (NA)");
}

TEST(Report, MarkdownTable) {
  const BenchmarkReport report = run_benchmark(default_scenarios(), default_schemes(), quick_options());
  const std::string md = render_report(report, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| Scenario | 1 | w0 | w0*D | w0*D^2 | w0*D^-1 | w0*D^-2 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| S-B |"), std::string::npos);
  EXPECT_NE(md.find("R = 4"), std::string::npos);
}

TEST(Report, CsvRoundTrip) {
  const BenchmarkReport report = run_benchmark(default_scenarios(), default_schemes(), quick_options());
  const BenchmarkReport back = parse_report_csv("# comment\n" + render_report(report, ReportFormat::kCsv));
  ASSERT_EQ(back.rows.size(), report.rows.size());
  for (std::size_t k = 0; k < back.rows.size(); ++k) {
    const auto& l = back.rows[k];
    const auto& r = report.rows[k];
    EXPECT_EQ(l.scenario, r.scenario);
    EXPECT_EQ(l.scheme, r.scheme);
    EXPECT_NEAR(l.mean_regret, r.mean_regret, 1e-6 * std::max(1e-12, std::abs(r.mean_regret)));
    EXPECT_NEAR(l.std_regret, r.std_regret, 1e-6 * std::max(1e-12, std::abs(r.std_regret)));
    EXPECT_EQ(l.replications, r.replications);
    EXPECT_EQ(l.seed, r.seed);
  }
  EXPECT_EQ(render_report(back, ReportFormat::kMarkdown), render_report(report, ReportFormat::kMarkdown));
}

TEST(Report, CsvErrors) {
  EXPECT_EQ(kind_of([] { parse_report_csv("a,b\n1,2\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse_report_csv("scenario,scheme,mean_regret,std_regret,R,n,seed\n"); }), ErrorKind::kParse);
  EXPECT_EQ(kind_of([] { parse_report_csv("scenario,scheme,mean_regret,std_regret,R,n,seed\nS,u,x,1,1,1,1\n"); }),
            ErrorKind::kParse);
}
