#pragma once

// Synthetic data generation and the replicated regret benchmark: for every
// (scenario, replication) draw data, cross-fit nuisances on two folds, build
// pseudo-outcomes, then for each weight scheme learn a linear policy and score
// its regret on the unweighted population.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "retarget/core_data.hpp"
#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"
#include "retarget/nuisance.hpp"
#include "retarget/policy_learning.hpp"
#include "retarget/pseudo_outcome.hpp"
#include "retarget/retargeting.hpp"
#include "retarget/scenario.hpp"

namespace retarget {

struct SimulatedData {
  Dataset data;
  /// True phi and mu, with variance noise_sd^2 (floored).
  NuisanceSet oracle;
};

inline SimulatedData generate(const ScenarioSpec& scenario, Index n, std::uint64_t seed) {
  scenario.validate();
  require(n >= 1, ErrorKind::kInvalidInput, "sample size must be >= 1");
  const int m = scenario.m;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd x(n, scenario.d), phi(n, m), mu(n, m), var(n, m);
  std::vector<int> actions(static_cast<std::size_t>(n));
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = scenario.covariates.draw(scenario.d, rng);
    x.row(i) = xi.transpose();
    phi.row(i) = scenario.propensity(xi).transpose();
    mu.row(i) = scenario.mean_vector(xi).transpose();
    const double u = unit(rng);
    int a = m - 1;
    double cumulative = 0.0;
    for (int k = 0; k < m; ++k) {
      cumulative += phi(i, k);
      if (u < cumulative) {
        a = k;
        break;
      }
    }
    actions[static_cast<std::size_t>(i)] = a;
    const double sd = scenario.noise_sd[static_cast<std::size_t>(a)];
    const double e = noise(rng);
    y(i) = mu(i, a) + (sd > 0.0 ? sd * e : 0.0);
    for (int k = 0; k < m; ++k) {
      const double s = scenario.noise_sd[static_cast<std::size_t>(k)];
      var(i, k) = std::max(kVarianceFloor, s * s);
    }
  }
  Dataset data(std::move(x), std::move(actions), std::move(y), m);
  NuisanceSet oracle(std::move(phi), std::move(mu), std::move(var), NuisanceProvenance::kOracle);
  return {std::move(data), std::move(oracle)};
}

// ---------------------------------------------------------------------------
// Benchmark

/// The six schemes of the regret table: 1, w0, w0*D, w0*D^2, w0*D^-1, w0*D^-2.
inline std::vector<WeightSpec> default_schemes() {
  return {{WeightKind::kUniform, 0.0},
          {WeightKind::kRetargetedHomoskedastic, 0.0},
          {WeightKind::kCurvatureScaled, 1.0},
          {WeightKind::kCurvatureScaled, 2.0},
          {WeightKind::kCurvatureScaled, -1.0},
          {WeightKind::kCurvatureScaled, -2.0}};
}

struct BenchmarkOptions {
  int replications = 100;
  Index n = 500;
  std::uint64_t base_seed = 0;
  int folds = 2;
  double ridge_lambda = 0.0;
  double propensity_clip = 0.01;
  VarianceMode variance_mode = VarianceMode::kPooled;
  double delta_floor = kDefaultDeltaFloor;
  /// Plug in the scenario's true phi and mu instead of cross-fitting.
  bool oracle_nuisances = false;
  Index regret_draws = 100000;
  unsigned threads = 1;
  LinearSearchOptions search;
};

struct BenchmarkRow {
  std::string scenario;
  std::string scheme;
  double mean_regret = 0.0;
  /// NaN when fewer than two replications.
  double std_regret = std::numeric_limits<double>::quiet_NaN();
  int replications = 0;
  Index n = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const BenchmarkRow& l, const BenchmarkRow& r) {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return l.scenario == r.scenario && l.scheme == r.scheme && same(l.mean_regret, r.mean_regret) &&
           same(l.std_regret, r.std_regret) && l.replications == r.replications && l.n == r.n && l.seed == r.seed;
  }
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  /// regrets[row][replication], kept for inspection.
  std::vector<std::vector<double>> regrets;

  friend bool operator==(const BenchmarkReport& l, const BenchmarkReport& r) { return l.rows == r.rows; }
};

namespace detail {

/// Neumaier-compensated sum, so aggregates do not depend on accumulation
/// rounding.
inline double compensated_sum(const std::vector<double>& values) {
  double sum = 0.0, carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

inline std::pair<double, double> mean_and_std(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double mean = compensated_sum(values) / n;
  if (values.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> sq;
  sq.reserve(values.size());
  for (double v : values) sq.push_back((v - mean) * (v - mean));
  return {mean, std::sqrt(compensated_sum(sq) / (n - 1.0))};
}

/// Derived stream seed so fold, regret and search randomness never reuse the
/// data-generation stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Regret of each scheme's learned policy for one (scenario, replication).
inline std::vector<double> run_replication(const ScenarioSpec& scenario, const std::vector<WeightSpec>& schemes,
                                           const BenchmarkOptions& options, std::uint64_t seed) {
  const SimulatedData sim = generate(scenario, options.n, seed);
  NuisanceConfig config;
  config.folds = options.folds;
  config.ridge_lambda = options.ridge_lambda;
  config.propensity_clip = options.propensity_clip;
  config.variance_mode = options.variance_mode;
  if (options.oracle_nuisances) config.oracle = sim.oracle;
  const FoldAssignment folds = make_folds(sim.data.size(), options.folds, mix_seed(seed, 1));
  const NuisanceSet nuis = cross_fit(sim.data, folds, config);
  const PseudoOutcomes pseudo = dr_pseudo_outcomes(sim.data, nuis);
  LinearSearchOptions search = options.search;
  search.seed = mix_seed(seed, 2);
  std::vector<double> out;
  for (const auto& spec : schemes) {
    try {
      const WeightScheme w = build_weights(spec, nuis, options.delta_floor);
      const LearnResult learned = learn_linear(w, pseudo, sim.data, search);
      out.push_back(true_regret(learned.best, scenario, options.regret_draws, mix_seed(seed, 3)).mean);
    } catch (const Error& e) {
      throw e.annotated("scheme " + spec.str());
    }
  }
  return out;
}

}  // namespace detail

/// Replication r of every scenario uses seed base_seed + r. The report is a
/// pure function of its arguments regardless of the thread count.
inline BenchmarkReport run_benchmark(const std::vector<ScenarioSpec>& scenarios, const std::vector<WeightSpec>& schemes,
                                     const BenchmarkOptions& options) {
  require(options.replications >= 1, ErrorKind::kInvalidInput, "need at least one replication");
  require(!scenarios.empty() && !schemes.empty(), ErrorKind::kInvalidInput, "need scenarios and schemes");
  for (const auto& s : scenarios) {
    s.validate();
    require(s.m == 2, ErrorKind::kPrecondition,
            "scenario '" + s.name + "': the benchmark learns linear-threshold policies and needs m = 2");
  }
  const auto reps = static_cast<std::size_t>(options.replications);
  const std::size_t jobs = scenarios.size() * reps;
  // results[scenario * reps + r][scheme]
  std::vector<std::vector<double>> results(jobs);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_job = jobs;

  auto worker = [&] {
    while (true) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      const auto& scenario = scenarios[job / reps];
      const std::size_t r = job % reps;
      try {
        try {
          results[job] = detail::run_replication(scenario, schemes, options, options.base_seed + r);
        } catch (const Error& e) {
          throw e.annotated("scenario " + scenario.name + ", replication " + std::to_string(r));
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (job < first_error_job) {
          first_error_job = job;
          first_error = std::current_exception();
        }
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(jobs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  BenchmarkReport report;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (std::size_t k = 0; k < schemes.size(); ++k) {
      std::vector<double> regrets;
      for (std::size_t r = 0; r < reps; ++r) regrets.push_back(results[s * reps + r][k]);
      const auto [mean, sd] = detail::mean_and_std(regrets);
      report.rows.push_back({scenarios[s].name, schemes[k].str(), mean, sd, options.replications, options.n,
                             options.base_seed});
      report.regrets.push_back(std::move(regrets));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { kCsv, kMarkdown };

/// "0.033 (0.060)": mean and standard deviation to three decimals.
inline std::string format_cell(double mean, double sd) {
  return detail::format_fixed(mean, 3) + " (" + (std::isnan(sd) ? std::string("NA") : detail::format_fixed(sd, 3)) + ")";
}

/// Column header used in the markdown table for a scheme string.
inline std::string scheme_label(const std::string& scheme) {
  if (scheme == "uniform") return "1";
  if (scheme == "w0") return "w0";
  if (scheme.rfind("w0_dp:", 0) == 0) {
    const std::string p = scheme.substr(6);
    return p == "1" ? "w0*D" : "w0*D^" + p;
  }
  return scheme;
}

inline std::string render_report(const BenchmarkReport& report, ReportFormat format) {
  require(!report.rows.empty(), ErrorKind::kInvalidInput, "cannot render an empty report");
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "scenario,scheme,mean_regret,std_regret,R,n,seed\n";
    for (const auto& row : report.rows) {
      out += row.scenario + "," + row.scheme + "," + detail::format_general(row.mean_regret, 10) + "," +
             (std::isnan(row.std_regret) ? std::string("NA") : detail::format_general(row.std_regret, 10)) + "," +
             std::to_string(row.replications) + "," + std::to_string(row.n) + "," + std::to_string(row.seed) + "\n";
    }
    return out;
  }
  std::vector<std::string> scenarios, schemes;
  std::map<std::pair<std::string, std::string>, const BenchmarkRow*> cells;
  for (const auto& row : report.rows) {
    if (std::find(scenarios.begin(), scenarios.end(), row.scenario) == scenarios.end()) scenarios.push_back(row.scenario);
    if (std::find(schemes.begin(), schemes.end(), row.scheme) == schemes.end()) schemes.push_back(row.scheme);
    cells[{row.scenario, row.scheme}] = &row;
  }
  out = "| Scenario |";
  for (const auto& s : schemes) out += " " + scheme_label(s) + " |";
  out += "\n|---|";
  for (std::size_t k = 0; k < schemes.size(); ++k) out += "---|";
  out += "\n";
  for (const auto& sc : scenarios) {
    out += "| " + sc + " |";
    for (const auto& s : schemes) {
      const auto it = cells.find({sc, s});
      out += " " + (it == cells.end() ? std::string("-") : format_cell(it->second->mean_regret, it->second->std_regret)) + " |";
    }
    out += "\n";
  }
  const auto& first = report.rows.front();
  out += "\nMean regret (standard deviation) over R = " + std::to_string(first.replications) +
         " replications, n = " + std::to_string(first.n) + ", base seed " + std::to_string(first.seed) +
         "; regret on the unweighted population.\n";
  return out;
}

/// Reads the CSV produced by render_report; lines starting with '#' are
/// skipped.
inline BenchmarkReport parse_report_csv(std::string_view text, const std::string& source = "<report>") {
  BenchmarkReport report;
  bool header_seen = false;
  const auto all = detail::lines(text);
  for (std::size_t li = 0; li < all.size(); ++li) {
    const auto line = detail::trim(all[li]);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      require(line == "scenario,scheme,mean_regret,std_regret,R,n,seed", ErrorKind::kParse,
              source + ": unexpected report header");
      header_seen = true;
      continue;
    }
    const auto cells = detail::split(line, ',');
    const std::string at = source + ": line " + std::to_string(li + 1);
    require(cells.size() == 7, ErrorKind::kParse, at + ": expected 7 fields");
    BenchmarkRow row;
    row.scenario = std::string(cells[0]);
    row.scheme = std::string(cells[1]);
    const auto mean = detail::parse_double(cells[2]);
    const auto sd = cells[3] == "NA" ? std::optional<double>(std::numeric_limits<double>::quiet_NaN())
                                     : detail::parse_double(cells[3]);
    const auto r = detail::parse_integer(cells[4]);
    const auto n = detail::parse_integer(cells[5]);
    const auto seed = detail::parse_integer(cells[6]);
    require(mean && sd && r && n && seed, ErrorKind::kParse, at + ": malformed numeric field");
    row.mean_regret = *mean;
    row.std_regret = *sd;
    row.replications = static_cast<int>(*r);
    row.n = static_cast<Index>(*n);
    row.seed = static_cast<std::uint64_t>(*seed);
    report.rows.push_back(std::move(row));
  }
  require(header_seen && !report.rows.empty(), ErrorKind::kParse, source + ": no report rows");
  return report;
}

}  // namespace retarget
