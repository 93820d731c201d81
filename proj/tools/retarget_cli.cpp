// retarget: command-line front end for the retargeted policy-learning library.
//
//   retarget simulate   regret benchmark over scenarios x weighting schemes
//   retarget fit        one of the causal regressions on a dataset
//   retarget learn      policy learning on a dataset
//   retarget report     re-render a benchmark CSV

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "retarget/retarget.hpp"

namespace {

using namespace retarget;

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitInvalidInput = 4,
  kExitParse = 5,
  kExitPrecondition = 6,
  kExitNumerical = 7,
  kExitIo = 8,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return kExitInvalidInput;
    case ErrorKind::kParse: return kExitParse;
    case ErrorKind::kPrecondition: return kExitPrecondition;
    case ErrorKind::kNumerical: return kExitNumerical;
    case ErrorKind::kIo: return kExitIo;
  }
  return kExitInternal;
}

int report_error(std::string_view tag, std::string_view message, int code, std::string_view hint = {}) {
  std::string line(message);
  for (char& c : line)
    if (c == '\n') c = ' ';
  std::cerr << "error[" << tag << "]: " << line << "\n";
  if (!hint.empty()) std::cerr << hint << "\n";
  return code;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Resolved run configuration, written at the top of every output.
class RunHeader {
 public:
  explicit RunHeader(std::string command) : command_(std::move(command)) {}

  // A flag-backed setting; also part of the replay line.
  void flag(const std::string& name, const std::string& value) { entries_.push_back({name, value, true}); }
  void toggle(const std::string& name, bool value) {
    entries_.push_back({name, value ? "true" : "false", true});
  }
  // Informational only (input digests and the like).
  void info(const std::string& name, const std::string& value) { entries_.push_back({name, value, false}); }

  void input_file(const std::string& name, const std::string& path, std::string_view contents) {
    flag(name, path);
    info(name + "-fnv1a64", hex(fnv1a(contents)));
  }

  std::vector<std::string> lines() const {
    std::vector<std::string> out{"retarget " + command_};
    std::string replay = "retarget " + command_;
    for (const auto& e : entries_) {
      out.push_back(e.name + " = " + e.value);
      if (!e.replay) continue;
      if (e.value == "false") continue;
      replay += " --" + e.name;
      if (e.value != "true") replay += " " + quote(e.value);
    }
    out.push_back("replay: " + replay);
    return out;
  }

  std::string render(ReportFormat format) const {
    std::string s;
    if (format == ReportFormat::kMarkdown) {
      s = "<!--\n";
      for (const auto& l : lines()) s += l + "\n";
      return s + "-->\n";
    }
    for (const auto& l : lines()) s += "# " + l + "\n";
    return s;
  }

 private:
  struct Entry {
    std::string name;
    std::string value;
    bool replay;
  };

  static std::string quote(const std::string& v) {
    if (!v.empty() && v.find_first_of(" \t'\"$;&|<>()*?") == std::string::npos) return v;
    std::string q = "'";
    for (char c : v) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
  }

  std::string command_;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// Options

struct SharedOptions {
  std::uint64_t seed = 0;
  std::optional<long long> threads;
  std::string out;
  int folds = 2;
  double ridge_lambda = 0.0;
  double propensity_clip = 0.01;
  std::string variance_mode = "pooled";
  double delta_floor = kDefaultDeltaFloor;
};

struct SimulateOptions {
  std::string scenarios = "default";
  int reps = 100;
  long long n = 500;
  std::string schemes = "uniform,w0,w0_dp:1,w0_dp:2,w0_dp:-1,w0_dp:-2";
  bool oracle_nuisances = false;
  std::string format = "csv";
  long long regret_draws = 100000;
  std::string emit_dataset;
  std::string emit_oracle;
  std::string scenario;
};

struct FitOptions {
  std::string data;
  std::string equation = "best_fit";
  int arm = 1;
  std::string mode = "ols";
  std::string features = "identity";
  bool no_intercept = false;
  std::string weights = "w0";
  std::string oracle_nuisances;
  std::string dump_psi;
};

struct LearnOptions {
  std::string data;
  std::string policy_class = "linear";
  std::string weights = "w0";
  std::string oracle_nuisances;
  double exact_budget = 2e8;
  bool force_approximate = false;
  int starts = 64;
};

struct ReportOptions {
  std::string in;
  std::string format = "markdown";
};

VarianceMode parse_variance_mode(const std::string& text) {
  if (text == "pooled") return VarianceMode::kPooled;
  if (text == "per_arm") return VarianceMode::kPerArm;
  fail(ErrorKind::kInvalidInput, "--variance-mode must be pooled or per_arm (got '" + text + "')");
}

ReportFormat parse_format(const std::string& text) {
  if (text == "csv") return ReportFormat::kCsv;
  if (text == "markdown") return ReportFormat::kMarkdown;
  fail(ErrorKind::kInvalidInput, "--format must be csv or markdown (got '" + text + "')");
}

unsigned resolve_threads(const std::optional<long long>& flag) {
  if (flag) {
    require(*flag >= 1, ErrorKind::kInvalidInput, "--threads must be >= 1");
    return static_cast<unsigned>(*flag);
  }
  if (const char* env = std::getenv("RETARGET_THREADS"); env != nullptr && *env != '\0') {
    const auto v = detail::parse_integer(env);
    require(v && *v >= 1, ErrorKind::kInvalidInput,
            "RETARGET_THREADS must be a positive integer (got '" + std::string(env) + "')");
    return static_cast<unsigned>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

NuisanceConfig nuisance_config(const SharedOptions& shared) {
  require(shared.folds >= 2, ErrorKind::kInvalidInput, "--folds must be >= 2");
  require(shared.ridge_lambda >= 0.0, ErrorKind::kInvalidInput, "--ridge-lambda must be >= 0");
  require(shared.propensity_clip > 0.0 && shared.propensity_clip < 0.5, ErrorKind::kInvalidInput,
          "--propensity-clip must lie in (0, 0.5)");
  NuisanceConfig config;
  config.folds = shared.folds;
  config.ridge_lambda = shared.ridge_lambda;
  config.propensity_clip = shared.propensity_clip;
  config.variance_mode = parse_variance_mode(shared.variance_mode);
  return config;
}

void add_nuisance_header(RunHeader& header, const SharedOptions& shared, bool oracle) {
  header.flag("seed", std::to_string(shared.seed));
  if (oracle) return;
  header.flag("folds", std::to_string(shared.folds));
  header.flag("ridge-lambda", detail::format_exact(shared.ridge_lambda));
  header.flag("propensity-clip", detail::format_exact(shared.propensity_clip));
  header.flag("variance-mode", shared.variance_mode);
}

// Cross-fitted nuisances, or the oracle file when one is given.
NuisanceSet resolve_nuisances(const Dataset& data, const SharedOptions& shared, const std::string& oracle_path,
                              RunHeader& header) {
  const NuisanceConfig config = nuisance_config(shared);
  if (!oracle_path.empty()) {
    const std::string text = detail::read_file(oracle_path);
    header.input_file("oracle-nuisances", oracle_path, text);
    header.flag("variance-mode", shared.variance_mode);
    return parse_oracle_nuisances(text, data, config.variance_mode, oracle_path);
  }
  const FoldAssignment folds = make_folds(data.size(), config.folds, detail::mix_seed(shared.seed, 1));
  return cross_fit(data, folds, config);
}

void emit(const SharedOptions& shared, const std::string& text) {
  if (shared.out.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    detail::write_file(shared.out, text);
  }
}

// ---------------------------------------------------------------------------
// Commands

int run_simulate(const SharedOptions& shared, const SimulateOptions& opt) {
  RunHeader header("simulate");
  std::vector<ScenarioSpec> scenarios;
  if (opt.scenarios == "default") {
    scenarios = default_scenarios();
    header.flag("scenarios", "default");
  } else {
    const std::string text = detail::read_file(opt.scenarios);
    header.input_file("scenarios", opt.scenarios, text);
    scenarios = parse_scenarios(text, opt.scenarios);
  }
  require(opt.n >= 2, ErrorKind::kInvalidInput, "--n must be >= 2");

  if (!opt.emit_dataset.empty()) {
    const ScenarioSpec* chosen = &scenarios.front();
    if (!opt.scenario.empty()) {
      chosen = nullptr;
      for (const auto& s : scenarios)
        if (s.name == opt.scenario) chosen = &s;
      require(chosen != nullptr, ErrorKind::kInvalidInput, "no scenario named '" + opt.scenario + "'");
    }
    const SimulatedData sim = generate(*chosen, static_cast<Index>(opt.n), shared.seed);
    write_dataset(opt.emit_dataset, sim.data);
    if (!opt.emit_oracle.empty()) detail::write_file(opt.emit_oracle, format_nuisances(sim.oracle));
    return kExitOk;
  }

  const ReportFormat format = parse_format(opt.format);
  std::vector<WeightSpec> schemes;
  for (auto tok : detail::split(opt.schemes, ',')) schemes.push_back(parse_weight_spec(tok));
  std::string scheme_list;
  for (const auto& s : schemes) scheme_list += (scheme_list.empty() ? "" : ",") + s.str();

  const NuisanceConfig config = nuisance_config(shared);
  BenchmarkOptions options;
  options.replications = opt.reps;
  options.n = static_cast<Index>(opt.n);
  options.base_seed = shared.seed;
  options.folds = config.folds;
  options.ridge_lambda = config.ridge_lambda;
  options.propensity_clip = config.propensity_clip;
  options.variance_mode = config.variance_mode;
  options.delta_floor = shared.delta_floor;
  options.oracle_nuisances = opt.oracle_nuisances;
  options.regret_draws = static_cast<Index>(opt.regret_draws);
  options.threads = resolve_threads(shared.threads);

  header.flag("schemes", scheme_list);
  header.flag("reps", std::to_string(opt.reps));
  header.flag("n", std::to_string(opt.n));
  header.flag("regret-draws", std::to_string(opt.regret_draws));
  header.flag("delta-floor", detail::format_exact(shared.delta_floor));
  header.toggle("oracle-nuisances", opt.oracle_nuisances);
  add_nuisance_header(header, shared, false);
  header.flag("format", opt.format);

  const BenchmarkReport report = run_benchmark(scenarios, schemes, options);
  emit(shared, header.render(format) + render_report(report, format));
  return kExitOk;
}

Equation parse_equation(const std::string& text) {
  if (text == "best_fit") return Equation::kBestFit;
  if (text == "on_arm") return Equation::kOnArmPrecision;
  if (text == "dv") return Equation::kDvOverlap;
  if (text == "cate") return Equation::kCate;
  fail(ErrorKind::kInvalidInput, "--equation must be best_fit, on_arm, dv or cate (got '" + text + "')");
}

OnArmMode parse_mode(const std::string& text) {
  if (text == "known") return OnArmMode::kKnownVariance;
  if (text == "ols") return OnArmMode::kOls;
  if (text == "irls") return OnArmMode::kIrls;
  fail(ErrorKind::kInvalidInput, "--mode must be known, ols or irls (got '" + text + "')");
}

int run_fit(const SharedOptions& shared, const FitOptions& opt) {
  RunHeader header("fit");
  const std::string text = detail::read_file(opt.data);
  header.input_file("data", opt.data, text);
  const Dataset data = parse_dataset(text, {}, opt.data);
  const Equation equation = parse_equation(opt.equation);
  const FeatureMap zmap = FeatureMap::parse(opt.features, !opt.no_intercept);
  const bool needs_two = equation == Equation::kDvOverlap || equation == Equation::kCate;
  require(!needs_two || data.num_actions() == 2, ErrorKind::kPrecondition,
          "equation " + opt.equation + " requires m = 2 actions; dataset has m = " +
              std::to_string(data.num_actions()));
  const bool uses_arm = equation != Equation::kCate;
  if (uses_arm)
    require(opt.arm >= 0 && opt.arm < data.num_actions(), ErrorKind::kInvalidInput,
            "--arm must lie in [0, " + std::to_string(data.num_actions()) + ")");
  const bool uses_weights = equation == Equation::kBestFit || equation == Equation::kCate;

  header.flag("equation", opt.equation);
  if (uses_arm) header.flag("arm", std::to_string(opt.arm));
  if (equation == Equation::kOnArmPrecision) header.flag("mode", opt.mode);
  header.flag("features", opt.features);
  header.toggle("no-intercept", opt.no_intercept);
  if (uses_weights) {
    header.flag("weights", parse_weight_spec(opt.weights).str());
    header.flag("delta-floor", detail::format_exact(shared.delta_floor));
  }
  add_nuisance_header(header, shared, !opt.oracle_nuisances.empty());
  const NuisanceSet nuis = resolve_nuisances(data, shared, opt.oracle_nuisances, header);

  const PseudoOutcomes pseudo = dr_pseudo_outcomes(data, nuis);
  if (!opt.dump_psi.empty()) detail::write_file(opt.dump_psi, format_pseudo_outcomes(pseudo));

  RegressionFit fit;
  switch (equation) {
    case Equation::kBestFit: {
      const WeightScheme w = build_weights(parse_weight_spec(opt.weights), nuis, shared.delta_floor);
      fit = fit_best_fit(pseudo.psi.col(opt.arm), w, zmap, data);
      break;
    }
    case Equation::kOnArmPrecision:
      fit = fit_on_arm_precision(data, nuis, opt.arm, zmap, parse_mode(opt.mode));
      break;
    case Equation::kDvOverlap:
      fit = fit_dv_overlap(data, nuis, opt.arm, zmap);
      break;
    case Equation::kCate: {
      const WeightScheme w = build_weights(parse_weight_spec(opt.weights), nuis, shared.delta_floor);
      fit = fit_cate(data, pseudo, w, zmap);
      break;
    }
  }

  std::string out = header.render(ReportFormat::kCsv) + "term,estimate\n";
  const auto terms = zmap.terms(data.dim());
  for (Index k = 0; k < fit.beta.size(); ++k)
    out += terms[static_cast<std::size_t>(k)] + "," + detail::format_exact(fit.beta(k)) + "\n";
  out += "# observations = " + std::to_string(fit.observations) + "\n";
  out += "# residual_norm = " + detail::format_exact(fit.residual_norm) + "\n";
  out += "# residual_tolerance = " + detail::format_exact(fit.residual_tolerance) + "\n";
  out += "# iterations = " + std::to_string(fit.iterations) + "\n";
  out += std::string("# converged = ") + (fit.converged ? "true" : "false") + "\n";
  emit(shared, out);
  return kExitOk;
}

int run_learn(const SharedOptions& shared, const LearnOptions& opt) {
  RunHeader header("learn");
  const std::string text = detail::read_file(opt.data);
  header.input_file("data", opt.data, text);
  const Dataset data = parse_dataset(text, {}, opt.data);

  PolicyClass policies;
  if (opt.policy_class == "linear") {
    policies = PolicyClass::linear(data.dim());
    header.flag("class", "linear");
  } else if (opt.policy_class.rfind("finite:", 0) == 0) {
    const std::string path = opt.policy_class.substr(7);
    const std::string class_text = detail::read_file(path);
    header.flag("class", opt.policy_class);
    header.info("class-fnv1a64", hex(fnv1a(class_text)));
    policies = parse_policy_class(class_text, path);
  } else {
    fail(ErrorKind::kInvalidInput, "--class must be linear or finite:<path> (got '" + opt.policy_class + "')");
  }
  const WeightSpec spec = parse_weight_spec(opt.weights);
  header.flag("weights", spec.str());
  header.flag("delta-floor", detail::format_exact(shared.delta_floor));
  const bool linear = policies.kind == PolicyClass::Kind::kLinear;
  if (linear) {
    header.flag("exact-budget", detail::format_exact(opt.exact_budget));
    header.toggle("force-approximate", opt.force_approximate);
    header.flag("starts", std::to_string(opt.starts));
  }
  add_nuisance_header(header, shared, !opt.oracle_nuisances.empty());
  const NuisanceSet nuis = resolve_nuisances(data, shared, opt.oracle_nuisances, header);
  const PseudoOutcomes pseudo = dr_pseudo_outcomes(data, nuis);
  const WeightScheme w = build_weights(spec, nuis, shared.delta_floor);

  LinearSearchOptions search;
  search.exact_budget = opt.exact_budget;
  search.force_approximate = opt.force_approximate;
  search.starts = opt.starts;
  search.seed = detail::mix_seed(shared.seed, 2);
  const LearnResult r = learn(policies, w, pseudo, data, search);
  const GapStatistics gaps = gap_statistics(nuis);

  auto yes_no = [](bool b) { return std::string(b ? "true" : "false"); };
  std::string out = header.render(ReportFormat::kCsv) + "field,value\n";
  out += "policy," + r.best.describe() + "\n";
  if (r.best_index) out += "policy_index," + std::to_string(*r.best_index) + "\n";
  out += "value," + detail::format_exact(r.best_value) + "\n";
  if (!linear) {
    out += "second_best_value," + detail::format_exact(r.second_best_value) + "\n";
    out += "gamma," + detail::format_exact(r.gamma) + "\n";
    out += "tie," + yes_no(r.tie) + "\n";
    out += "all_tied," + yes_no(r.all_tied) + "\n";
  } else {
    out += "approximate," + yes_no(r.approximate) + "\n";
    out += "candidates," + std::to_string(r.candidates) + "\n";
  }
  out += "omega_hat," + detail::format_exact(variance_proxy(w, nuis)) + "\n";
  out += "selection_ratio_times_delta," +
         detail::format_exact(selection_ratio(w, gaps, nuis, RatioDirection::kTimesDelta, shared.delta_floor)) + "\n";
  out += "selection_ratio_over_delta," +
         detail::format_exact(selection_ratio(w, gaps, nuis, RatioDirection::kOverDelta, shared.delta_floor)) + "\n";
  for (std::size_t k = 0; k < r.values.size(); ++k)
    out += "value." + std::to_string(k) + "," + detail::format_exact(r.values[k]) + "\n";
  emit(shared, out);
  return kExitOk;
}

int run_report(const SharedOptions& shared, const ReportOptions& opt) {
  RunHeader header("report");
  const std::string text = detail::read_file(opt.in);
  header.input_file("in", opt.in, text);
  header.flag("format", opt.format);
  const ReportFormat format = parse_format(opt.format);
  const BenchmarkReport report = parse_report_csv(text, opt.in);
  // Carry the producing run's header along.
  std::string source;
  for (auto line : detail::lines(text)) {
    line = detail::trim(line);
    if (!line.empty() && line.front() == '#') source += std::string(detail::trim(line.substr(1))) + "\n";
  }
  std::string out = header.render(format);
  if (!source.empty()) {
    if (format == ReportFormat::kMarkdown) {
      out += "<!-- source run\n" + source + "-->\n";
    } else {
      for (auto line : detail::lines(source)) out += "# source: " + std::string(line) + "\n";
    }
  }
  emit(shared, out + render_report(report, format));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retargeted policy learning: cross-fitted doubly-robust policy learning with overlap-based "
               "retargeting weights, causal regressions, and a regret benchmark.",
               "retarget"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Read option values from an INI/TOML file (keys are long flag names without "
                                 "the leading dashes, e.g. ridge-lambda; [simulate]/[fit]/[learn]/[report] sections for command flags). Flags "
                                 "given on the command line win.");
  app.footer("Exit codes: 0 ok, 1 internal, 2 usage, 3 config, 4 invalid_input, 5 parse, 6 precondition, "
             "7 numerical, 8 io.\nEnvironment: RETARGET_THREADS is the --threads fallback.");

  SharedOptions shared;
  app.add_option("--seed", shared.seed, "Base seed (simulate: replication r uses seed+r; fit/learn: folds and search)")
      ->capture_default_str();
  app.add_option("--threads", shared.threads,
                 "Worker threads for simulate (default: RETARGET_THREADS, else available parallelism)");
  app.add_option("--out", shared.out, "Write output here instead of stdout");
  app.add_option("--folds", shared.folds, "Cross-fitting folds")->capture_default_str();
  app.add_option("--ridge-lambda", shared.ridge_lambda, "Ridge penalty for the outcome regressions")
      ->capture_default_str();
  app.add_option("--propensity-clip", shared.propensity_clip, "Lower clip for fitted propensities")
      ->capture_default_str();
  app.add_option("--variance-mode", shared.variance_mode, "Residual variance estimate: pooled or per_arm")
      ->capture_default_str();
  app.add_option("--delta-floor", shared.delta_floor, "Floor applied to the local action gap in curvature weights")
      ->capture_default_str();

  const std::string shared_note = "Shared options (--seed, --out, --folds, ...) are listed by `retarget --help`.";

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run the regret benchmark (scenarios x weighting schemes)");
  simulate->footer(shared_note);
  simulate->add_option("--scenarios", sim.scenarios, "'default' or a scenario file")->capture_default_str();
  simulate->add_option("--reps", sim.reps, "Replications per scenario")->capture_default_str();
  simulate->add_option("--n", sim.n, "Sample size per replication")->capture_default_str();
  simulate->add_option("--schemes", sim.schemes, "Comma-separated weight schemes (uniform, w0, w0_dp:<p>)")
      ->capture_default_str();
  simulate->add_flag("--oracle-nuisances", sim.oracle_nuisances, "Use the true propensity and mean instead of cross-fitting");
  simulate->add_option("--format", sim.format, "csv or markdown")->capture_default_str();
  simulate->add_option("--regret-draws", sim.regret_draws, "Monte Carlo draws for each true-regret evaluation")
      ->capture_default_str();
  simulate->add_option("--emit-dataset", sim.emit_dataset,
                       "Write one simulated dataset (size --n, seed --seed) here instead of benchmarking");
  simulate->add_option("--emit-oracle", sim.emit_oracle, "With --emit-dataset: also write its true nuisances");
  simulate->add_option("--scenario", sim.scenario, "With --emit-dataset: scenario name (default: the first)");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a causal regression on a dataset");
  fit_cmd->footer(shared_note);
  fit_cmd->add_option("--data", fit.data, "Dataset CSV (columns x1..xd, a, y)")->required();
  fit_cmd->add_option("--equation", fit.equation, "best_fit, on_arm, dv or cate")->capture_default_str();
  fit_cmd->add_option("--arm", fit.arm, "Arm for best_fit, on_arm and dv")->capture_default_str();
  fit_cmd->add_option("--mode", fit.mode, "on_arm weighting: known, ols or irls")->capture_default_str();
  fit_cmd->add_option("--features", fit.features, "identity, subset:<idx-list> or poly:<deg>")->capture_default_str();
  fit_cmd->add_flag("--no-intercept", fit.no_intercept, "Drop the constant feature");
  fit_cmd->add_option("--weights", fit.weights, "Weight scheme for best_fit and cate")->capture_default_str();
  fit_cmd->add_option("--oracle-nuisances", fit.oracle_nuisances, "CSV of phi*, mu* (and var*) columns to use instead of cross-fitting");
  fit_cmd->add_option("--dump-psi", fit.dump_psi, "Also write the pseudo-outcomes here");

  LearnOptions lrn;
  auto* learn_cmd = app.add_subcommand("learn", "Learn a policy on a dataset");
  learn_cmd->footer(shared_note);
  learn_cmd->add_option("--data", lrn.data, "Dataset CSV (columns x1..xd, a, y)")->required();
  learn_cmd->add_option("--class", lrn.policy_class, "linear, or finite:<policy file>")->capture_default_str();
  learn_cmd->add_option("--weights", lrn.weights, "uniform, w0 or w0_dp:<p>")->capture_default_str();
  learn_cmd->add_option("--oracle-nuisances", lrn.oracle_nuisances, "CSV of phi*, mu* (and var*) columns to use instead of cross-fitting");
  learn_cmd->add_option("--exact-budget", lrn.exact_budget, "Operation budget for exact linear enumeration")
      ->capture_default_str();
  learn_cmd->add_flag("--force-approximate", lrn.force_approximate, "Skip exact enumeration for linear classes");
  learn_cmd->add_option("--starts", lrn.starts, "Random starts for the approximate linear search")
      ->capture_default_str();

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Render a benchmark CSV as a table");
  report_cmd->footer(shared_note);
  report_cmd->add_option("--in", rep.in, "Benchmark CSV written by simulate")->required();
  report_cmd->add_option("--format", rep.format, "markdown or csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ConfigError& e) {
    return report_error("config", e.what(), kExitConfig);
  } catch (const CLI::FileError& e) {
    return report_error("config", e.what(), kExitConfig);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kExitUsage, "Run 'retarget --help' for usage.");
  }

  try {
    if (*simulate) return run_simulate(shared, sim);
    if (*fit_cmd) return run_fit(shared, fit);
    if (*learn_cmd) return run_learn(shared, lrn);
    return run_report(shared, rep);
  } catch (const Error& e) {
    return report_error(error_kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitInternal);
  }
}
