#pragma once

// Synthetic data-generating processes and their key-value file format.
//
//   [scenario S-A]
//   d = 1
//   m = 2
//   covariates = uniform -1 1          # or: normal
//   propensity = logistic              # or: constant 0.5 0.5
//   propensity.1 = 0 3                 # log-odds of arm 1 vs arm 0 on [1, x]
//   mean.0 = 0                         # intercept of mu(0|x)
//   mean.1 = 0.2
//   mean.1.x1 = 1 0.5                  # coefficients on x1, x1^2, ...
//   noise_sd = 1                       # one value, or one per arm

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"

namespace retarget {

struct CovariateLaw {
  enum class Kind { kUniformBox, kStandardNormal };
  Kind kind = Kind::kUniformBox;
  double lower = -1.0;
  double upper = 1.0;

  template <class Rng>
  Eigen::VectorXd draw(Eigen::Index d, Rng& rng) const {
    Eigen::VectorXd x(d);
    if (kind == Kind::kUniformBox) {
      std::uniform_real_distribution<double> u(lower, upper);
      for (Eigen::Index j = 0; j < d; ++j) x(j) = u(rng);
    } else {
      std::normal_distribution<double> z(0.0, 1.0);
      for (Eigen::Index j = 0; j < d; ++j) x(j) = z(rng);
    }
    return x;
  }
};

struct PropensityFunction {
  enum class Kind { kConstant, kLogistic };
  Kind kind = Kind::kConstant;
  Eigen::VectorXd constant;      // m probabilities
  Eigen::MatrixXd coefficients;  // m x (d + 1); row 0 is the reference (zeros)

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    if (kind == Kind::kConstant) return constant;
    Eigen::VectorXd z(x.size() + 1);
    z(0) = 1.0;
    z.tail(x.size()) = x;
    const Eigen::VectorXd eta = coefficients * z;
    const Eigen::ArrayXd e = (eta.array() - eta.maxCoeff()).exp();
    return (e / e.sum()).matrix();
  }
};

/// intercept + sum_j sum_k powers[j][k] * x_j^(k+1).
struct PolynomialMean {
  double intercept = 0.0;
  std::vector<std::vector<double>> powers;  // indexed by covariate

  double operator()(const Eigen::VectorXd& x) const {
    double value = intercept;
    for (std::size_t j = 0; j < powers.size(); ++j) {
      double xp = 1.0;
      for (double c : powers[j]) {
        xp *= x(static_cast<Eigen::Index>(j));
        value += c * xp;
      }
    }
    return value;
  }
};

struct ScenarioSpec {
  std::string name;
  int d = 1;
  int m = 2;
  CovariateLaw covariates;
  PropensityFunction propensity;
  std::vector<PolynomialMean> means;
  std::vector<double> noise_sd;

  double mean(int a, const Eigen::VectorXd& x) const { return means[static_cast<std::size_t>(a)](x); }

  Eigen::VectorXd mean_vector(const Eigen::VectorXd& x) const {
    Eigen::VectorXd mu(m);
    for (int a = 0; a < m; ++a) mu(a) = mean(a, x);
    return mu;
  }

  void validate() const {
    const std::string where = "scenario '" + name + "'";
    require(d >= 1, ErrorKind::kInvalidInput, where + ": d must be >= 1");
    require(m >= 2, ErrorKind::kInvalidInput, where + ": m must be >= 2");
    require(static_cast<int>(means.size()) == m, ErrorKind::kInvalidInput,
            where + ": needs one mean function per arm");
    for (const auto& mean_fn : means)
      require(static_cast<int>(mean_fn.powers.size()) <= d, ErrorKind::kInvalidInput,
              where + ": mean polynomial references a coordinate beyond d");
    require(static_cast<int>(noise_sd.size()) == m, ErrorKind::kInvalidInput,
            where + ": needs one noise level per arm");
    for (double s : noise_sd)
      require(s >= 0.0 && std::isfinite(s), ErrorKind::kInvalidInput, where + ": noise_sd must be >= 0");
    if (covariates.kind == CovariateLaw::Kind::kUniformBox)
      require(covariates.lower < covariates.upper, ErrorKind::kInvalidInput,
              where + ": uniform box needs lower < upper");
    if (propensity.kind == PropensityFunction::Kind::kConstant) {
      require(propensity.constant.size() == m, ErrorKind::kInvalidInput,
              where + ": constant propensity needs m probabilities");
      require((propensity.constant.array() > 0.0).all() &&
                  std::abs(propensity.constant.sum() - 1.0) <= 1e-12,
              ErrorKind::kInvalidInput, where + ": constant propensity must be a positive simplex vector");
    } else {
      require(propensity.coefficients.rows() == m && propensity.coefficients.cols() == d + 1,
              ErrorKind::kInvalidInput, where + ": logistic propensity needs m x (d + 1) coefficients");
      require(propensity.coefficients.allFinite(), ErrorKind::kInvalidInput,
              where + ": non-finite propensity coefficient");
    }
  }
};

namespace detail {

inline std::vector<double> parse_numbers(std::string_view value, const std::string& where) {
  std::vector<double> out;
  for (auto tok : tokens(value)) {
    const auto v = parse_double(tok);
    if (!v || !std::isfinite(*v)) fail(ErrorKind::kParse, where + ": bad number '" + std::string(tok) + "'");
    out.push_back(*v);
  }
  return out;
}

struct PendingScenario {
  ScenarioSpec spec;
  std::vector<std::pair<std::string, std::string>> entries;
  int line = 0;
};

inline ScenarioSpec finish_scenario(PendingScenario& pending, const std::string& source) {
  ScenarioSpec& s = pending.spec;
  const std::string where = source + ": scenario '" + s.name + "'";
  auto integer = [&](const std::string& key, const std::string& value) {
    const auto v = parse_integer(value);
    if (!v) fail(ErrorKind::kParse, where + ": '" + key + "' must be an integer");
    return static_cast<int>(*v);
  };
  // Dimensions first, then everything that depends on them.
  for (const auto& [key, value] : pending.entries) {
    if (key == "d") s.d = integer(key, value);
    if (key == "m") s.m = integer(key, value);
  }
  require(s.d >= 1 && s.m >= 2, ErrorKind::kInvalidInput, where + ": need d >= 1 and m >= 2");
  s.means.assign(static_cast<std::size_t>(s.m), PolynomialMean{});
  s.noise_sd.assign(static_cast<std::size_t>(s.m), 1.0);
  s.propensity.coefficients = Eigen::MatrixXd::Zero(s.m, s.d + 1);
  s.propensity.constant = Eigen::VectorXd::Constant(s.m, 1.0 / s.m);

  auto arm_of = [&](std::string_view text, const std::string& key) {
    const auto a = parse_integer(text);
    if (!a || *a < 0 || *a >= s.m) fail(ErrorKind::kParse, where + ": bad arm in key '" + key + "'");
    return static_cast<int>(*a);
  };

  for (const auto& [key, value] : pending.entries) {
    const std::string at = where + ", key '" + key + "'";
    if (key == "d" || key == "m") continue;
    if (key == "covariates") {
      const auto toks = tokens(value);
      if (toks.empty()) fail(ErrorKind::kParse, at + ": missing law");
      if (toks[0] == "uniform") {
        const auto bounds = parse_numbers(value.substr(value.find("uniform") + 7), at);
        if (bounds.size() != 2) fail(ErrorKind::kParse, at + ": uniform needs <lower> <upper>");
        s.covariates = {CovariateLaw::Kind::kUniformBox, bounds[0], bounds[1]};
      } else if (toks[0] == "normal") {
        s.covariates = {CovariateLaw::Kind::kStandardNormal, 0.0, 0.0};
      } else {
        fail(ErrorKind::kParse, at + ": unknown covariate law '" + std::string(toks[0]) + "'");
      }
    } else if (key == "propensity") {
      const auto toks = tokens(value);
      if (toks.empty()) fail(ErrorKind::kParse, at + ": missing propensity kind");
      if (toks[0] == "logistic") {
        s.propensity.kind = PropensityFunction::Kind::kLogistic;
      } else if (toks[0] == "constant") {
        const auto probs = parse_numbers(value.substr(value.find("constant") + 8), at);
        s.propensity.kind = PropensityFunction::Kind::kConstant;
        s.propensity.constant = Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(probs.size()));
      } else {
        fail(ErrorKind::kParse, at + ": unknown propensity kind '" + std::string(toks[0]) + "'");
      }
    } else if (key.rfind("propensity.", 0) == 0) {
      const int a = arm_of(std::string_view(key).substr(11), key);
      require(a >= 1, ErrorKind::kParse, at + ": arm 0 is the reference and has no coefficients");
      const auto coef = parse_numbers(value, at);
      if (static_cast<int>(coef.size()) != s.d + 1)
        fail(ErrorKind::kParse, at + ": expected " + std::to_string(s.d + 1) + " coefficients");
      for (int j = 0; j <= s.d; ++j) s.propensity.coefficients(a, j) = coef[static_cast<std::size_t>(j)];
    } else if (key.rfind("mean.", 0) == 0) {
      const std::string_view rest = std::string_view(key).substr(5);
      const auto dot = rest.find('.');
      const int a = arm_of(rest.substr(0, dot), key);
      auto& mean_fn = s.means[static_cast<std::size_t>(a)];
      if (dot == std::string_view::npos) {
        const auto v = parse_numbers(value, at);
        if (v.size() != 1) fail(ErrorKind::kParse, at + ": expected a single intercept");
        mean_fn.intercept = v[0];
      } else {
        const auto coord = rest.substr(dot + 1);
        const auto j = coord.size() > 1 && coord[0] == 'x' ? parse_integer(coord.substr(1)) : std::nullopt;
        if (!j || *j < 1 || *j > s.d) fail(ErrorKind::kParse, at + ": bad coordinate");
        if (mean_fn.powers.size() < static_cast<std::size_t>(*j)) mean_fn.powers.resize(static_cast<std::size_t>(*j));
        mean_fn.powers[static_cast<std::size_t>(*j - 1)] = parse_numbers(value, at);
      }
    } else if (key == "noise_sd") {
      const auto v = parse_numbers(value, at);
      if (v.size() == 1) {
        s.noise_sd.assign(static_cast<std::size_t>(s.m), v[0]);
      } else if (static_cast<int>(v.size()) == s.m) {
        s.noise_sd = v;
      } else {
        fail(ErrorKind::kParse, at + ": expected 1 or m values");
      }
    } else {
      fail(ErrorKind::kParse, at + ": unknown key");
    }
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw e.annotated(source);
  }
  return s;
}

}  // namespace detail

inline std::vector<ScenarioSpec> parse_scenarios(std::string_view text, const std::string& source = "<scenarios>") {
  std::vector<ScenarioSpec> out;
  std::vector<detail::PendingScenario> pending;
  const auto all = detail::lines(text);
  for (std::size_t li = 0; li < all.size(); ++li) {
    auto line = all[li];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string at = source + ": line " + std::to_string(li + 1);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::kParse, at + ": unterminated section header");
      const auto inner = detail::trim(line.substr(1, line.size() - 2));
      if (inner.substr(0, 8) != "scenario") fail(ErrorKind::kParse, at + ": expected [scenario <name>]");
      const auto name = detail::trim(inner.substr(8));
      if (name.empty()) fail(ErrorKind::kParse, at + ": scenario needs a name");
      pending.push_back({});
      pending.back().spec.name = std::string(name);
      pending.back().line = static_cast<int>(li + 1);
      continue;
    }
    if (pending.empty()) fail(ErrorKind::kParse, at + ": key outside a [scenario] section");
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::kParse, at + ": expected key = value");
    pending.back().entries.emplace_back(std::string(detail::trim(line.substr(0, eq))),
                                        std::string(detail::trim(line.substr(eq + 1))));
  }
  for (auto& p : pending) out.push_back(detail::finish_scenario(p, source));
  require(!out.empty(), ErrorKind::kParse, source + ": no scenarios defined");
  return out;
}

inline std::vector<ScenarioSpec> load_scenarios(const std::string& path) {
  return parse_scenarios(detail::read_file(path), path);
}

/// The three shipped benchmark scenarios.
///   S-A: decision boundary inside the strong-overlap region, weak overlap at
///        the edges; retargeting should help.
///   S-B: quadratic effect the threshold class cannot represent; under the
///        retargeting weights two thresholds have nearly equal value while the
///        unweighted objective clearly prefers one, so uniform weights should
///        do better.
///   S-C: moderate overlap everywhere; neutral.
inline constexpr std::string_view kDefaultScenarios = R"(# Shipped benchmark scenarios.
[scenario S-A]
d = 1
m = 2
covariates = uniform -1 1
propensity = logistic
propensity.1 = 0 4
mean.0 = 0
mean.1 = 0
mean.1.x1 = 0.5
noise_sd = 1

[scenario S-B]
d = 1
m = 2
covariates = uniform -1 1
propensity = logistic
propensity.1 = 1 3
mean.0 = 0
mean.1 = -0.2
mean.1.x1 = 0.3 1
noise_sd = 0.5

[scenario S-C]
d = 1
m = 2
covariates = uniform -1 1
propensity = logistic
propensity.1 = 0 1
mean.0 = 0
mean.1 = -0.1
mean.1.x1 = 0.5
noise_sd = 0.5
)";

inline std::vector<ScenarioSpec> default_scenarios() { return parse_scenarios(kDefaultScenarios, "default"); }

}  // namespace retarget
