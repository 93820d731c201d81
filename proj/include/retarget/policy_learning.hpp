#pragma once

// Maximisation of the w-weighted doubly-robust value
//   V_n(pi; w) = (1/n) sum_i w_i psi(i, pi(x_i))
// over a finite policy list or over linear-threshold policies, plus the value
// gap between best and second-best policies and the true population regret.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "retarget/core_data.hpp"
#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"
#include "retarget/pseudo_outcome.hpp"
#include "retarget/retargeting.hpp"
#include "retarget/scenario.hpp"

namespace retarget {

/// A total map x -> action.
class Policy {
 public:
  enum class Kind { kConstant, kThreshold, kArgmax };

  static Policy constant(int action) {
    require(action >= 0, ErrorKind::kInvalidInput, "constant policy needs a nonnegative action");
    Policy p(Kind::kConstant);
    p.action_ = action;
    return p;
  }

  /// Binary policy: action 1 iff theta'[1, x] > 0.
  static Policy threshold(Eigen::VectorXd theta) {
    require(theta.size() >= 1 && theta.allFinite(), ErrorKind::kInvalidInput, "threshold policy needs finite theta");
    Policy p(Kind::kThreshold);
    p.coefficients_ = std::move(theta).transpose();
    return p;
  }

  /// Row a of `scores` scores arm a on [1, x]; the highest score wins, ties go
  /// to the lowest arm.
  static Policy argmax(Eigen::MatrixXd scores) {
    require(scores.rows() >= 2 && scores.allFinite(), ErrorKind::kInvalidInput,
            "argmax policy needs finite scores for at least two arms");
    Policy p(Kind::kArgmax);
    p.coefficients_ = std::move(scores);
    return p;
  }

  Kind kind() const { return kind_; }
  Eigen::VectorXd theta() const { return coefficients_.row(0).transpose(); }
  const Eigen::MatrixXd& coefficients() const { return coefficients_; }

  /// Largest action the policy can emit plus one.
  int min_actions() const {
    switch (kind_) {
      case Kind::kConstant: return action_ + 1;
      case Kind::kThreshold: return 2;
      case Kind::kArgmax: return static_cast<int>(coefficients_.rows());
    }
    return 0;
  }

  /// Covariate dimension the policy expects, or -1 for constants.
  Index dim() const { return kind_ == Kind::kConstant ? -1 : coefficients_.cols() - 1; }

  template <class Derived>
  int act(const Eigen::MatrixBase<Derived>& x) const {
    switch (kind_) {
      case Kind::kConstant: return action_;
      case Kind::kThreshold: {
        double s = coefficients_(0, 0);
        for (Index j = 0; j < x.size(); ++j) s += coefficients_(0, j + 1) * x(j);
        return s > 0.0 ? 1 : 0;
      }
      case Kind::kArgmax: {
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (Index a = 0; a < coefficients_.rows(); ++a) {
          double s = coefficients_(a, 0);
          for (Index j = 0; j < x.size(); ++j) s += coefficients_(a, j + 1) * x(j);
          if (s > best_score) {
            best_score = s;
            best = static_cast<int>(a);
          }
        }
        return best;
      }
    }
    return 0;
  }

  std::vector<int> act_all(const Eigen::MatrixXd& x) const {
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = act(x.row(i));
    return out;
  }

  std::string describe() const {
    auto row_text = [&](Index r) {
      std::string s;
      for (Index j = 0; j < coefficients_.cols(); ++j)
        s += (j ? " " : "") + detail::format_exact(coefficients_(r, j));
      return s;
    };
    switch (kind_) {
      case Kind::kConstant: return "constant " + std::to_string(action_);
      case Kind::kThreshold: return "threshold " + row_text(0);
      case Kind::kArgmax: {
        std::string s = "argmax";
        for (Index r = 0; r < coefficients_.rows(); ++r) s += (r ? " ; " : " ") + row_text(r);
        return s;
      }
    }
    return "?";
  }

 private:
  explicit Policy(Kind kind) : kind_(kind) {}

  Kind kind_;
  int action_ = 0;
  Eigen::MatrixXd coefficients_;
};

/// Either an explicit list of policies or all linear-threshold policies in d
/// covariates.
struct PolicyClass {
  enum class Kind { kFinite, kLinear };
  Kind kind = Kind::kFinite;
  std::vector<Policy> policies;
  Index dim = 0;

  static PolicyClass finite(std::vector<Policy> policies) {
    require(!policies.empty(), ErrorKind::kInvalidInput, "finite policy class is empty");
    return {Kind::kFinite, std::move(policies), 0};
  }
  static PolicyClass linear(Index d) { return {Kind::kLinear, {}, d}; }

  std::size_t size() const { return policies.size(); }
};

/// One policy per line:
///   constant <a>
///   threshold <t0> <t1> ... <td>
///   argmax <row 0> ; <row 1> ; ...
/// A bare list of numbers is read as a threshold theta. '#' starts a comment.
inline PolicyClass parse_policy_class(std::string_view text, const std::string& source = "<policies>") {
  std::vector<Policy> policies;
  const auto all = detail::lines(text);
  for (std::size_t li = 0; li < all.size(); ++li) {
    auto line = all[li];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string at = source + ": line " + std::to_string(li + 1);
    auto numbers = [&](std::string_view s) {
      std::vector<double> v;
      for (auto tok : detail::tokens(s)) {
        const auto x = detail::parse_double(tok);
        if (!x) fail(ErrorKind::kParse, at + ": bad number '" + std::string(tok) + "'");
        v.push_back(*x);
      }
      return v;
    };
    const auto toks = detail::tokens(line);
    const auto word = toks.front();
    try {
      if (word == "constant") {
        const auto a = toks.size() == 2 ? detail::parse_integer(toks[1]) : std::nullopt;
        if (!a) fail(ErrorKind::kParse, at + ": expected 'constant <action>'");
        policies.push_back(Policy::constant(static_cast<int>(*a)));
      } else if (word == "argmax") {
        std::vector<std::vector<double>> rows;
        for (auto part : detail::split(line.substr(6), ';')) rows.push_back(numbers(part));
        for (const auto& r : rows)
          if (r.size() != rows.front().size() || r.empty())
            fail(ErrorKind::kParse, at + ": argmax rows must have equal, nonzero length");
        Eigen::MatrixXd scores(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t c = 0; c < rows[r].size(); ++c) scores(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        policies.push_back(Policy::argmax(std::move(scores)));
      } else {
        const auto v = numbers(word == "threshold" ? line.substr(9) : line);
        if (v.empty()) fail(ErrorKind::kParse, at + ": empty threshold");
        policies.push_back(Policy::threshold(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()))));
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kParse) throw;
      throw e.annotated(at);
    }
  }
  return PolicyClass::finite(std::move(policies));
}

inline PolicyClass load_policy_class(const std::string& path) {
  return parse_policy_class(detail::read_file(path), path);
}

struct LearnResult {
  Policy best = Policy::constant(0);
  std::optional<std::size_t> best_index;  // finite classes
  double best_value = 0.0;
  /// Best value outside the argmax set (equals best_value when all tie).
  double second_best_value = 0.0;
  /// best_value - second_best_value; finite classes only.
  double gamma = 0.0;
  /// More than one policy attains best_value (finite classes).
  bool tie = false;
  /// Every policy attains best_value, so gamma is 0 by convention.
  bool all_tied = false;
  /// Linear search fell back to the heuristic path.
  bool approximate = false;
  std::vector<double> values;
  std::size_t candidates = 0;
};

namespace detail {

inline void check_learning_inputs(const WeightScheme& w, const PseudoOutcomes& pseudo, const Dataset& data) {
  require(w.size() == data.size() && pseudo.size() == data.size(), ErrorKind::kInvalidInput,
          "weights, pseudo-outcomes and dataset differ in length");
  require(pseudo.num_actions() == data.num_actions(), ErrorKind::kInvalidInput,
          "pseudo-outcomes and dataset disagree on m");
}

/// Value of a labelling given as an action per row. Summation runs in row
/// order so equal labellings always produce identical bits.
inline double labelling_value(const std::vector<int>& actions, const Eigen::VectorXd& w,
                              const Eigen::MatrixXd& psi) {
  double total = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto r = static_cast<Index>(i);
    total += w(r) * psi(r, actions[i]);
  }
  return total / static_cast<double>(actions.size());
}

}  // namespace detail

inline double weighted_value(const Policy& pi, const WeightScheme& w, const PseudoOutcomes& pseudo,
                             const Dataset& data) {
  detail::check_learning_inputs(w, pseudo, data);
  require(pi.min_actions() <= data.num_actions(), ErrorKind::kInvalidInput,
          "policy emits actions beyond m = " + std::to_string(data.num_actions()));
  require(pi.dim() < 0 || pi.dim() == data.dim(), ErrorKind::kInvalidInput,
          "policy expects d = " + std::to_string(pi.dim()) + " but data has d = " + std::to_string(data.dim()));
  return detail::labelling_value(pi.act_all(data.covariates()), w.weights(), pseudo.psi);
}

/// Best index (lowest on ties), gap to the best value outside the argmax set,
/// and tie flags, from a vector of policy values.
inline LearnResult select_best(std::vector<double> values) {
  require(!values.empty(), ErrorKind::kInvalidInput, "no policy values to select from");
  LearnResult r;
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  const double top = values[best];
  std::size_t at_top = 0;
  std::optional<double> runner_up;
  for (double v : values) {
    if (v == top) {
      ++at_top;
    } else if (!runner_up || v > *runner_up) {
      runner_up = v;
    }
  }
  r.best_index = best;
  r.best_value = top;
  r.second_best_value = runner_up.value_or(top);
  r.gamma = top - r.second_best_value;
  r.tie = at_top > 1;
  r.all_tied = !runner_up.has_value();
  r.candidates = values.size();
  r.values = std::move(values);
  return r;
}

/// Exhaustive search over a finite class.
inline LearnResult learn_finite(const PolicyClass& policies, const WeightScheme& w, const PseudoOutcomes& pseudo,
                                const Dataset& data) {
  require(policies.kind == PolicyClass::Kind::kFinite && !policies.policies.empty(), ErrorKind::kInvalidInput,
          "learn_finite needs a nonempty finite policy class");
  std::vector<double> values;
  values.reserve(policies.size());
  for (const auto& pi : policies.policies) values.push_back(weighted_value(pi, w, pseudo, data));
  LearnResult r = select_best(std::move(values));
  r.best = policies.policies[*r.best_index];
  return r;
}

// ---------------------------------------------------------------------------
// Linear-threshold policies

struct LinearSearchOptions {
  /// Exact enumeration runs when d <= 4 and C(n, d) * 2^(d+1) * n stays
  /// below this many operations.
  double exact_budget = 2e8;
  bool force_approximate = false;
  std::uint64_t seed = 0;
  int starts = 64;
  int refine_rounds = 30;
};

namespace detail {

/// Candidate search state over labellings encoded by theta. Values compare via
/// gain sums; final values are recomputed with labelling_value.
class LinearSearch {
 public:
  LinearSearch(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::MatrixXd& psi)
      : z_(with_intercept(x)), gain_(w.cwiseProduct(psi.col(1) - psi.col(0))) {}

  double gain_of(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd s = z_ * theta;
    double total = 0.0;
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > 0.0) total += gain_(i);
    return total;
  }

  void offer(Eigen::VectorXd theta) {
    const double norm = theta.norm();
    if (!(norm > 0.0) || !theta.allFinite()) return;
    theta /= norm;
    ++candidates_;
    const double g = gain_of(theta);
    if (!best_theta_ || g > best_gain_ || (g == best_gain_ && lexicographically_less(theta, *best_theta_))) {
      best_gain_ = g;
      best_theta_ = std::move(theta);
    }
  }

  const Eigen::MatrixXd& design() const { return z_; }
  const Eigen::VectorXd& gain() const { return gain_; }
  const Eigen::VectorXd& best_theta() const { return *best_theta_; }
  double best_gain() const { return best_gain_; }
  std::size_t candidates() const { return candidates_; }

 private:
  static bool lexicographically_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (Index j = 0; j < a.size(); ++j) {
      if (a(j) < b(j)) return true;
      if (a(j) > b(j)) return false;
    }
    return false;
  }

  Eigen::MatrixXd z_;
  Eigen::VectorXd gain_;
  std::optional<Eigen::VectorXd> best_theta_;
  double best_gain_ = -std::numeric_limits<double>::infinity();
  std::size_t candidates_ = 0;
};

inline double binomial(Index n, Index k) {
  double c = 1.0;
  for (Index j = 1; j <= k; ++j) c = c * static_cast<double>(n - k + j) / static_cast<double>(j);
  return c;
}

/// Every hyperplane through d affinely independent sample points, then every
/// small perturbation that puts those d points on either side, in both
/// orientations. This reaches every labelling a linear threshold can realise
/// on points in general position.
inline void enumerate_hyperplanes(LinearSearch& search) {
  const Eigen::MatrixXd& z = search.design();
  const Index n = z.rows();
  const Index p = z.cols();
  const Index d = p - 1;
  std::vector<Index> pick(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) pick[static_cast<std::size_t>(j)] = j;
  Eigen::MatrixXd a(d, p);
  const Index patterns = Index{1} << d;
  while (true) {
    for (Index j = 0; j < d; ++j) a.row(j) = z.row(pick[static_cast<std::size_t>(j)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    lu.setThreshold(1e-12);
    if (lu.rank() == d) {
      const Eigen::VectorXd normal = lu.kernel().col(0);
      const Eigen::VectorXd margin = z * normal;
      const double scale = margin.cwiseAbs().maxCoeff();
      double min_off = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) {
        const double m = std::abs(margin(i));
        if (m > 1e-12 * std::max(scale, 1.0)) min_off = std::min(min_off, m);
      }
      const Eigen::MatrixXd pinv = a.transpose() * (a * a.transpose()).inverse();
      for (Index s = 0; s < patterns; ++s) {
        Eigen::VectorXd signs(d);
        for (Index j = 0; j < d; ++j) signs(j) = (s >> j) & 1 ? 1.0 : -1.0;
        const Eigen::VectorXd delta = pinv * signs;
        const double reach = (z * delta).cwiseAbs().maxCoeff();
        const double t = std::isfinite(min_off) && reach > 0.0 ? 0.5 * min_off / reach : 1.0;
        search.offer(normal + t * delta);
        search.offer(-normal + t * delta);
      }
    }
    // Next d-combination of {0..n-1}.
    Index j = d - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == n - d + j) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (Index k = j + 1; k < d; ++k) pick[static_cast<std::size_t>(k)] = pick[static_cast<std::size_t>(k - 1)] + 1;
  }
}

struct SweepResult {
  double gain = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd theta;
};

/// Best threshold along a fixed direction u (both orientations), found by
/// sorting the projections and sweeping all n + 1 cut points.
inline SweepResult sweep_direction(const LinearSearch& search, const Eigen::VectorXd& u) {
  const Eigen::MatrixXd& z = search.design();
  const Eigen::VectorXd& gain = search.gain();
  const Index n = z.rows();
  const Eigen::VectorXd proj = z.rightCols(z.cols() - 1) * u;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index l, Index r) { return proj(l) < proj(r); });
  // Orientation +1 treats rows above the cut, orientation -1 rows below it.
  double above = gain.sum();
  double below = 0.0;
  SweepResult best;
  auto consider = [&](double g, double cut, double orientation) {
    if (g > best.gain) {
      best.gain = g;
      best.theta.resize(z.cols());
      best.theta(0) = -orientation * cut;
      best.theta.tail(u.size()) = orientation * u;
    }
  };
  consider(above, proj(order[0]) - 1.0, 1.0);
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<std::size_t>(k)];
    above -= gain(i);
    below += gain(i);
    if (k + 1 < n && proj(order[static_cast<std::size_t>(k + 1)]) == proj(i)) continue;
    const double cut = k + 1 < n ? 0.5 * (proj(i) + proj(order[static_cast<std::size_t>(k + 1)])) : proj(i) + 1.0;
    consider(above, cut, 1.0);
    consider(below, cut, -1.0);
  }
  return best;
}

inline void heuristic_search(LinearSearch& search, Index d, const LinearSearchOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int start = 0; start < options.starts; ++start) {
    Eigen::VectorXd u(d);
    if (start < d) {
      u.setZero();
      u(start) = 1.0;
    } else {
      for (Index j = 0; j < d; ++j) u(j) = normal(rng);
    }
    if (u.norm() == 0.0) continue;
    u.normalize();
    SweepResult best = sweep_direction(search, u);
    double step = 0.5;
    for (int round = 0; round < options.refine_rounds; ++round) {
      bool improved = false;
      for (Index j = 0; j < d; ++j) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd trial = u;
          trial(j) += sign * step;
          if (trial.norm() == 0.0) continue;
          trial.normalize();
          SweepResult probe = sweep_direction(search, trial);
          if (probe.gain > best.gain) {
            best = std::move(probe);
            u = trial;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    search.offer(best.theta);
  }
}

}  // namespace detail

/// Best linear-threshold policy pi(x) = 1{theta'[1, x] > 0} for m = 2. Exact by
/// hyperplane enumeration when the problem is small enough, otherwise a seeded
/// multi-start direction search (flagged approximate). Ties prefer the
/// lexicographically smallest unit-norm theta.
inline LearnResult learn_linear(const WeightScheme& w, const PseudoOutcomes& pseudo, const Dataset& data,
                                const LinearSearchOptions& options = {}) {
  require(data.num_actions() == 2, ErrorKind::kPrecondition,
          "linear-threshold policies require m = 2 actions (got m = " + std::to_string(data.num_actions()) + ")");
  detail::check_learning_inputs(w, pseudo, data);
  const Index n = data.size();
  const Index d = data.dim();
  detail::LinearSearch search(data.covariates(), w.weights(), pseudo.psi);

  Eigen::VectorXd treat_all = Eigen::VectorXd::Zero(d + 1), treat_none = Eigen::VectorXd::Zero(d + 1);
  treat_all(0) = 1.0;
  treat_none(0) = -1.0;
  search.offer(treat_all);
  search.offer(treat_none);

  const double cost = detail::binomial(n, d) * static_cast<double>(Index{2} << d) * static_cast<double>(n);
  const bool exact = !options.force_approximate && d >= 1 && d <= 4 && n > d && cost <= options.exact_budget;
  if (exact) {
    detail::enumerate_hyperplanes(search);
  } else if (d >= 1) {
    detail::heuristic_search(search, d, options);
  }

  LearnResult r;
  r.best = Policy::threshold(search.best_theta());
  r.best_value = weighted_value(r.best, w, pseudo, data);
  r.second_best_value = r.best_value;
  r.approximate = !exact;
  r.candidates = search.candidates();
  return r;
}

inline LearnResult learn(const PolicyClass& policies, const WeightScheme& w, const PseudoOutcomes& pseudo,
                         const Dataset& data, const LinearSearchOptions& options = {}) {
  if (policies.kind == PolicyClass::Kind::kFinite) return learn_finite(policies, w, pseudo, data);
  return learn_linear(w, pseudo, data, options);
}

// ---------------------------------------------------------------------------
// True regret

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// E[max_a mu(a|X) - mu(pi(X)|X)] over n_eval draws from the scenario's
/// covariate law. With a population weight function the expectation is taken
/// under the weighted law, sum w r / sum w.
inline MonteCarloEstimate true_regret(const Policy& pi, const ScenarioSpec& scenario, Index n_eval,
                                      std::uint64_t seed,
                                      const std::function<double(const Eigen::VectorXd&)>& population = {}) {
  require(n_eval >= 1, ErrorKind::kInvalidInput, "n_eval must be >= 1");
  require(pi.min_actions() <= scenario.m, ErrorKind::kInvalidInput, "policy emits actions beyond the scenario's m");
  std::mt19937_64 rng(seed);
  Eigen::ArrayXd regret(n_eval), weight(n_eval);
  for (Index i = 0; i < n_eval; ++i) {
    const Eigen::VectorXd x = scenario.covariates.draw(scenario.d, rng);
    const Eigen::VectorXd mu = scenario.mean_vector(x);
    regret(i) = std::max(0.0, mu.maxCoeff() - mu(pi.act(x)));
    weight(i) = population ? population(x) : 1.0;
  }
  require((weight >= 0.0).all() && weight.sum() > 0.0, ErrorKind::kInvalidInput,
          "population weights must be nonnegative with positive total");
  const Eigen::ArrayXd terms = weight * regret / weight.mean();
  MonteCarloEstimate est;
  est.mean = terms.mean();
  est.std_error = n_eval > 1 ? std::sqrt((terms - est.mean).square().sum() / static_cast<double>(n_eval - 1) /
                                         static_cast<double>(n_eval))
                             : 0.0;
  return est;
}

}  // namespace retarget
