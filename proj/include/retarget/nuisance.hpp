#pragma once

// Nuisance functions: propensity phi(a|x), outcome mean mu(a|x) and residual
// variance sigma^2(a|x), fitted per fold and predicted out of fold.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "retarget/core_data.hpp"
#include "retarget/detail/least_squares.hpp"
#include "retarget/error.hpp"

namespace retarget {

inline constexpr double kVarianceFloor = 1e-12;

/// [1, x] for every row.
inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

// ---------------------------------------------------------------------------
// NuisanceSet

enum class NuisanceProvenance { kFitted, kOracle };

/// Out-of-fold (or oracle) nuisance predictions, one row per observation and
/// one column per arm.
class NuisanceSet {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  NuisanceSet(Eigen::MatrixXd propensity, Eigen::MatrixXd outcome_mean, Eigen::MatrixXd variance,
              NuisanceProvenance provenance, int folds = 0)
      : propensity_(std::move(propensity)),
        outcome_mean_(std::move(outcome_mean)),
        variance_(std::move(variance)),
        provenance_(provenance),
        folds_(folds) {
    const auto n = propensity_.rows();
    const auto m = propensity_.cols();
    require(n >= 1 && m >= 2, ErrorKind::kInvalidInput, "nuisance matrices must be n x m with m >= 2");
    require(outcome_mean_.rows() == n && outcome_mean_.cols() == m && variance_.rows() == n &&
                variance_.cols() == m,
            ErrorKind::kInvalidInput, "nuisance matrices must share one n x m shape");
    require(propensity_.allFinite() && outcome_mean_.allFinite() && variance_.allFinite(),
            ErrorKind::kInvalidInput, "non-finite nuisance entry");
    for (Index i = 0; i < n; ++i) {
      const double s = propensity_.row(i).sum();
      require(std::abs(s - 1.0) <= kRowSumTolerance, ErrorKind::kInvalidInput,
              "propensity row " + std::to_string(i) + " sums to " + std::to_string(s));
      require((propensity_.row(i).array() > 0.0).all() && (propensity_.row(i).array() < 1.0).all(),
              ErrorKind::kInvalidInput,
              "propensity row " + std::to_string(i) + " has an entry outside (0, 1)");
    }
    require((variance_.array() >= 0.0).all(), ErrorKind::kInvalidInput, "negative variance entry");
  }

  Index size() const { return propensity_.rows(); }
  int num_actions() const { return static_cast<int>(propensity_.cols()); }

  const Eigen::MatrixXd& propensity() const { return propensity_; }
  const Eigen::MatrixXd& outcome_mean() const { return outcome_mean_; }
  const Eigen::MatrixXd& variance() const { return variance_; }
  NuisanceProvenance provenance() const { return provenance_; }
  int folds() const { return folds_; }

  /// Scalar stand-in for a common residual variance: the average of all
  /// variance entries.
  double pooled_variance() const { return variance_.mean(); }

  void check_conforms(const Dataset& data) const {
    require(size() == data.size() && num_actions() == data.num_actions(),
            ErrorKind::kInvalidInput,
            "nuisance set is " + std::to_string(size()) + " x " + std::to_string(num_actions()) +
                " but dataset has n = " + std::to_string(data.size()) +
                ", m = " + std::to_string(data.num_actions()));
  }

 private:
  Eigen::MatrixXd propensity_;
  Eigen::MatrixXd outcome_mean_;
  Eigen::MatrixXd variance_;
  NuisanceProvenance provenance_;
  int folds_;
};

// ---------------------------------------------------------------------------
// Propensity

struct PropensityOptions {
  double clip = 0.01;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

/// Clamp every probability to [clip, 1 - clip], then renormalise the row.
inline Eigen::VectorXd clip_probabilities(Eigen::VectorXd p, double clip) {
  p = p.cwiseMax(clip).cwiseMin(1.0 - clip);
  return p / p.sum();
}

/// Multinomial logistic model on [1, x] with arm 0 as the reference class, or
/// an oracle function passed through untouched.
class PropensityModel {
 public:
  using Oracle = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  static PropensityModel fit(const Dataset& train, const PropensityOptions& options = {});

  static PropensityModel from_oracle(int num_actions, Oracle oracle) {
    PropensityModel model;
    model.num_actions_ = num_actions;
    model.oracle_ = std::move(oracle);
    return model;
  }

  int num_actions() const { return num_actions_; }
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }
  bool is_oracle() const { return static_cast<bool>(oracle_); }
  /// (m - 1) x (d + 1); row k holds the log-odds of arm k + 1 against arm 0.
  const Eigen::MatrixXd& coefficients() const { return coefficients_; }

  Eigen::VectorXd predict(const Eigen::VectorXd& x) const {
    if (oracle_) return oracle_(x);
    Eigen::VectorXd z(x.size() + 1);
    z(0) = 1.0;
    z.tail(x.size()) = x;
    Eigen::VectorXd eta(num_actions_);
    eta(0) = 0.0;
    eta.tail(num_actions_ - 1) = coefficients_ * z;
    return clip_probabilities(softmax(eta), clip_);
  }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), num_actions_);
    for (Index i = 0; i < x.rows(); ++i) out.row(i) = predict(Eigen::VectorXd(x.row(i).transpose())).transpose();
    return out;
  }

  static Eigen::VectorXd softmax(const Eigen::VectorXd& eta) {
    const Eigen::ArrayXd e = (eta.array() - eta.maxCoeff()).exp();
    return (e / e.sum()).matrix();
  }

 private:
  int num_actions_ = 0;
  double clip_ = 0.01;
  Eigen::MatrixXd coefficients_;
  bool converged_ = true;
  int iterations_ = 0;
  Oracle oracle_;
};

namespace detail {

/// Mean log-likelihood of the multinomial logit with stacked parameters.
inline double multinomial_loglik(const Eigen::MatrixXd& z, const std::vector<int>& actions,
                                 const Eigen::MatrixXd& coef) {
  const auto n = z.rows();
  const Eigen::MatrixXd eta = z * coef.transpose();  // n x (m-1)
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double top = std::max(0.0, eta.row(i).maxCoeff());
    const double lse = top + std::log(std::exp(-top) + (eta.row(i).array() - top).exp().sum());
    const int a = actions[static_cast<std::size_t>(i)];
    total += (a == 0 ? 0.0 : eta(i, a - 1)) - lse;
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

inline PropensityModel PropensityModel::fit(const Dataset& train, const PropensityOptions& options) {
  require(options.clip > 0.0 && options.clip < 0.5, ErrorKind::kInvalidInput,
          "propensity clip must lie in (0, 0.5)");
  const int m = train.num_actions();
  for (int a = 0; a < m; ++a)
    require(train.count_action(a) > 0, ErrorKind::kPrecondition,
            "arm " + std::to_string(a) + " is absent from the propensity training data");

  const Eigen::MatrixXd z = with_intercept(train.covariates());
  const auto n = z.rows();
  const auto p = z.cols();
  const auto classes = m - 1;
  const auto dim = classes * p;

  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(classes, p);
  double loglik = detail::multinomial_loglik(z, train.actions(), coef);
  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);  // negative Hessian
    for (Index i = 0; i < n; ++i) {
      Eigen::VectorXd eta(m);
      eta(0) = 0.0;
      eta.tail(classes) = coef * z.row(i).transpose();
      const Eigen::VectorXd prob = softmax(eta);
      const int a = train.action(i);
      const auto zi = z.row(i).transpose();
      for (Index k = 0; k < classes; ++k) {
        const double pk = prob(k + 1);
        grad.segment(k * p, p) += ((a == k + 1 ? 1.0 : 0.0) - pk) * zi;
        for (Index l = 0; l < classes; ++l) {
          const double h = (k == l ? pk : 0.0) - pk * prob(l + 1);
          info.block(k * p, l * p, p, p).noalias() += h * zi * zi.transpose();
        }
      }
    }
    grad /= static_cast<double>(n);
    info /= static_cast<double>(n);
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }

    // Newton direction; near-separable data makes the information matrix
    // nearly singular, so add a growing ridge until the factorisation holds.
    Eigen::VectorXd step;
    double damping = 0.0;
    const double base = 1e-12 * (1.0 + info.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info + damping * Eigen::MatrixXd::Identity(dim, dim));
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
          (ldlt.vectorD().array() > 0.0).all()) {
        step = ldlt.solve(grad);
        if (step.allFinite()) break;
      }
      step.resize(0);
      damping = damping == 0.0 ? base : damping * 10.0;
    }
    if (step.size() == 0) step = grad;

    // Backtracking keeps the log-likelihood monotone.
    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      Eigen::MatrixXd trial = coef;
      for (Index k = 0; k < classes; ++k) trial.row(k) += t * step.segment(k * p, p).transpose();
      const double trial_loglik = detail::multinomial_loglik(z, train.actions(), trial);
      if (std::isfinite(trial_loglik) && trial_loglik >= loglik) {
        coef = std::move(trial);
        loglik = trial_loglik;
        improved = true;
        break;
      }
    }
    if (!improved) {
      ++iter;
      break;
    }
  }

  PropensityModel model;
  model.num_actions_ = m;
  model.clip_ = options.clip;
  model.coefficients_ = std::move(coef);
  model.converged_ = converged;
  model.iterations_ = iter;
  return model;
}

// ---------------------------------------------------------------------------
// Outcome regression

/// Linear model mu(arm | x) = beta'[1, x].
struct OutcomeModel {
  int arm = 0;
  Eigen::VectorXd beta;

  double predict(const Eigen::VectorXd& x) const { return beta(0) + beta.tail(x.size()).dot(x); }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return (x * beta.tail(x.cols())).array() + beta(0);
  }
};

/// Ridge regression of Y on [1, x] over the rows with A = arm. The penalty
/// covers every coefficient, the intercept included.
inline OutcomeModel fit_outcome_regression(const Dataset& train, int arm, double ridge = 0.0) {
  require(ridge >= 0.0 && std::isfinite(ridge), ErrorKind::kInvalidInput, "ridge_lambda must be >= 0");
  require(arm >= 0 && arm < train.num_actions(), ErrorKind::kInvalidInput,
          "arm " + std::to_string(arm) + " out of range");
  std::vector<Index> rows;
  for (Index i = 0; i < train.size(); ++i)
    if (train.action(i) == arm) rows.push_back(i);
  const auto needed = train.dim() + 1;
  if (ridge == 0.0 && static_cast<Index>(rows.size()) < needed)
    fail(ErrorKind::kPrecondition, "arm " + std::to_string(arm) + " has " +
                                       std::to_string(rows.size()) + " observations, need at least " +
                                       std::to_string(needed) + " (or ridge_lambda > 0)");
  const auto k = static_cast<Index>(rows.size());
  Eigen::MatrixXd z(k, needed);
  Eigen::VectorXd y(k);
  for (Index r = 0; r < k; ++r) {
    z(r, 0) = 1.0;
    z.row(r).tail(train.dim()) = train.row(rows[static_cast<std::size_t>(r)]);
    y(r) = train.outcome(rows[static_cast<std::size_t>(r)]);
  }
  try {
    return OutcomeModel{arm, detail::weighted_least_squares(z, y, Eigen::VectorXd::Ones(k), ridge)};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumerical) throw;
    fail(ErrorKind::kNumerical, "outcome regression for arm " + std::to_string(arm) + ": " +
                                    e.what() + "; use ridge_lambda > 0");
  }
}

// ---------------------------------------------------------------------------
// Variance

enum class VarianceMode { kPerArm, kPooled };

/// Mean squared residual per arm (constant in x), or one value pooled over all
/// arms. Floored at kVarianceFloor.
inline std::vector<double> estimate_variance(const Dataset& train,
                                             const std::vector<OutcomeModel>& models,
                                             VarianceMode mode) {
  const int m = train.num_actions();
  require(static_cast<int>(models.size()) == m, ErrorKind::kInvalidInput,
          "need one outcome model per arm");
  std::vector<double> sum(static_cast<std::size_t>(m), 0.0);
  std::vector<Index> count(static_cast<std::size_t>(m), 0);
  for (Index i = 0; i < train.size(); ++i) {
    const auto a = static_cast<std::size_t>(train.action(i));
    const double r = train.outcome(i) - models[a].predict(Eigen::VectorXd(train.row(i).transpose()));
    sum[a] += r * r;
    ++count[a];
  }
  for (int a = 0; a < m; ++a)
    require(count[static_cast<std::size_t>(a)] > 0, ErrorKind::kPrecondition,
            "arm " + std::to_string(a) + " has no observations for variance estimation");
  std::vector<double> out(static_cast<std::size_t>(m));
  if (mode == VarianceMode::kPooled) {
    double total = 0.0;
    Index total_count = 0;
    for (int a = 0; a < m; ++a) {
      total += sum[static_cast<std::size_t>(a)];
      total_count += count[static_cast<std::size_t>(a)];
    }
    std::fill(out.begin(), out.end(),
              std::max(kVarianceFloor, total / static_cast<double>(total_count)));
  } else {
    for (std::size_t a = 0; a < out.size(); ++a)
      out[a] = std::max(kVarianceFloor, sum[a] / static_cast<double>(count[a]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-fitting

struct NuisanceConfig {
  int folds = 2;
  double ridge_lambda = 0.0;
  double propensity_clip = 0.01;
  VarianceMode variance_mode = VarianceMode::kPooled;
  /// When set, cross_fit returns these values unchanged.
  std::optional<NuisanceSet> oracle;
};

struct FoldModels {
  PropensityModel propensity;
  std::vector<OutcomeModel> outcome;
  std::vector<double> variance;
};

inline FoldModels fit_fold_models(const Dataset& train, const NuisanceConfig& config) {
  FoldModels models{PropensityModel::fit(train, {.clip = config.propensity_clip}), {}, {}};
  for (int a = 0; a < train.num_actions(); ++a)
    models.outcome.push_back(fit_outcome_regression(train, a, config.ridge_lambda));
  models.variance = estimate_variance(train, models.outcome, config.variance_mode);
  return models;
}

/// Out-of-fold nuisance predictions: row i is predicted by models trained on
/// every fold except fold_of[i].
inline NuisanceSet cross_fit(const Dataset& data, const FoldAssignment& folds,
                             const NuisanceConfig& config) {
  if (config.oracle) {
    config.oracle->check_conforms(data);
    return *config.oracle;
  }
  require(folds.size() == data.size(), ErrorKind::kInvalidInput,
          "fold assignment length does not match the dataset");
  const auto n = data.size();
  const int m = data.num_actions();
  Eigen::MatrixXd phi(n, m), mu(n, m), var(n, m);
  for (int k = 0; k < folds.num_folds; ++k) {
    const auto train_rows = folds.complement(k);
    const auto test_rows = folds.members(k);
    try {
      const Dataset train = data.subset(train_rows);
      const FoldModels models = fit_fold_models(train, config);
      for (const Index i : test_rows) {
        const Eigen::VectorXd x = data.row(i).transpose();
        phi.row(i) = models.propensity.predict(x).transpose();
        for (int a = 0; a < m; ++a) {
          mu(i, a) = models.outcome[static_cast<std::size_t>(a)].predict(x);
          var(i, a) = models.variance[static_cast<std::size_t>(a)];
        }
      }
    } catch (const Error& e) {
      throw e.annotated("fold " + std::to_string(k));
    }
  }
  return NuisanceSet(std::move(phi), std::move(mu), std::move(var), NuisanceProvenance::kFitted,
                     folds.num_folds);
}

// ---------------------------------------------------------------------------
// Oracle nuisance files

/// Builds an oracle NuisanceSet from known phi and mu. Without a variance
/// matrix the variance is estimated from the oracle-mean residuals.
inline NuisanceSet make_oracle_nuisances(const Dataset& data, Eigen::MatrixXd propensity,
                                         Eigen::MatrixXd outcome_mean,
                                         std::optional<Eigen::MatrixXd> variance,
                                         VarianceMode mode = VarianceMode::kPooled) {
  const auto n = data.size();
  const int m = data.num_actions();
  require(propensity.rows() == n && propensity.cols() == m && outcome_mean.rows() == n &&
              outcome_mean.cols() == m,
          ErrorKind::kInvalidInput, "oracle nuisance matrices must be n x m");
  if (!variance) {
    std::vector<double> sum(static_cast<std::size_t>(m), 0.0);
    std::vector<Index> count(static_cast<std::size_t>(m), 0);
    for (Index i = 0; i < n; ++i) {
      const int a = data.action(i);
      const double r = data.outcome(i) - outcome_mean(i, a);
      sum[static_cast<std::size_t>(a)] += r * r;
      ++count[static_cast<std::size_t>(a)];
    }
    Eigen::RowVectorXd per_arm(m);
    double total = 0.0;
    Index total_count = 0;
    for (int a = 0; a < m; ++a) {
      const auto c = count[static_cast<std::size_t>(a)];
      require(c > 0, ErrorKind::kPrecondition,
              "arm " + std::to_string(a) + " has no observations for variance estimation");
      per_arm(a) = std::max(kVarianceFloor, sum[static_cast<std::size_t>(a)] / static_cast<double>(c));
      total += sum[static_cast<std::size_t>(a)];
      total_count += c;
    }
    if (mode == VarianceMode::kPooled)
      per_arm.setConstant(std::max(kVarianceFloor, total / static_cast<double>(total_count)));
    variance = per_arm.replicate(n, 1);
  }
  return NuisanceSet(std::move(propensity), std::move(outcome_mean), std::move(*variance),
                     NuisanceProvenance::kOracle);
}

/// CSV with columns phi0..phi{m-1}, mu0..mu{m-1} and optionally
/// var0..var{m-1}; one row per observation in dataset order.
inline NuisanceSet parse_oracle_nuisances(std::string_view text, const Dataset& data,
                                          VarianceMode mode = VarianceMode::kPooled,
                                          const std::string& source = "<oracle>") {
  const auto rows = detail::lines(text);
  require(!rows.empty(), ErrorKind::kParse, source + ": empty file");
  const auto header = detail::split(rows[0], ',');
  const int m = data.num_actions();
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    return std::nullopt;
  };
  std::vector<std::size_t> phi_col, mu_col, var_col;
  for (int a = 0; a < m; ++a) {
    const auto p = column("phi" + std::to_string(a));
    const auto u = column("mu" + std::to_string(a));
    if (!p || !u)
      fail(ErrorKind::kParse, source + ": missing column phi" + std::to_string(a) + " or mu" +
                                  std::to_string(a));
    phi_col.push_back(*p);
    mu_col.push_back(*u);
    if (auto v = column("var" + std::to_string(a))) var_col.push_back(*v);
  }
  const bool has_var = static_cast<int>(var_col.size()) == m;
  const auto n = data.size();
  Eigen::MatrixXd phi(n, m), mu(n, m), var(n, m);
  Index i = 0;
  for (std::size_t li = 1; li < rows.size(); ++li) {
    if (detail::trim(rows[li]).empty()) continue;
    require(i < n, ErrorKind::kParse, source + ": more rows than the dataset");
    const auto cells = detail::split(rows[li], ',');
    require(cells.size() == header.size(), ErrorKind::kParse,
            source + ": line " + std::to_string(li + 1) + " has the wrong field count");
    auto cell = [&](std::size_t c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v) fail(ErrorKind::kParse, source + ": line " + std::to_string(li + 1) + ", column '" +
                                          std::string(header[c]) + "': non-numeric value");
      return *v;
    };
    for (int a = 0; a < m; ++a) {
      phi(i, a) = cell(phi_col[static_cast<std::size_t>(a)]);
      mu(i, a) = cell(mu_col[static_cast<std::size_t>(a)]);
      if (has_var) var(i, a) = cell(var_col[static_cast<std::size_t>(a)]);
    }
    ++i;
  }
  require(i == n, ErrorKind::kParse,
          source + ": has " + std::to_string(i) + " rows, dataset has " + std::to_string(n));
  try {
    return make_oracle_nuisances(data, std::move(phi), std::move(mu),
                                 has_var ? std::optional<Eigen::MatrixXd>(std::move(var)) : std::nullopt,
                                 mode);
  } catch (const Error& e) {
    throw e.annotated(source);
  }
}

inline NuisanceSet load_oracle_nuisances(const std::string& path, const Dataset& data,
                                         VarianceMode mode = VarianceMode::kPooled) {
  return parse_oracle_nuisances(detail::read_file(path), data, mode, path);
}

inline std::string format_nuisances(const NuisanceSet& nuis) {
  const int m = nuis.num_actions();
  std::string out;
  for (int a = 0; a < m; ++a) out += "phi" + std::to_string(a) + ",";
  for (int a = 0; a < m; ++a) out += "mu" + std::to_string(a) + ",";
  for (int a = 0; a < m; ++a) out += "var" + std::to_string(a) + (a + 1 < m ? "," : "\n");
  for (Index i = 0; i < nuis.size(); ++i) {
    for (int a = 0; a < m; ++a) out += detail::format_exact(nuis.propensity()(i, a)) + ",";
    for (int a = 0; a < m; ++a) out += detail::format_exact(nuis.outcome_mean()(i, a)) + ",";
    for (int a = 0; a < m; ++a)
      out += detail::format_exact(nuis.variance()(i, a)) + (a + 1 < m ? "," : "\n");
  }
  return out;
}

}  // namespace retarget
