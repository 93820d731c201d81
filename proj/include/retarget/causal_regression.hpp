#pragma once

// Linear causal-prediction fits:
//   best_fit          sum_i w_i (psi_i - b'z_i) z_i = 0                 (pseudo-outcome regression)
//   on_arm_precision  sum_{A_i=a} (Y_i - b'z_i) z_i / sigma^2(a|x_i) = 0
//   dv_overlap        sum_{A_i=a} phi(other|x_i) (Y_i - b'z_i) z_i = 0
//   cate              sum_i w_i (psi1_i - psi0_i - b'z_i) z_i = 0
// where z = zeta(x) is a deterministic feature map.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retarget/core_data.hpp"
#include "retarget/detail/least_squares.hpp"
#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"
#include "retarget/nuisance.hpp"
#include "retarget/pseudo_outcome.hpp"
#include "retarget/retargeting.hpp"

namespace retarget {

/// Coarsening of the covariates used as regression features. Every map
/// prepends a constant column unless built with intercept = false.
class FeatureMap {
 public:
  enum class Kind { kIdentity, kSubset, kPolynomial };

  static FeatureMap identity(bool intercept = true) { return FeatureMap(Kind::kIdentity, {}, 1, intercept); }

  /// `columns` are 1-based covariate indices (x1 is 1).
  static FeatureMap subset(std::vector<int> columns, bool intercept = true) {
    require(!columns.empty(), ErrorKind::kInvalidInput, "feature subset is empty");
    for (int c : columns) require(c >= 1, ErrorKind::kInvalidInput, "feature indices are 1-based");
    return FeatureMap(Kind::kSubset, std::move(columns), 1, intercept);
  }

  /// x_j, x_j^2, ..., x_j^degree for every coordinate; no cross terms.
  static FeatureMap polynomial(int degree, bool intercept = true) {
    require(degree >= 1, ErrorKind::kInvalidInput, "polynomial degree must be >= 1");
    return FeatureMap(Kind::kPolynomial, {}, degree, intercept);
  }

  /// "identity", "subset:1,3" or "poly:2".
  static FeatureMap parse(std::string_view text, bool intercept = true) {
    text = detail::trim(text);
    if (text == "identity") return identity(intercept);
    if (text.substr(0, 7) == "subset:") {
      std::vector<int> cols;
      for (auto tok : detail::split(text.substr(7), ',')) {
        const auto v = detail::parse_integer(tok);
        if (!v) fail(ErrorKind::kInvalidInput, "bad feature index '" + std::string(tok) + "'");
        cols.push_back(static_cast<int>(*v));
      }
      return subset(std::move(cols), intercept);
    }
    if (text.substr(0, 5) == "poly:") {
      const auto v = detail::parse_integer(text.substr(5));
      if (!v) fail(ErrorKind::kInvalidInput, "bad polynomial degree in '" + std::string(text) + "'");
      return polynomial(static_cast<int>(*v), intercept);
    }
    fail(ErrorKind::kInvalidInput, "unknown feature map '" + std::string(text) +
                                       "' (expected identity, subset:<idx-list> or poly:<deg>)");
  }

  Kind kind() const { return kind_; }
  bool intercept() const { return intercept_; }

  std::string name() const {
    std::string s;
    switch (kind_) {
      case Kind::kIdentity: s = "identity"; break;
      case Kind::kSubset:
        s = "subset:";
        for (std::size_t k = 0; k < columns_.size(); ++k) s += (k ? "," : "") + std::to_string(columns_[k]);
        break;
      case Kind::kPolynomial: s = "poly:" + std::to_string(degree_); break;
    }
    return intercept_ ? s : s + " (no intercept)";
  }

  Index output_dim(Index d) const {
    Index k = 0;
    switch (kind_) {
      case Kind::kIdentity: k = d; break;
      case Kind::kSubset: k = static_cast<Index>(columns_.size()); break;
      case Kind::kPolynomial: k = d * degree_; break;
    }
    return k + (intercept_ ? 1 : 0);
  }

  /// Column labels in transform order: "1", "x2", "x1^3", ...
  std::vector<std::string> terms(Index d) const {
    std::vector<std::string> out;
    if (intercept_) out.emplace_back("1");
    switch (kind_) {
      case Kind::kIdentity:
        for (Index j = 1; j <= d; ++j) out.push_back("x" + std::to_string(j));
        break;
      case Kind::kSubset:
        for (int col : columns_) out.push_back("x" + std::to_string(col));
        break;
      case Kind::kPolynomial:
        for (Index j = 1; j <= d; ++j)
          for (int p = 1; p <= degree_; ++p)
            out.push_back("x" + std::to_string(j) + (p > 1 ? "^" + std::to_string(p) : ""));
        break;
    }
    return out;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    const auto d = x.cols();
    const auto k = output_dim(d);
    require(k >= 1, ErrorKind::kInvalidInput, "feature map produces no features");
    Eigen::MatrixXd z(x.rows(), k);
    Index c = 0;
    if (intercept_) z.col(c++).setOnes();
    switch (kind_) {
      case Kind::kIdentity:
        z.rightCols(d) = x;
        break;
      case Kind::kSubset:
        for (int col : columns_) {
          require(col <= d, ErrorKind::kInvalidInput,
                  "feature index " + std::to_string(col) + " exceeds d = " + std::to_string(d));
          z.col(c++) = x.col(col - 1);
        }
        break;
      case Kind::kPolynomial:
        for (Index j = 0; j < d; ++j) {
          Eigen::VectorXd power = x.col(j);
          for (int p = 1; p <= degree_; ++p) {
            z.col(c++) = power;
            power = power.cwiseProduct(x.col(j));
          }
        }
        break;
    }
    return z;
  }

 private:
  FeatureMap(Kind kind, std::vector<int> columns, int degree, bool intercept)
      : kind_(kind), columns_(std::move(columns)), degree_(degree), intercept_(intercept) {}

  Kind kind_;
  std::vector<int> columns_;
  int degree_;
  bool intercept_;
};

enum class Equation { kBestFit, kOnArmPrecision, kDvOverlap, kCate };

inline std::string_view equation_name(Equation e) {
  switch (e) {
    case Equation::kBestFit: return "best_fit";
    case Equation::kOnArmPrecision: return "on_arm";
    case Equation::kDvOverlap: return "dv";
    case Equation::kCate: return "cate";
  }
  return "?";
}

enum class OnArmMode { kKnownVariance, kOls, kIrls };

inline std::string_view on_arm_mode_name(OnArmMode mode) {
  switch (mode) {
    case OnArmMode::kKnownVariance: return "known";
    case OnArmMode::kOls: return "ols";
    case OnArmMode::kIrls: return "irls";
  }
  return "?";
}

struct RegressionFit {
  Eigen::VectorXd beta;
  Equation equation = Equation::kBestFit;
  std::optional<int> arm;
  std::optional<OnArmMode> mode;
  std::string features;
  Index observations = 0;
  /// Infinity norm of the sample estimating equation at beta, under the
  /// weights of the final solve.
  double residual_norm = 0.0;
  /// 1e-8 * n * scale, the bound residual_norm must respect.
  double residual_tolerance = 0.0;
  int iterations = 1;
  bool converged = true;

  bool satisfies_equation() const { return residual_norm <= residual_tolerance; }
};

inline constexpr double kResidualTolerance = 1e-8;
inline constexpr double kIrlsResidualFloor = 1e-6;
inline constexpr int kIrlsMaxIterations = 50;
inline constexpr double kIrlsTolerance = 1e-8;

namespace detail {

/// Magnitude of the estimating-equation terms: max weight times max feature
/// entry times max(|target|, 1).
inline double equation_scale(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double zmax = z.size() ? z.cwiseAbs().maxCoeff() : 1.0;
  const double ymax = y.size() ? y.cwiseAbs().maxCoeff() : 0.0;
  const double wmax = w.size() ? w.maxCoeff() : 1.0;
  return std::max(wmax, 1e-300) * std::max(zmax, 1e-300) * std::max(ymax, 1.0);
}

inline RegressionFit solve_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                               Equation equation, const FeatureMap& zmap, std::string_view what) {
  RegressionFit fit;
  require(w.size() == z.rows() && y.size() == z.rows(), ErrorKind::kInvalidInput,
          std::string(what) + ": design, target and weights differ in length");
  const double wmax = w.size() ? w.maxCoeff() : 0.0;
  require(wmax > 0.0 && std::isfinite(wmax), ErrorKind::kNumerical, std::string(what) + ": all weights are zero");
  try {
    // beta is invariant to a common weight scale; dividing by the largest
    // weight makes constant weights an exact no-op.
    fit.beta = weighted_least_squares(z, y, w / wmax);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumerical) throw;
    fail(ErrorKind::kNumerical, std::string(what) + ": " + e.what() +
                                    "; add a ridge penalty or choose a smaller feature map");
  }
  fit.equation = equation;
  fit.features = zmap.name();
  fit.observations = z.rows();
  fit.residual_norm = estimating_equation(z, y, w, fit.beta).lpNorm<Eigen::Infinity>();
  fit.residual_tolerance = kResidualTolerance * static_cast<double>(z.rows()) * equation_scale(z, y, w);
  return fit;
}

inline std::vector<Index> arm_rows(const Dataset& data, int arm) {
  require(arm >= 0 && arm < data.num_actions(), ErrorKind::kInvalidInput,
          "arm " + std::to_string(arm) + " out of range for m = " + std::to_string(data.num_actions()));
  std::vector<Index> rows;
  for (Index i = 0; i < data.size(); ++i)
    if (data.action(i) == arm) rows.push_back(i);
  return rows;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

inline void require_arm_sample(const std::vector<Index>& rows, Index k, int arm) {
  require(static_cast<Index>(rows.size()) >= k, ErrorKind::kPrecondition,
          "arm " + std::to_string(arm) + " has " + std::to_string(rows.size()) +
              " observations, fewer than the " + std::to_string(k) + " features");
}

}  // namespace detail

/// w-weighted least squares of a pseudo-outcome column on zeta(x).
inline RegressionFit fit_best_fit(const Eigen::VectorXd& psi_col, const WeightScheme& w,
                                  const FeatureMap& zmap, const Dataset& data) {
  require(psi_col.size() == data.size() && w.size() == data.size(), ErrorKind::kInvalidInput,
          "pseudo-outcome, weights and dataset differ in length");
  return detail::solve_fit(zmap.transform(data.covariates()), psi_col, w.weights(), Equation::kBestFit,
                           zmap, "best-fit regression");
}

/// Regression of Y on zeta(x) using only rows with A = arm, weighted by
/// 1/sigma^2(arm|x) (known_variance), unweighted (ols), or by
/// 1/max(residual^2, floor) iterated to convergence (irls).
inline RegressionFit fit_on_arm_precision(const Dataset& data, const NuisanceSet& nuis, int arm,
                                          const FeatureMap& zmap, OnArmMode mode) {
  nuis.check_conforms(data);
  const auto rows = detail::arm_rows(data, arm);
  const Eigen::MatrixXd z = detail::take_rows(zmap.transform(data.covariates()), rows);
  detail::require_arm_sample(rows, z.cols(), arm);
  Eigen::VectorXd y(z.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) y(static_cast<Index>(r)) = data.outcome(rows[r]);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(z.rows());
  if (mode == OnArmMode::kKnownVariance)
    for (std::size_t r = 0; r < rows.size(); ++r)
      w(static_cast<Index>(r)) = 1.0 / std::max(nuis.variance()(rows[r], arm), kVarianceFloor);

  RegressionFit fit = detail::solve_fit(z, y, w, Equation::kOnArmPrecision, zmap, "on-arm regression");
  if (mode == OnArmMode::kIrls) {
    fit.converged = false;
    for (int iter = 1; iter <= kIrlsMaxIterations; ++iter) {
      const Eigen::ArrayXd resid = (y - z * fit.beta).array();
      w = resid.square().max(kIrlsResidualFloor).inverse().matrix();
      RegressionFit next = detail::solve_fit(z, y, w, Equation::kOnArmPrecision, zmap, "IRLS step");
      const double change = (next.beta - fit.beta).lpNorm<Eigen::Infinity>();
      fit = std::move(next);
      fit.iterations = iter;
      if (change < kIrlsTolerance) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.arm = arm;
  fit.mode = mode;
  return fit;
}

/// Rows with A = arm, weighted by the propensity of the other arm (m = 2).
inline RegressionFit fit_dv_overlap(const Dataset& data, const NuisanceSet& nuis, int arm,
                                    const FeatureMap& zmap) {
  require(data.num_actions() == 2, ErrorKind::kPrecondition,
          "the overlap-weighted on-arm regression requires m = 2 actions (got m = " +
              std::to_string(data.num_actions()) + ")");
  nuis.check_conforms(data);
  const auto rows = detail::arm_rows(data, arm);
  const Eigen::MatrixXd z = detail::take_rows(zmap.transform(data.covariates()), rows);
  detail::require_arm_sample(rows, z.cols(), arm);
  const int other = 1 - arm;
  Eigen::VectorXd y(z.rows()), w(z.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y(static_cast<Index>(r)) = data.outcome(rows[r]);
    w(static_cast<Index>(r)) = nuis.propensity()(rows[r], other);
  }
  RegressionFit fit = detail::solve_fit(z, y, w, Equation::kDvOverlap, zmap, "overlap-weighted regression");
  fit.arm = arm;
  return fit;
}

/// w-weighted least squares of psi_1 - psi_0 on zeta(x).
inline RegressionFit fit_cate(const Dataset& data, const PseudoOutcomes& pseudo, const WeightScheme& w,
                              const FeatureMap& zmap) {
  require(data.num_actions() == 2, ErrorKind::kPrecondition,
          "the treatment-effect regression requires m = 2 actions (got m = " +
              std::to_string(data.num_actions()) + ")");
  const Eigen::VectorXd effect = effect_pseudo_outcome(pseudo);
  require(effect.size() == data.size() && w.size() == data.size(), ErrorKind::kInvalidInput,
          "pseudo-outcomes, weights and dataset differ in length");
  return detail::solve_fit(zmap.transform(data.covariates()), effect, w.weights(), Equation::kCate, zmap,
                           "effect regression");
}

}  // namespace retarget
