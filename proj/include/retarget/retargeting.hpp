#pragma once

// Weight schemes for the retargeted objective (uniform, homoskedastic
// retargeting weights, and their curvature-scaled variants), the local action
// gap statistics and the variance proxy used to compare schemes.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>

#include "retarget/detail/text.hpp"
#include "retarget/error.hpp"
#include "retarget/nuisance.hpp"

namespace retarget {

inline constexpr double kDefaultDeltaFloor = 1e-3;

enum class WeightKind { kUniform, kRetargetedHomoskedastic, kCurvatureScaled };

/// Which scheme to build: "uniform", "w0", or "w0_dp:<p>".
struct WeightSpec {
  WeightKind kind = WeightKind::kUniform;
  double exponent = 0.0;  // only for kCurvatureScaled

  std::string str() const {
    switch (kind) {
      case WeightKind::kUniform: return "uniform";
      case WeightKind::kRetargetedHomoskedastic: return "w0";
      case WeightKind::kCurvatureScaled: return "w0_dp:" + detail::format_general(exponent, 10);
    }
    return "?";
  }

  friend bool operator==(const WeightSpec&, const WeightSpec&) = default;
};

inline WeightSpec parse_weight_spec(std::string_view text) {
  text = detail::trim(text);
  if (text == "uniform" || text == "1") return {WeightKind::kUniform, 0.0};
  if (text == "w0") return {WeightKind::kRetargetedHomoskedastic, 0.0};
  constexpr std::string_view prefix = "w0_dp:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto p = detail::parse_double(text.substr(prefix.size()));
    if (p && std::isfinite(*p)) return {WeightKind::kCurvatureScaled, *p};
  }
  fail(ErrorKind::kInvalidInput,
       "unknown weight scheme '" + std::string(text) + "' (expected uniform, w0 or w0_dp:<p>)");
}

/// Nonnegative per-observation weights normalised to sample mean 1.
class WeightScheme {
 public:
  static constexpr double kMeanTolerance = 1e-9;

  /// Normalises `raw` to mean 1. Rejects negative or non-finite entries and an
  /// all-zero vector.
  static WeightScheme from_raw(WeightSpec spec, const Eigen::VectorXd& raw) {
    require(raw.size() >= 1, ErrorKind::kInvalidInput, "empty weight vector");
    require(raw.allFinite(), ErrorKind::kInvalidInput, "non-finite weight");
    require((raw.array() >= 0.0).all(), ErrorKind::kInvalidInput, "negative weight");
    const double mean = raw.mean();
    require(mean > 0.0, ErrorKind::kNumerical, "weights sum to zero");
    WeightScheme w;
    w.spec_ = spec;
    w.weights_ = raw / mean;
    return w;
  }

  static WeightScheme uniform(Index n) {
    return from_raw({WeightKind::kUniform, 0.0}, Eigen::VectorXd::Ones(n));
  }

  const WeightSpec& spec() const { return spec_; }
  WeightKind kind() const { return spec_.kind; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Index size() const { return weights_.size(); }
  double operator()(Index i) const { return weights_(i); }

 private:
  WeightSpec spec_;
  Eigen::VectorXd weights_;
};

/// w_i proportional to (sum_a 1/phi(a|x_i) + m/2 - 1)^{-1}.
inline Eigen::VectorXd homoskedastic_raw_weights(const Eigen::MatrixXd& propensity) {
  require((propensity.array() > 0.0).all(), ErrorKind::kPrecondition,
          "retargeting weights need strictly positive propensities");
  const double m = static_cast<double>(propensity.cols());
  const Eigen::ArrayXd inv_sum = propensity.array().inverse().rowwise().sum();
  return (inv_sum + m / 2.0 - 1.0).inverse().matrix();
}

inline WeightScheme homoskedastic_weights(const NuisanceSet& nuis) {
  return WeightScheme::from_raw({WeightKind::kRetargetedHomoskedastic, 0.0},
                                homoskedastic_raw_weights(nuis.propensity()));
}

// ---------------------------------------------------------------------------
// Gaps

/// delta: best minus best strictly-smaller arm mean (0 when all arms tie).
/// big_m: best minus worst arm mean.
struct GapStatistics {
  Eigen::VectorXd delta;
  Eigen::VectorXd big_m;
};

inline GapStatistics gap_statistics(const Eigen::MatrixXd& outcome_mean) {
  const auto n = outcome_mean.rows();
  GapStatistics gaps{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const auto row = outcome_mean.row(i);
    const double top = row.maxCoeff();
    double second = top;
    bool found = false;
    for (Index a = 0; a < row.size(); ++a) {
      if (row(a) < top && (!found || row(a) > second)) {
        second = row(a);
        found = true;
      }
    }
    gaps.delta(i) = found ? top - second : 0.0;
    gaps.big_m(i) = top - row.minCoeff();
  }
  return gaps;
}

inline GapStatistics gap_statistics(const NuisanceSet& nuis) {
  return gap_statistics(nuis.outcome_mean());
}

/// base_i * max(delta_i, floor)^p, renormalised. p = 0 returns `base`.
inline WeightScheme curvature_scaled_weights(const WeightScheme& base, const GapStatistics& gaps,
                                             double p, double floor = kDefaultDeltaFloor) {
  require(floor > 0.0, ErrorKind::kInvalidInput, "delta floor must be positive");
  require(std::isfinite(p), ErrorKind::kInvalidInput, "curvature exponent must be finite");
  require(gaps.delta.size() == base.size(), ErrorKind::kInvalidInput,
          "gap statistics and weights differ in length");
  if (p == 0.0) return base;
  const Eigen::ArrayXd scale = gaps.delta.array().max(floor).pow(p);
  return WeightScheme::from_raw({WeightKind::kCurvatureScaled, p},
                                (base.weights().array() * scale).matrix());
}

/// Builds any named scheme from nuisances. Curvature-scaled schemes use the
/// homoskedastic weights as the base.
inline WeightScheme build_weights(const WeightSpec& spec, const NuisanceSet& nuis,
                                  double delta_floor = kDefaultDeltaFloor) {
  switch (spec.kind) {
    case WeightKind::kUniform: return WeightScheme::uniform(nuis.size());
    case WeightKind::kRetargetedHomoskedastic: return homoskedastic_weights(nuis);
    case WeightKind::kCurvatureScaled: {
      WeightScheme w = curvature_scaled_weights(homoskedastic_weights(nuis), gap_statistics(nuis),
                                                spec.exponent, delta_floor);
      if (spec.exponent == 0.0) w = WeightScheme::from_raw(spec, w.weights());
      return w;
    }
  }
  fail(ErrorKind::kInvalidInput, "unknown weight kind");
}

// ---------------------------------------------------------------------------
// Variance proxy and selection ratios

/// Per-row variance factor c_i = sum_a sigma^2(a|x_i)/phi(a|x_i) + (m/2 - 1) * pooled.
inline Eigen::VectorXd variance_factor(const NuisanceSet& nuis) {
  const double m = static_cast<double>(nuis.num_actions());
  const Eigen::ArrayXd ratio = (nuis.variance().array() / nuis.propensity().array()).rowwise().sum();
  return (ratio + (m / 2.0 - 1.0) * nuis.pooled_variance()).matrix();
}

/// mean(w^2 c) / mean(w)^2. Under a common variance its minimiser over
/// pointwise weights is the homoskedastic retargeting weight.
inline double variance_proxy(const Eigen::VectorXd& w, const NuisanceSet& nuis) {
  require(w.size() == nuis.size(), ErrorKind::kInvalidInput, "weights and nuisances differ in length");
  const double mean_w = w.mean();
  require(mean_w > 0.0, ErrorKind::kNumerical, "weights sum to zero");
  const Eigen::VectorXd c = variance_factor(nuis);
  return (w.array().square() * c.array()).mean() / (mean_w * mean_w);
}

inline double variance_proxy(const WeightScheme& w, const NuisanceSet& nuis) {
  return variance_proxy(w.weights(), nuis);
}

enum class RatioDirection { kTimesDelta, kOverDelta };

/// sqrt(proxy) / mean(w * delta), or sqrt(proxy) / mean(w / max(delta, floor)).
inline double selection_ratio(const WeightScheme& w, const GapStatistics& gaps,
                              const NuisanceSet& nuis, RatioDirection direction,
                              double floor = kDefaultDeltaFloor) {
  require(floor > 0.0, ErrorKind::kInvalidInput, "delta floor must be positive");
  require(gaps.delta.size() == w.size(), ErrorKind::kInvalidInput,
          "gap statistics and weights differ in length");
  const double numerator = std::sqrt(variance_proxy(w, nuis));
  const Eigen::ArrayXd wa = w.weights().array();
  const double denominator = direction == RatioDirection::kTimesDelta
                                 ? (wa * gaps.delta.array()).mean()
                                 : (wa / gaps.delta.array().max(floor)).mean();
  if (!(denominator > 0.0))
    fail(ErrorKind::kNumerical,
         "selection ratio denominator is zero (all weighted gaps vanish; mean weight " +
             std::to_string(wa.mean()) + ", max delta " + std::to_string(gaps.delta.maxCoeff()) + ")");
  return numerator / denominator;
}

}  // namespace retarget
