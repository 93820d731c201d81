#pragma once

// Doubly-robust pseudo-outcomes for every arm.

#include <Eigen/Dense>

#include <string>

#include "retarget/core_data.hpp"
#include "retarget/error.hpp"
#include "retarget/nuisance.hpp"

namespace retarget {

/// psi(i, a) = mu(a|x_i) + 1{A_i = a} / phi(a|x_i) * (Y_i - mu(a|x_i)).
struct PseudoOutcomes {
  Eigen::MatrixXd psi;

  Index size() const { return psi.rows(); }
  int num_actions() const { return static_cast<int>(psi.cols()); }
};

inline PseudoOutcomes dr_pseudo_outcomes(const Dataset& data, const NuisanceSet& nuis) {
  nuis.check_conforms(data);
  Eigen::MatrixXd psi = nuis.outcome_mean();
  for (Index i = 0; i < data.size(); ++i) {
    const int a = data.action(i);
    psi(i, a) += (data.outcome(i) - nuis.outcome_mean()(i, a)) / nuis.propensity()(i, a);
  }
  return PseudoOutcomes{std::move(psi)};
}

/// psi_1 - psi_0, the pseudo-outcome of the binary treatment effect.
inline Eigen::VectorXd effect_pseudo_outcome(const PseudoOutcomes& pseudo) {
  require(pseudo.num_actions() == 2, ErrorKind::kPrecondition,
          "the effect pseudo-outcome requires m = 2 actions (got m = " +
              std::to_string(pseudo.num_actions()) + ")");
  return pseudo.psi.col(1) - pseudo.psi.col(0);
}

inline std::string format_pseudo_outcomes(const PseudoOutcomes& pseudo) {
  std::string out;
  for (int a = 0; a < pseudo.num_actions(); ++a)
    out += "psi" + std::to_string(a) + (a + 1 < pseudo.num_actions() ? "," : "\n");
  for (Index i = 0; i < pseudo.size(); ++i)
    for (int a = 0; a < pseudo.num_actions(); ++a)
      out += detail::format_exact(pseudo.psi(i, a)) + (a + 1 < pseudo.num_actions() ? "," : "\n");
  return out;
}

}  // namespace retarget
