#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "retarget/error.hpp"

namespace retarget::detail {

/// Relative pivot threshold below which a column-pivoted QR declares the
/// weighted design rank deficient.
inline constexpr double kRankThreshold = 1e-10;

/// argmin_b sum_i w_i (y_i - b'z_i)^2 + ridge * |b|^2, solved by a
/// column-pivoted QR of the sqrt(w)-scaled (and ridge-augmented) design.
/// Throws kNumerical when the system is singular.
inline Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& w, double ridge = 0.0) {
  const auto n = z.rows();
  const auto k = z.cols();
  const Eigen::VectorXd root_w = w.array().sqrt().matrix();
  Eigen::MatrixXd design(n + (ridge > 0 ? k : 0), k);
  Eigen::VectorXd target(design.rows());
  design.topRows(n) = root_w.asDiagonal() * z;
  target.head(n) = root_w.cwiseProduct(y);
  if (ridge > 0) {
    design.bottomRows(k) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(k, k);
    target.tail(k).setZero();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(kRankThreshold);
  if (design.rows() < k || qr.rank() < k)
    fail(ErrorKind::kNumerical,
         "weighted Gram matrix is singular (rank " + std::to_string(qr.rank()) + " < " +
             std::to_string(k) + " features)");
  Eigen::VectorXd beta = qr.solve(target);
  // One step of iterative refinement on the normal equations keeps the
  // estimating-equation residual at rounding level for badly scaled designs.
  const Eigen::VectorXd resid = target - design * beta;
  const Eigen::VectorXd correction = qr.solve(resid);
  if (correction.allFinite()) beta += correction;
  return beta;
}

/// sum_i w_i (y_i - b'z_i) z_i, the sample estimating equation of weighted
/// least squares.
inline Eigen::VectorXd estimating_equation(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd resid = y - z * beta;
  return z.transpose() * w.cwiseProduct(resid);
}

}  // namespace retarget::detail
