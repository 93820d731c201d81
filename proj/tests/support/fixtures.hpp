#pragma once

// Random instance builders shared by the unit and acceptance tests.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "retarget/retarget.hpp"

namespace fixtures {

using retarget::Index;

/// Gaussian covariates, uniformly drawn actions (every arm present), Gaussian
/// outcomes.
inline retarget::Dataset random_dataset(Index n, Index d, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> arm(0, m - 1);
  Eigen::MatrixXd x(n, d);
  std::vector<int> a(static_cast<std::size_t>(n));
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = z(rng);
    a[static_cast<std::size_t>(i)] = i < m ? static_cast<int>(i) : arm(rng);
    y(i) = z(rng);
  }
  return retarget::Dataset(std::move(x), std::move(a), std::move(y), m);
}

/// Propensity rows bounded away from 0 and 1.
inline Eigen::MatrixXd random_propensity(Index n, int m, std::mt19937_64& rng, double floor = 0.05) {
  std::uniform_real_distribution<double> u(floor, 1.0);
  Eigen::MatrixXd p(n, m);
  for (Index i = 0; i < n; ++i) {
    for (int a = 0; a < m; ++a) p(i, a) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline Eigen::MatrixXd random_matrix(Index n, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd out(n, m);
  for (Index i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) out(i, a) = z(rng);
  return out;
}

/// Random propensity and means with constant variance `sigma2`.
inline retarget::NuisanceSet random_nuisances(Index n, int m, std::uint64_t seed, double sigma2 = 1.0) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd phi = random_propensity(n, m, rng);
  Eigen::MatrixXd mu = random_matrix(n, m, rng);
  return retarget::NuisanceSet(std::move(phi), std::move(mu), Eigen::MatrixXd::Constant(n, m, sigma2),
                               retarget::NuisanceProvenance::kOracle);
}

inline retarget::PseudoOutcomes random_pseudo(Index n, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {random_matrix(n, m, rng)};
}

inline Eigen::VectorXd random_weights(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  Eigen::VectorXd w(n);
  for (Index i = 0; i < n; ++i) w(i) = u(rng);
  return w;
}

inline retarget::ScenarioSpec scenario(std::string_view text) {
  return retarget::parse_scenarios(text, "test").front();
}

}  // namespace fixtures
