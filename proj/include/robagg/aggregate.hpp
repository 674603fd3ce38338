#pragma once

// Central-processor aggregation of local estimates: weighted average and
// the Huber-type estimating equations
//
//   sum_k (n_k/N) n_k^{-1/2} psi_c{ S^{-1/2} sqrt(n_k) (theta_k - theta) } = 0,
//
// together with the efficiency constant tau_c and standard errors.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace robagg {

/// What a server transmits to the central processor. `sigma_star` may be
/// contaminated and need not be positive definite.
struct LocalEstimate {
  int server_id = 0;
  std::int64_t n_k = 1;
  Eigen::VectorXd theta_star;
  Eigen::MatrixXd sigma_star;
};

inline constexpr double kHuberInfinity = std::numeric_limits<double>::infinity();

struct HuberConfig {
  double c = 1.345;  // kHuberInfinity selects the weighted average
  double tol = 1e-10;
  int max_iter = 200;
};

struct AggregationResult {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd sigma_used;
  double tau = 1.0;
  Eigen::VectorXd se;
  int iterations = 0;
  double residual_norm = 0.0;
};

struct WeightedAverage {
  Eigen::VectorXd theta_bar;
  Eigen::MatrixXd sigma_bar;
};

/// Huber psi: identity on [-c, c], clipped to +-c outside.
inline double huber_psi(double u, double c) {
  if (u < -c) return -c;
  if (u > c) return c;
  return u;
}

/// b_c = P(|Z| <= c) for Z ~ N(0, 1).
double huber_b(double c);
/// sigma_c^2 = E psi_c(Z)^2, closed form b_c - 2 c phi(c) + c^2 (1 - b_c).
double huber_sigma2(double c);
/// Asymptotic relative efficiency b_c^2 / sigma_c^2 of the Huber aggregate.
double tau_c(double c);

/// Total sample size N = sum n_k.
std::int64_t total_size(std::span<const LocalEstimate> estimates);

/// theta_bar = sum (n_k/N) theta_k and sigma_bar = sum (n_k/N) sigma_k.
WeightedAverage weighted_average(std::span<const LocalEstimate> estimates);

/// Left side of the Huber estimating equations at theta.
Eigen::VectorXd huber_estimating_function(std::span<const LocalEstimate> estimates,
                                          const Eigen::MatrixXd& sigma_inv_sqrt,
                                          const Eigen::VectorXd& theta, double c);

/// Solves the Huber estimating equations with sigma_hat for whitening.
/// Throws NotPositiveDefinite for a non-PD sigma_hat and NonConvergence when
/// the iteration cap is hit.
AggregationResult huber_aggregate(std::span<const LocalEstimate> estimates,
                                  const Eigen::MatrixXd& sigma_hat, const HuberConfig& config = {});

/// SE_j = sqrt(sigma_jj / (N tau)).
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& sigma, std::int64_t total_n, double tau);

}  // namespace robagg
