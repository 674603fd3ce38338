#pragma once

// Two-step screening of received estimates with Mahalanobis distances
// against the robust aggregate. Step 1 flags theta_k when
//   d1 = sqrt(n_k (theta_k - theta)^T S^{-1} (theta_k - theta))
// exceeds sqrt(chi2_{p,alpha}); Step 2, only for servers that pass Step 1,
// flags sigma_k when d2 (same form with sigma_k^{-1}) exceeds the threshold.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "robagg/aggregate.hpp"

namespace robagg {

struct ServerDetection {
  int server_id = 0;
  std::int64_t n_k = 0;
  std::optional<double> d1;
  std::optional<double> d2;  // absent when sigma_k is not positive definite
  bool theta_flagged = false;
  bool sigma_flagged = false;
  std::string error;  // non-empty when this server could not be scored
};

struct DetectionReport {
  std::vector<ServerDetection> servers;  // in server-id order
  double alpha = 0.05;
  double threshold = 0.0;  // sqrt(chi2_{p,alpha})
  Eigen::Index p = 0;
};

double mahalanobis_d1(const LocalEstimate& est, const Eigen::VectorXd& theta_hat,
                      const Eigen::MatrixXd& sigma_hat);

/// Distance using the server's own variance; nullopt when that matrix is not
/// positive definite (itself evidence of contamination).
std::optional<double> mahalanobis_d2(const LocalEstimate& est, const Eigen::VectorXd& theta_hat);

DetectionReport detect(std::span<const LocalEstimate> estimates, const Eigen::VectorXd& theta_hat,
                       const Eigen::MatrixXd& sigma_hat, double alpha = 0.05);

/// CSV with header server_id,n_k,d1,d2,theta_flagged,sigma_flagged.
void write_detection_csv(const DetectionReport& report, std::ostream& out);

}  // namespace robagg
