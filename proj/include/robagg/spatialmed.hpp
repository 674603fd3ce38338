#pragma once

// Weighted spatial median
//
//   eta_S = argmin_eta sum_k w_k || x_k - eta ||_2
//
// and its use to aggregate local variance matrices through vech(.).

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "robagg/aggregate.hpp"

namespace robagg {

struct WeightedPoint {
  Eigen::VectorXd value;
  double weight = 1.0;
};

struct SpatialMedianResult {
  Eigen::VectorXd eta;
  int iterations = 0;
  double objective = 0.0;
  bool anchored = false;  // eta coincides with an input point
};

struct SpatialMedianOptions {
  double tol = 1e-10;  // on |first-order condition| / sum of weights
  int max_iter = 500;
};

/// sum_k w_k ||x_k - eta||.
double spatial_objective(std::span<const WeightedPoint> points, const Eigen::VectorXd& eta);

/// Weighted sum of unit vectors toward eta from the points that do not
/// coincide with it (the negative gradient of the objective).
Eigen::VectorXd spatial_pull(std::span<const WeightedPoint> points, const Eigen::VectorXd& eta);

/// Modified Weiszfeld iteration (Vardi-Zhang anchor correction) with Newton
/// polishing. Collinear inputs, including d = 1, are solved exactly as a
/// weighted 1-d median; a non-unique minimizer (flat segment) returns the
/// segment midpoint with anchored = false.
SpatialMedianResult spatial_median(std::span<const WeightedPoint> points,
                                   const SpatialMedianOptions& options = {});

struct SigmaAggregationOptions {
  double eps = 1e-5;  // eigenvalue floor used to repair non-PD inputs
  SpatialMedianOptions median;
};

/// Symmetrize-then-clip repair applied to one received variance matrix.
/// Returns the input unchanged when it is symmetric and positive definite.
Eigen::MatrixXd repair_sigma(const Eigen::MatrixXd& sigma, double eps);

/// Spatial median of vech(sigma_k) with weights sqrt(n_k), after repairing
/// every non-PD or asymmetric input. The result is positive definite.
Eigen::MatrixXd aggregate_sigma(std::span<const LocalEstimate> estimates,
                                const SigmaAggregationOptions& options = {});

}  // namespace robagg
