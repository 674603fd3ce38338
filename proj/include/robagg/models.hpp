#pragma once

// M-estimation problems (logistic and linear regression), local Newton
// fitting and the local sandwich variance estimator U^{-1} V U^{-1}.

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

#include "robagg/numkit.hpp"

namespace robagg {

enum class ModelKind { Logistic, Linear };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::Logistic;
  Eigen::Index p = 2;
};

/// A sequence of observations Z_i = (y_i, x_i): row i of `x` pairs with y(i).
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // n x p

  Eigen::Index size() const { return y.size(); }
  Eigen::Index dim() const { return x.cols(); }
};

struct CriterionEval {
  double value = 0.0;        // n^{-1} sum m(Z_i; theta)
  Eigen::VectorXd gradient;  // exact derivative of value
  Eigen::MatrixXd hessian;
};

/// Per-observation criterion m(Z; theta) for the given model.
double criterion_term(ModelKind kind, double y, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                      const Eigen::VectorXd& theta);

CriterionEval criterion_eval(const ModelSpec& model, const Dataset& data,
                             const Eigen::VectorXd& theta);

struct FitOptions {
  double tol = 1e-10;  // on the gradient norm
  int max_iter = 100;
};

struct LocalFit {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd sigma_hat;
  std::int64_t n_k = 0;
  int server_id = 0;
  int newton_iters = 0;
  double grad_norm = 0.0;
  bool sigma_positive_definite = false;  // false only for degenerate shards
};

struct SandwichEstimate {
  Eigen::MatrixXd sigma;
  bool positive_definite = false;
};

/// How sandwich_variance treats a singular Hessian block U.
enum class SingularHessian {
  Throw,          // RankDeficient
  PseudoInverse,  // Moore-Penrose inverse in place of U^{-1}
};

/// Sigma_k = U^{-1} V U^{-1} at theta, with U = -hessian of the mean criterion
/// and V the centered mean outer product of per-observation gradients.
SandwichEstimate sandwich_variance(const ModelSpec& model, const Dataset& data,
                                   const Eigen::VectorXd& theta,
                                   SingularHessian policy = SingularHessian::Throw);

/// Maximizes the local criterion and attaches the sandwich variance.
/// Linear: closed-form least squares. Logistic: Newton-Raphson with step
/// halving, started at zero.
LocalFit fit_local(const ModelSpec& model, const Dataset& data, const FitOptions& options = {},
                   int server_id = 0);

/// Closed-form least-squares solution of the linear model.
Eigen::VectorXd least_squares(const Dataset& data);

}  // namespace robagg
