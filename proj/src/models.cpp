#include "robagg/models.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace robagg {

namespace {

// log(1 + e^eta) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

// 1 / (1 + e^{-eta}), branching on the sign of eta.
double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// sigma(eta) (1 - sigma(eta)).
double sigmoid_slope(double eta) {
  const double e = std::exp(-std::abs(eta));
  return e / ((1.0 + e) * (1.0 + e));
}

void check_dims(const ModelSpec& model, const Dataset& data, const Eigen::VectorXd& theta,
                const char* who) {
  std::ostringstream os;
  if (data.size() == 0) {
    os << who << ": empty dataset";
  } else if (data.x.rows() != data.y.size()) {
    os << who << ": " << data.x.rows() << " covariate rows but " << data.y.size() << " responses";
  } else if (data.dim() != model.p || theta.size() != model.p) {
    os << who << ": dimension mismatch (model p=" << model.p << ", data p=" << data.dim()
       << ", theta p=" << theta.size() << ")";
  } else {
    return;
  }
  throw DomainError(os.str());
}

// Per-observation scalar r_i with grad m(Z_i) = r_i x_i, and weight w_i with
// hessian m(Z_i) = -w_i x_i x_i^T.
struct Residuals {
  Eigen::VectorXd score;
  Eigen::VectorXd curvature;
};

Residuals residuals(ModelKind kind, const Dataset& data, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = data.x * theta;
  Residuals r;
  if (kind == ModelKind::Linear) {
    r.score = 2.0 * (data.y - eta);
    r.curvature = Eigen::VectorXd::Constant(eta.size(), 2.0);
  } else {
    r.score = data.y - eta.unaryExpr(&sigmoid);
    r.curvature = eta.unaryExpr(&sigmoid_slope);
  }
  return r;
}

struct SymInverse {
  Eigen::MatrixXd inverse;
  bool singular = false;
};

// Eigenvalues at or below 1e-13 * scale count as zero. `scale` bounds the
// largest eigenvalue the matrix could have, so that a U which has collapsed
// everywhere is not rescued by inverting its own rounding noise.
SymInverse sym_inverse(const Eigen::MatrixXd& a, double scale) {
  const auto eig = sym_eig(a);
  const double cutoff = 1e-13 * scale;
  Eigen::VectorXd inv(eig.values.size());
  SymInverse out;
  for (Eigen::Index j = 0; j < inv.size(); ++j) {
    if (scale == 0.0 || std::abs(eig.values(j)) <= cutoff) {
      inv(j) = 0.0;
      out.singular = true;
    } else {
      inv(j) = 1.0 / eig.values(j);
    }
  }
  out.inverse = symmetrize(Eigen::MatrixXd(eig.vectors * inv.asDiagonal() * eig.vectors.transpose()));
  return out;
}

double mean_criterion(ModelKind kind, const Dataset& data, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = data.x * theta;
  if (kind == ModelKind::Linear) return -(data.y - eta).squaredNorm() / static_cast<double>(eta.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) total += data.y(i) * eta(i) - softplus(eta(i));
  return total / static_cast<double>(eta.size());
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::Logistic ? "logistic" : "linear";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "logistic") return ModelKind::Logistic;
  if (name == "linear") return ModelKind::Linear;
  throw DomainError("unknown model '" + std::string(name) + "' (expected logistic or linear)");
}

double criterion_term(ModelKind kind, double y, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                      const Eigen::VectorXd& theta) {
  const double eta = (x * theta)(0);
  if (kind == ModelKind::Linear) return -(y - eta) * (y - eta);
  return y * eta - softplus(eta);
}

CriterionEval criterion_eval(const ModelSpec& model, const Dataset& data,
                             const Eigen::VectorXd& theta) {
  check_dims(model, data, theta, "criterion_eval");
  const double n = static_cast<double>(data.size());
  const Residuals r = residuals(model.kind, data, theta);
  CriterionEval out;
  out.value = mean_criterion(model.kind, data, theta);
  out.gradient = data.x.transpose() * r.score / n;
  out.hessian = -(data.x.transpose() * r.curvature.asDiagonal() * data.x) / n;
  out.hessian = symmetrize(out.hessian);
  return out;
}

SandwichEstimate sandwich_variance(const ModelSpec& model, const Dataset& data,
                                   const Eigen::VectorXd& theta, SingularHessian policy) {
  check_dims(model, data, theta, "sandwich_variance");
  const double n = static_cast<double>(data.size());
  const Residuals r = residuals(model.kind, data, theta);

  const Eigen::MatrixXd u =
      symmetrize(Eigen::MatrixXd(data.x.transpose() * r.curvature.asDiagonal() * data.x / n));
  // Centered per-observation gradients; the mean is ~0 at a fitted theta but
  // is subtracted regardless.
  Eigen::MatrixXd g = data.x.array().colwise() * r.score.array();
  const Eigen::RowVectorXd g_mean = g.colwise().mean();
  g.rowwise() -= g_mean;
  const Eigen::MatrixXd v = symmetrize(Eigen::MatrixXd(g.transpose() * g / n));

  // Curvature is at most 1/4 (logistic) or 2 (linear) per observation.
  const double max_curvature = model.kind == ModelKind::Logistic ? 0.25 : 2.0;
  const double design_scale =
      max_curvature * sym_eig(symmetrize(Eigen::MatrixXd(data.x.transpose() * data.x / n))).values(0);
  const SymInverse u_inv = sym_inverse(u, design_scale);
  if (u_inv.singular && policy == SingularHessian::Throw)
    throw RankDeficient("sandwich_variance: negative Hessian U is singular");

  SandwichEstimate out;
  out.sigma = symmetrize(Eigen::MatrixXd(u_inv.inverse * v * u_inv.inverse));
  // A pseudo-inverse of a nearly singular U can overflow.
  if (!out.sigma.allFinite()) return out;
  const auto eig = sym_eig(out.sigma);
  const double top = eig.values.cwiseAbs().maxCoeff();
  out.positive_definite = eig.values.minCoeff() > 1e-12 * top && top > 0.0;
  return out;
}

Eigen::VectorXd least_squares(const Dataset& data) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.x);
  if (qr.rank() < data.dim())
    throw RankDeficient("least_squares: design matrix is rank deficient");
  return qr.solve(data.y);
}

LocalFit fit_local(const ModelSpec& model, const Dataset& data, const FitOptions& options,
                   int server_id) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.p);
  check_dims(model, data, zero, "fit_local");
  if (data.size() < model.p) {
    std::ostringstream os;
    os << "fit_local: " << data.size() << " observations for " << model.p << " parameters";
    throw RankDeficient(os.str());
  }

  LocalFit fit;
  fit.server_id = server_id;
  fit.n_k = data.size();

  if (model.kind == ModelKind::Linear) {
    Eigen::VectorXd theta = least_squares(data);
    CriterionEval eval = criterion_eval(model, data, theta);
    // Iterative refinement against the (constant) Hessian.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-eval.hessian);
    for (int k = 0; k < 3 && eval.gradient.norm() > options.tol; ++k) {
      theta += ldlt.solve(eval.gradient);
      eval = criterion_eval(model, data, theta);
      ++fit.newton_iters;
    }
    fit.theta_hat = theta;
    fit.grad_norm = eval.gradient.norm();
  } else {
    const double ones = data.y.sum();
    if (ones == 0.0 || ones == static_cast<double>(data.size()))
      throw Separation("fit_local: logistic response has a single class");
    for (Eigen::Index i = 0; i < data.size(); ++i)
      if (data.y(i) != 0.0 && data.y(i) != 1.0)
        throw DomainError("fit_local: logistic response must be 0 or 1");

    Eigen::VectorXd theta = zero;
    CriterionEval eval = criterion_eval(model, data, theta);
    int iter = 0;
    while (eval.gradient.norm() > options.tol) {
      if (iter >= options.max_iter)
        throw NonConvergence("fit_local: Newton iteration cap reached", theta, eval.gradient.norm());
      // Under separation the log-likelihood climbs toward 0 as |theta| grows.
      if (eval.value > -1e-8 && theta.norm() > 20.0)
        throw Separation("fit_local: logistic classes are (quasi-)completely separated");
      Eigen::LDLT<Eigen::MatrixXd> ldlt(-eval.hessian);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff()) {
        if (theta.norm() > 20.0)
          throw Separation("fit_local: Hessian vanished while |theta| diverged (separation)");
        throw RankDeficient("fit_local: Hessian is singular");
      }
      const Eigen::VectorXd step = ldlt.solve(eval.gradient);
      // Near the optimum the criterion is flat to rounding; a Newton step
      // this small cannot be improved on.
      if (step.norm() <= 1e-13 * (1.0 + theta.norm())) break;
      const double floor = eval.value - 64.0 * 1e-16 * (1.0 + std::abs(eval.value));
      double t = 1.0;
      Eigen::VectorXd candidate = theta + step;
      double value = mean_criterion(model.kind, data, candidate);
      while (value < floor && t > 1e-10) {
        t *= 0.5;
        candidate = theta + t * step;
        value = mean_criterion(model.kind, data, candidate);
      }
      theta = candidate;
      eval = criterion_eval(model, data, theta);
      ++iter;
    }
    fit.theta_hat = theta;
    fit.newton_iters = iter;
    fit.grad_norm = eval.gradient.norm();
  }

  const SandwichEstimate sandwich = sandwich_variance(model, data, fit.theta_hat);
  fit.sigma_hat = sandwich.sigma;
  fit.sigma_positive_definite = sandwich.positive_definite;
  return fit;
}

}  // namespace robagg
