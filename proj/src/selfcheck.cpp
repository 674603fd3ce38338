#include "robagg/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "robagg/aggregate.hpp"
#include "robagg/distsim.hpp"
#include "robagg/message.hpp"
#include "robagg/models.hpp"
#include "robagg/numkit.hpp"
#include "robagg/spatialmed.hpp"

namespace robagg {

namespace {

Eigen::MatrixXd random_pd(std::mt19937_64& rng, Eigen::Index p) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(p, p);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return symmetrize(Eigen::MatrixXd(a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p)));
}

CheckResult check(const std::string& name, const std::function<std::string()>& body) {
  CheckResult r;
  r.name = name;
  try {
    r.detail = body();
    r.ok = r.detail.empty();
  } catch (const std::exception& e) {
    r.detail = std::string("threw: ") + e.what();
  }
  return r;
}

std::string worst(const char* what, double value, double limit) {
  if (value <= limit) return {};
  std::ostringstream os;
  os << what << " " << value << " exceeds " << limit;
  return os.str();
}

}  // namespace

std::vector<CheckResult> run_self_checks() {
  std::vector<CheckResult> out;

  out.push_back(check("vech round trip", [] {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
      const Eigen::MatrixXd a = random_pd(rng, 1 + t % 6);
      if (vech_inv(vech(a), a.rows()) != a) return std::string("mismatch");
    }
    return std::string();
  }));

  out.push_back(check("inverse square root", [] {
    std::mt19937_64 rng(2);
    double err = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Eigen::MatrixXd a = random_pd(rng, 1 + t % 6);
      const Eigen::MatrixXd b = inv_sqrt_pd(a);
      err = std::max(err, (b * a * b - Eigen::MatrixXd::Identity(a.rows(), a.cols())).cwiseAbs().maxCoeff());
    }
    return worst("max |BAB - I|", err, 1e-8);
  }));

  out.push_back(check("gradient and Hessian vs finite differences", [] {
    double err = 0.0;
    for (const ModelKind kind : {ModelKind::Logistic, ModelKind::Linear}) {
      const Eigen::Vector3d theta0(0.5, -1.0, 0.25);
      const Dataset data = generate_dataset(kind, theta0, 200, 3);
      const ModelSpec spec{kind, 3};
      const Eigen::Vector3d at(0.3, -0.7, 0.1);
      const CriterionEval e = criterion_eval(spec, data, at);
      const double h = 1e-5;
      for (Eigen::Index j = 0; j < 3; ++j) {
        Eigen::VectorXd up = at, down = at;
        up(j) += h;
        down(j) -= h;
        const CriterionEval eu = criterion_eval(spec, data, up), ed = criterion_eval(spec, data, down);
        err = std::max(err, std::abs((eu.value - ed.value) / (2 * h) - e.gradient(j)) /
                                std::max(1.0, std::abs(e.gradient(j))));
        const Eigen::VectorXd col = (eu.gradient - ed.gradient) / (2 * h);
        err = std::max(err, (col - e.hessian.col(j)).cwiseAbs().maxCoeff() /
                                std::max(1.0, e.hessian.cwiseAbs().maxCoeff()));
      }
    }
    return worst("max relative error", err, 1e-6);
  }));

  out.push_back(check("message encode/decode", [] {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1e3);
    for (int t = 0; t < 1000; ++t) {
      LocalEstimate est;
      const Eigen::Index p = 1 + t % 5;
      est.server_id = t;
      est.n_k = 1 + t * 7;
      est.theta_star.resize(p);
      for (Eigen::Index j = 0; j < p; ++j) est.theta_star(j) = normal(rng);
      est.sigma_star = random_pd(rng, p);
      const LocalEstimate back = decode_message(encode_message(est));
      if (back.server_id != est.server_id || back.n_k != est.n_k ||
          back.theta_star != est.theta_star || back.sigma_star != est.sigma_star)
        return std::string("round trip changed the estimate");
    }
    return std::string();
  }));

  out.push_back(check("tau_c reference values", [] {
    const double err = std::max({std::abs(tau_c(1.345) - 0.950), std::abs(tau_c(0.9818) - 0.900),
                                 std::abs(tau_c(1.5) - 0.964), std::abs(tau_c(1e-4) - 2.0 / M_PI)});
    return worst("max deviation", err, 1e-3);
  }));

  out.push_back(check("Huber with c = inf is the weighted average", [] {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    double err = 0.0;
    for (int t = 0; t < 50; ++t) {
      const Eigen::Index p = 1 + t % 4;
      std::vector<LocalEstimate> ests;
      for (int k = 0; k < 3 + t % 10; ++k) {
        LocalEstimate e{k + 1, 10 + 13 * k, Eigen::VectorXd(p), random_pd(rng, p)};
        for (Eigen::Index j = 0; j < p; ++j) e.theta_star(j) = normal(rng);
        ests.push_back(e);
      }
      const auto h = huber_aggregate(ests, random_pd(rng, p), HuberConfig{kHuberInfinity});
      err = std::max(err, (h.theta_hat - weighted_average(ests).theta_bar).cwiseAbs().maxCoeff());
    }
    return worst("max gap", err, 1e-8);
  }));

  out.push_back(check("aggregated variance is positive definite", [] {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal(0.0, 10.0);
    for (int t = 0; t < 100; ++t) {
      const Eigen::Index p = 1 + t % 4;
      std::vector<LocalEstimate> ests;
      for (int k = 0; k < 5 + t % 6; ++k) {
        Eigen::MatrixXd s = random_pd(rng, p);
        if (k < 2) {
          Eigen::MatrixXd junk(p, p);
          for (Eigen::Index i = 0; i < junk.size(); ++i) junk.data()[i] = normal(rng);
          s = junk;
        }
        ests.push_back({k + 1, 100, Eigen::VectorXd::Zero(p), s});
      }
      if (!(min_eigenvalue(aggregate_sigma(ests)) > 0.0)) return std::string("non-PD aggregate");
    }
    return std::string();
  }));

  out.push_back(check("chi-squared quantile inverts the tail", [] {
    double err = 0.0;
    for (int dof = 1; dof <= 30; ++dof)
      for (double a : {0.001, 0.05, 0.5, 0.95})
        err = std::max(err, std::abs(chi2_upper_tail(dof, chi2_quantile(dof, a)) - a) / a);
    return worst("max relative error", err, 1e-9);
  }));

  return out;
}

}  // namespace robagg
