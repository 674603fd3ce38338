#include "robagg/detect.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "robagg/numkit.hpp"

namespace robagg {

namespace {

double quadratic_distance(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& diff,
                          std::int64_t n_k) {
  // diff^T S^{-1} diff = |L^{-1} diff|^2
  const Eigen::VectorXd z = llt.matrixL().solve(diff);
  return std::sqrt(static_cast<double>(n_k) * z.squaredNorm());
}

void check_dims(const LocalEstimate& est, const Eigen::VectorXd& theta_hat) {
  if (est.theta_star.size() != theta_hat.size()) {
    std::ostringstream os;
    os << "server " << est.server_id << ": theta has dimension " << est.theta_star.size()
       << ", aggregate has " << theta_hat.size();
    throw DomainError(os.str());
  }
  if (est.n_k < 1) throw DomainError("server " + std::to_string(est.server_id) + ": n_k < 1");
}

Eigen::LLT<Eigen::MatrixXd> require_pd(const Eigen::MatrixXd& sigma, const char* who) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
    throw DomainError(std::string(who) + ": variance matrix is not square");
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(sigma));
  if (llt.info() != Eigen::Success || !sigma.allFinite())
    throw NotPositiveDefinite(std::string(who) + ": variance matrix is not positive definite",
                              sigma.allFinite() ? min_eigenvalue(symmetrize(sigma)) : NAN);
  return llt;
}

}  // namespace

double mahalanobis_d1(const LocalEstimate& est, const Eigen::VectorXd& theta_hat,
                      const Eigen::MatrixXd& sigma_hat) {
  check_dims(est, theta_hat);
  if (sigma_hat.rows() != theta_hat.size())
    throw DomainError("mahalanobis_d1: sigma_hat dimension does not match theta");
  const auto llt = require_pd(sigma_hat, "mahalanobis_d1");
  return quadratic_distance(llt, est.theta_star - theta_hat, est.n_k);
}

std::optional<double> mahalanobis_d2(const LocalEstimate& est, const Eigen::VectorXd& theta_hat) {
  check_dims(est, theta_hat);
  const Eigen::MatrixXd& s = est.sigma_star;
  if (s.rows() != theta_hat.size() || s.cols() != theta_hat.size() || !s.allFinite())
    return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(s));
  if (llt.info() != Eigen::Success) return std::nullopt;
  return quadratic_distance(llt, est.theta_star - theta_hat, est.n_k);
}

DetectionReport detect(std::span<const LocalEstimate> estimates, const Eigen::VectorXd& theta_hat,
                       const Eigen::MatrixXd& sigma_hat, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("detect: alpha must lie in (0, 1)");
  DetectionReport report;
  report.alpha = alpha;
  report.p = theta_hat.size();
  report.threshold = std::sqrt(chi2_quantile(static_cast<int>(report.p), alpha));
  // Validated once; a bad aggregate variance is not a per-server problem.
  if (sigma_hat.rows() != report.p) throw DomainError("detect: sigma_hat dimension mismatch");
  const auto llt = require_pd(sigma_hat, "detect");

  for (const auto& est : estimates) {
    ServerDetection rec;
    rec.server_id = est.server_id;
    rec.n_k = est.n_k;
    try {
      check_dims(est, theta_hat);
      rec.d1 = quadratic_distance(llt, est.theta_star - theta_hat, est.n_k);
      rec.theta_flagged = *rec.d1 > report.threshold;
      rec.d2 = mahalanobis_d2(est, theta_hat);
      if (!rec.theta_flagged) rec.sigma_flagged = !rec.d2 || *rec.d2 > report.threshold;
    } catch (const Error& e) {
      rec.error = e.what();
    }
    report.servers.push_back(std::move(rec));
  }
  std::stable_sort(report.servers.begin(), report.servers.end(),
                   [](const ServerDetection& a, const ServerDetection& b) {
                     return a.server_id < b.server_id;
                   });
  return report;
}

void write_detection_csv(const DetectionReport& report, std::ostream& out) {
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << "server_id,n_k,d1,d2,theta_flagged,sigma_flagged\n";
  for (const auto& s : report.servers) {
    out << s.server_id << ',' << s.n_k << ',';
    if (s.d1) out << *s.d1;
    else out << "NA";
    out << ',';
    if (s.d2) out << *s.d2;
    else out << "NA";
    out << ',' << (s.theta_flagged ? 1 : 0) << ',' << (s.sigma_flagged ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace robagg
