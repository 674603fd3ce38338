#include "robagg/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "robagg/numkit.hpp"

namespace robagg {

namespace {

void validate(std::span<const LocalEstimate> estimates, const char* who) {
  if (estimates.empty()) throw DomainError(std::string(who) + ": no estimates");
  const Eigen::Index p = estimates.front().theta_star.size();
  for (const auto& e : estimates) {
    if (e.n_k < 1) {
      std::ostringstream os;
      os << who << ": server " << e.server_id << " reports n_k=" << e.n_k;
      throw DomainError(os.str());
    }
    if (e.theta_star.size() != p || p == 0 ||
        (e.sigma_star.size() != 0 && (e.sigma_star.rows() != p || e.sigma_star.cols() != p))) {
      std::ostringstream os;
      os << who << ": server " << e.server_id << " has inconsistent dimensions";
      throw DomainError(os.str());
    }
  }
}

double median_of(std::vector<double> values) {
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace

double huber_b(double c) {
  if (std::isinf(c)) return 1.0;
  return 2.0 * std_normal(c).cdf - 1.0;
}

double huber_sigma2(double c) {
  if (std::isinf(c)) return 1.0;
  const double b = huber_b(c);
  return b - 2.0 * c * std_normal(c).pdf + c * c * (1.0 - b);
}

double tau_c(double c) {
  if (!(c > 0.0)) throw DomainError("tau_c: c must be positive");
  if (std::isinf(c)) return 1.0;
  const double b = huber_b(c);
  return b * b / huber_sigma2(c);
}

std::int64_t total_size(std::span<const LocalEstimate> estimates) {
  std::int64_t n = 0;
  for (const auto& e : estimates) n += e.n_k;
  return n;
}

WeightedAverage weighted_average(std::span<const LocalEstimate> estimates) {
  validate(estimates, "weighted_average");
  const double total = static_cast<double>(total_size(estimates));
  const Eigen::Index p = estimates.front().theta_star.size();
  const bool with_sigma = std::all_of(estimates.begin(), estimates.end(),
                                      [](const LocalEstimate& e) { return e.sigma_star.size() != 0; });
  WeightedAverage out;
  out.theta_bar = Eigen::VectorXd::Zero(p);
  out.sigma_bar = Eigen::MatrixXd::Zero(with_sigma ? p : 0, with_sigma ? p : 0);
  for (const auto& e : estimates) {
    const double w = static_cast<double>(e.n_k) / total;
    out.theta_bar += w * e.theta_star;
    if (with_sigma) out.sigma_bar += w * e.sigma_star;
  }
  return out;
}

Eigen::VectorXd huber_estimating_function(std::span<const LocalEstimate> estimates,
                                          const Eigen::MatrixXd& sigma_inv_sqrt,
                                          const Eigen::VectorXd& theta, double c) {
  const double total = static_cast<double>(total_size(estimates));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(theta.size());
  for (const auto& e : estimates) {
    const double root_n = std::sqrt(static_cast<double>(e.n_k));
    const Eigen::VectorXd u = sigma_inv_sqrt * (root_n * (e.theta_star - theta));
    const double w = static_cast<double>(e.n_k) / total / root_n;
    for (Eigen::Index j = 0; j < u.size(); ++j) f(j) += w * huber_psi(u(j), c);
  }
  return f;
}

AggregationResult huber_aggregate(std::span<const LocalEstimate> estimates,
                                  const Eigen::MatrixXd& sigma_hat, const HuberConfig& config) {
  validate(estimates, "huber_aggregate");
  if (!(config.c > 0.0)) throw DomainError("huber_aggregate: c must be positive");
  const Eigen::Index p = estimates.front().theta_star.size();
  if (sigma_hat.rows() != p || sigma_hat.cols() != p)
    throw DomainError("huber_aggregate: sigma_hat dimension does not match theta");

  const std::int64_t total_n = total_size(estimates);
  AggregationResult out;
  out.sigma_used = symmetrize(sigma_hat);

  if (std::isinf(config.c)) {
    out.theta_hat = weighted_average(estimates).theta_bar;
    out.tau = 1.0;
    out.se = standard_errors(out.sigma_used, total_n, out.tau);
    return out;
  }

  Eigen::MatrixXd whiten;
  try {
    whiten = inv_sqrt_pd(out.sigma_used);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(std::string("huber_aggregate: sigma_hat must be positive definite; "
                                          "repair it with pd_project first (") + e.what() + ")",
                              e.eigenvalue());
  }
  const Eigen::MatrixXd unwhiten = whiten.inverse();
  const double c = config.c;
  const double total = static_cast<double>(total_n);

  // After whitening, phi = W theta, the equations separate by coordinate:
  //   F_j(phi_j) = sum_k w_k psi_c(sqrt(n_k) (a_kj - phi_j)),  a_k = W theta_k,
  // each nonincreasing and piecewise linear in phi_j. The Newton Jacobian of
  // the full system is -(sum_k (n_k/N) D_k) W with D_k the unclipped-coordinate
  // indicator, so a Newton step is a per-coordinate Newton step in phi.
  const auto k_count = static_cast<Eigen::Index>(estimates.size());
  Eigen::MatrixXd anchors(p, k_count);
  Eigen::VectorXd root_n(k_count);
  Eigen::VectorXd weight(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto& e = estimates[static_cast<std::size_t>(k)];
    anchors.col(k) = whiten * e.theta_star;
    root_n(k) = std::sqrt(static_cast<double>(e.n_k));
    weight(k) = static_cast<double>(e.n_k) / total / root_n(k);
  }

  // Robust start: coordinate-wise median of the received estimates.
  Eigen::VectorXd start(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(static_cast<std::size_t>(k_count));
    for (Eigen::Index k = 0; k < k_count; ++k)
      col[static_cast<std::size_t>(k)] = estimates[static_cast<std::size_t>(k)].theta_star(j);
    start(j) = median_of(std::move(col));
  }
  Eigen::VectorXd phi = whiten * start;

  Eigen::VectorXd lo = anchors.rowwise().minCoeff();
  Eigen::VectorXd hi = anchors.rowwise().maxCoeff();
  phi = phi.cwiseMax(lo).cwiseMin(hi);

  auto coordinate = [&](Eigen::Index j, double at, double& slope) {
    double f = 0.0;
    slope = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const double u = root_n(k) * (anchors(j, k) - at);
      f += weight(k) * huber_psi(u, c);
      if (std::abs(u) <= c) slope += weight(k) * root_n(k);
    }
    return f;
  };

  int iter = 0;
  Eigen::VectorXd f(p);
  Eigen::VectorXd slope(p);
  for (;;) {
    for (Eigen::Index j = 0; j < p; ++j) f(j) = coordinate(j, phi(j), slope(j));
    out.residual_norm = f.norm();
    if (out.residual_norm <= config.tol) break;
    if (iter >= config.max_iter)
      throw NonConvergence("huber_aggregate: iteration cap reached", unwhiten * phi,
                           out.residual_norm);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (f(j) == 0.0) continue;
      // F_j is nonincreasing: a positive value means the root lies above.
      if (f(j) > 0.0) lo(j) = phi(j); else hi(j) = phi(j);
      double next = slope(j) > 0.0 ? phi(j) + f(j) / slope(j) : 0.5 * (lo(j) + hi(j));
      // Safeguard: stay inside the bracket, bisect when Newton leaves it or
      // when every term of this coordinate is clipped.
      if (!(next > lo(j) && next < hi(j))) next = 0.5 * (lo(j) + hi(j));
      phi(j) = next;
    }
    ++iter;
  }

  // Finish on the exact root: F_j is linear between consecutive breakpoints
  // a_kj +- c / sqrt(n_k), so locate the piece holding the sign change next to
  // the Newton iterate and solve it. This removes the tolerance-sized slack
  // that would otherwise depend on input order and offset.
  std::vector<double> breaks(2 * static_cast<std::size_t>(k_count));
  for (Eigen::Index j = 0; j < p; ++j) {
    if (f(j) == 0.0) continue;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      breaks[2 * static_cast<std::size_t>(k)] = anchors(j, k) - c / root_n(k);
      breaks[2 * static_cast<std::size_t>(k) + 1] = anchors(j, k) + c / root_n(k);
    }
    std::sort(breaks.begin(), breaks.end());
    double unused = 0.0;
    auto value = [&](std::size_t i) { return coordinate(j, breaks[i], unused); };
    // Largest breakpoint not above the root; F(breaks.front()) > 0 > F(breaks.back()).
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(breaks.begin(), breaks.end(), phi(j)) - breaks.begin());
    i = std::clamp<std::size_t>(i, 1, breaks.size() - 1) - 1;
    while (i > 0 && value(i) < 0.0) --i;
    while (i + 2 < breaks.size() && value(i + 1) >= 0.0) ++i;
    const double f_lo = value(i), f_hi = value(i + 1);
    if (!(f_lo >= 0.0 && f_hi <= 0.0 && f_lo > f_hi)) continue;
    // With very large c the piece is wide and interpolation loses digits.
    const double root = breaks[i] + f_lo / (f_lo - f_hi) * (breaks[i + 1] - breaks[i]);
    if (std::abs(coordinate(j, root, unused)) <= std::abs(f(j))) phi(j) = root;
  }

  out.theta_hat = unwhiten * phi;
  // Report the residual of the equations in the original parametrization.
  out.residual_norm = huber_estimating_function(estimates, whiten, out.theta_hat, c).norm();
  out.iterations = iter;
  out.tau = tau_c(c);
  out.se = standard_errors(out.sigma_used, total_n, out.tau);
  return out;
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& sigma, std::int64_t total_n, double tau) {
  if (total_n < 1) throw DomainError("standard_errors: N must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("standard_errors: tau must lie in (0, 1]");
  if (sigma.rows() != sigma.cols()) throw DomainError("standard_errors: sigma is not square");
  const Eigen::VectorXd diag = sigma.diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite())
    throw DomainError("standard_errors: sigma has a nonpositive diagonal entry");
  return (diag / (static_cast<double>(total_n) * tau)).cwiseSqrt();
}

}  // namespace robagg
