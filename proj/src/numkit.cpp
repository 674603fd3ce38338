#include "robagg/numkit.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>

namespace robagg {

NormalEval std_normal(double u) {
  NormalEval out;
  out.pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  out.cdf = 0.5 * std::erfc(-u / std::numbers::sqrt2);
  return out;
}

double chi2_upper_tail(int dof, double t) {
  if (dof < 1) throw DomainError("chi2_upper_tail: dof must be >= 1");
  if (t <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * t);
}

double chi2_quantile(int dof, double alpha) {
  if (dof < 1) throw DomainError("chi2_quantile: dof must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("chi2_quantile: alpha must lie in (0, 1)");

  const double a = 0.5 * dof;
  // Increasing in t with its root at the quantile. Work with whichever tail
  // is small so that alpha close to 0 or 1 keeps full relative precision.
  const bool lower = alpha > 0.5;
  auto f = [&](double t) {
    return lower ? boost::math::gamma_p(a, 0.5 * t) - (1.0 - alpha)
                 : alpha - boost::math::gamma_q(a, 0.5 * t);
  };
  auto density = [&](double t) { return 0.5 * boost::math::gamma_p_derivative(a, 0.5 * t); };

  // Wilson-Hilferty start.
  const double k = dof;
  const double z = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * alpha);  // upper quantile of N(0,1)
  const double h = 2.0 / (9.0 * k);
  double t = k * std::pow(std::max(1.0 - h - z * std::sqrt(h), 1e-3), 3.0);

  double lo = 0.0;
  double hi = std::max(2.0 * t, k + 10.0);
  while (f(hi) < 0.0) hi *= 2.0;
  if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);

  for (int iter = 0; iter < 400; ++iter) {
    const double ft = f(t);
    if (ft == 0.0) return t;
    if (ft < 0.0) lo = t; else hi = t;
    const double d = density(t);
    double next = (d > 0.0 && std::isfinite(d)) ? t - ft / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(t, 1e-300)) return next;
    t = next;
    if (hi - lo <= 1e-15 * hi) return 0.5 * (lo + hi);
  }
  return t;
}

}  // namespace robagg
