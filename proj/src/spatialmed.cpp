#include "robagg/spatialmed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "robagg/numkit.hpp"

namespace robagg {

namespace {

void validate(std::span<const WeightedPoint> points) {
  if (points.empty()) throw DomainError("spatial_median: no points");
  const Eigen::Index d = points.front().value.size();
  if (d == 0) throw DomainError("spatial_median: points have dimension 0");
  for (const auto& pt : points) {
    if (pt.value.size() != d) throw DomainError("spatial_median: inconsistent point dimensions");
    if (!(pt.weight > 0.0) || !std::isfinite(pt.weight))
      throw DomainError("spatial_median: weights must be positive and finite");
    if (!pt.value.allFinite()) throw DomainError("spatial_median: non-finite coordinate");
  }
}

double total_weight(std::span<const WeightedPoint> points) {
  double w = 0.0;
  for (const auto& pt : points) w += pt.weight;
  return w;
}

// Weighted median of scalars; when the cumulative weight hits exactly half at
// a point, the median is the whole interval to the next point.
struct MedianInterval {
  double lo;
  double hi;
  std::size_t lo_index;  // index (into the input) of the point at lo
};

MedianInterval weighted_median_1d(const std::vector<double>& t, const std::vector<double>& w) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  const double half = 0.5 * std::accumulate(w.begin(), w.end(), 0.0);
  double cum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    cum += w[order[i]];
    // Merge ties so a repeated value counts as one location.
    if (i + 1 < order.size() && t[order[i + 1]] == t[order[i]]) continue;
    if (std::abs(cum - half) <= 1e-12 * half && i + 1 < order.size())
      return {t[order[i]], t[order[i + 1]], order[i]};
    if (cum > half) return {t[order[i]], t[order[i]], order[i]};
  }
  return {t[order.back()], t[order.back()], order.back()};
}

double coordinate_median(std::span<const WeightedPoint> points, Eigen::Index j) {
  std::vector<double> t;
  std::vector<double> w;
  for (const auto& pt : points) {
    t.push_back(pt.value(j));
    w.push_back(pt.weight);
  }
  const MedianInterval m = weighted_median_1d(t, w);
  return 0.5 * (m.lo + m.hi);
}

double coincidence_radius(const Eigen::VectorXd& at) { return 1e-12 * std::max(1.0, at.norm()); }

// objective(b) - objective(a) without cancellation: a far point contributes
// a huge distance to both terms but only a tiny difference.
double objective_change(std::span<const WeightedPoint> points, const Eigen::VectorXd& a,
                        const Eigen::VectorXd& b) {
  const Eigen::VectorXd step = a - b;
  double change = 0.0;
  for (const auto& pt : points) {
    const double da = (pt.value - a).norm();
    const double db = (pt.value - b).norm();
    if (da + db == 0.0) continue;
    // |x-b|^2 - |x-a|^2 = (a-b).(2x-a-b)
    change += pt.weight * step.dot(2.0 * pt.value - a - b) / (da + db);
  }
  return change;
}

}  // namespace

double spatial_objective(std::span<const WeightedPoint> points, const Eigen::VectorXd& eta) {
  double f = 0.0;
  for (const auto& pt : points) f += pt.weight * (pt.value - eta).norm();
  return f;
}

Eigen::VectorXd spatial_pull(std::span<const WeightedPoint> points, const Eigen::VectorXd& eta) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(eta.size());
  const double radius = coincidence_radius(eta);
  for (const auto& pt : points) {
    const Eigen::VectorXd diff = pt.value - eta;
    const double dist = diff.norm();
    if (dist > radius) r += pt.weight * diff / dist;
  }
  return r;
}

SpatialMedianResult spatial_median(std::span<const WeightedPoint> points,
                                   const SpatialMedianOptions& options) {
  validate(points);
  const Eigen::Index d = points.front().value.size();
  const double w_total = total_weight(points);

  SpatialMedianResult out;
  const Eigen::VectorXd& origin = points.front().value;

  // Collinear (or coincident) configurations reduce to a 1-d weighted median.
  Eigen::VectorXd axis = Eigen::VectorXd::Zero(d);
  double spread = 0.0;
  for (const auto& pt : points) {
    const double len = (pt.value - origin).norm();
    if (len > spread) {
      spread = len;
      axis = (pt.value - origin) / len;
    }
  }
  if (spread == 0.0) {
    out.eta = origin;
    out.anchored = true;
    out.objective = 0.0;
    return out;
  }
  bool collinear = true;
  for (const auto& pt : points) {
    const Eigen::VectorXd diff = pt.value - origin;
    if ((diff - diff.dot(axis) * axis).norm() > 1e-12 * std::max(1.0, spread)) {
      collinear = false;
      break;
    }
  }
  if (collinear) {
    std::vector<double> t;
    std::vector<double> w;
    for (const auto& pt : points) {
      t.push_back((pt.value - origin).dot(axis));
      w.push_back(pt.weight);
    }
    const MedianInterval m = weighted_median_1d(t, w);
    if (m.lo == m.hi) {
      out.eta = points[m.lo_index].value;
      out.anchored = true;
    } else {
      out.eta = origin + 0.5 * (m.lo + m.hi) * axis;
      out.anchored = false;
    }
    out.objective = spatial_objective(points, out.eta);
    return out;
  }

  // A data point is optimal iff the pull of the others does not exceed its
  // own (merged) weight.
  for (const auto& candidate : points) {
    double own = 0.0;
    Eigen::VectorXd pull = Eigen::VectorXd::Zero(d);
    const double radius = coincidence_radius(candidate.value);
    for (const auto& pt : points) {
      const Eigen::VectorXd diff = pt.value - candidate.value;
      const double dist = diff.norm();
      if (dist <= radius) own += pt.weight;
      else pull += pt.weight * diff / dist;
    }
    if (pull.norm() <= own * (1.0 + 1e-12)) {
      out.eta = candidate.value;
      out.anchored = true;
      out.objective = spatial_objective(points, out.eta);
      return out;
    }
  }

  Eigen::VectorXd eta(d);
  for (Eigen::Index j = 0; j < d; ++j) eta(j) = coordinate_median(points, j);
  double objective = spatial_objective(points, eta);

  for (int iter = 0;; ++iter) {
    Eigen::VectorXd pull = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd numer = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
    double denom = 0.0;
    double own = 0.0;
    const double radius = coincidence_radius(eta);
    for (const auto& pt : points) {
      const Eigen::VectorXd diff = pt.value - eta;
      const double dist = diff.norm();
      if (dist <= radius) {
        own += pt.weight;
        continue;
      }
      const double scale = pt.weight / dist;
      pull += scale * diff;
      numer += scale * pt.value;
      denom += scale;
      hess += scale * (Eigen::MatrixXd::Identity(d, d) - diff * diff.transpose() / (dist * dist));
    }

    const double foc = pull.norm() / w_total;
    if (own == 0.0 && foc <= options.tol) {
      out.eta = eta;
      out.iterations = iter;
      out.objective = objective;
      return out;
    }
    if (iter >= options.max_iter) {
      throw NonConvergence("spatial_median: iteration cap reached", eta, foc);
    }

    // Weiszfeld map with the Vardi-Zhang correction at a data point.
    Eigen::VectorXd next = numer / denom;
    if (own > 0.0) {
      const double r = pull.norm();
      const double shrink = r > 0.0 ? std::min(1.0, own / r) : 1.0;
      next = (1.0 - shrink) * next + shrink * eta;
    }
    double change = objective_change(points, eta, next);

    if (own == 0.0) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Eigen::VectorXd newton = eta + ldlt.solve(pull);
        if (newton.allFinite()) {
          const double newton_change = objective_change(points, eta, newton);
          if (newton_change < change) {
            next = newton;
            change = newton_change;
          }
        }
      }
    }
    if (!(change < 0.0)) {
      // Neither step improved: only round-off is left.
      out.eta = eta;
      out.iterations = iter;
      out.objective = objective;
      if (foc <= 1e3 * options.tol) return out;
      throw NonConvergence("spatial_median: stalled before reaching tolerance", eta, foc);
    }
    const double next_objective = spatial_objective(points, next);
    eta = next;
    objective = next_objective;
  }
}

Eigen::MatrixXd repair_sigma(const Eigen::MatrixXd& sigma, double eps) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols())
    throw DomainError("repair_sigma: variance matrix is not square");
  if (!sigma.allFinite()) {
    // No spectral information survives; fall back to the floor itself.
    return Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols()) * eps;
  }
  if (is_symmetric(sigma) && min_eigenvalue(sigma) > 0.0) return sigma;
  return pd_project(symmetrize(sigma), eps);
}

Eigen::MatrixXd aggregate_sigma(std::span<const LocalEstimate> estimates,
                                const SigmaAggregationOptions& options) {
  if (estimates.empty()) throw DomainError("aggregate_sigma: no estimates");
  const Eigen::Index p = estimates.front().sigma_star.rows();
  std::vector<WeightedPoint> points;
  points.reserve(estimates.size());
  for (const auto& e : estimates) {
    if (e.sigma_star.rows() != p || e.sigma_star.cols() != p || p == 0) {
      std::ostringstream os;
      os << "aggregate_sigma: server " << e.server_id << " sent a variance matrix of shape "
         << e.sigma_star.rows() << "x" << e.sigma_star.cols();
      throw DomainError(os.str());
    }
    if (e.n_k < 1) throw DomainError("aggregate_sigma: n_k must be >= 1");
    points.push_back({vech(repair_sigma(e.sigma_star, options.eps)),
                      std::sqrt(static_cast<double>(e.n_k))});
  }
  const SpatialMedianResult median = spatial_median(points, options.median);
  Eigen::MatrixXd sigma = vech_inv(median.eta, p);
  const double smallest = min_eigenvalue(sigma);
  if (!(smallest > 0.0)) {
    std::ostringstream os;
    os << "aggregate_sigma: aggregated variance is not positive definite (eigenvalue " << smallest
       << ")";
    throw NotPositiveDefinite(os.str(), smallest);
  }
  return sigma;
}

}  // namespace robagg
