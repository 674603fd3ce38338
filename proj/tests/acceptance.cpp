// Acceptance runner. With no argument every criterion runs; with a number
// only that one. Prints one line per criterion and exits nonzero on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "robagg/aggregate.hpp"
#include "robagg/distsim.hpp"
#include "robagg/message.hpp"
#include "robagg/models.hpp"
#include "robagg/numkit.hpp"
#include "robagg/spatialmed.hpp"

using namespace robagg;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<LocalEstimate> random_estimates(std::mt19937_64& rng, int servers, Eigen::Index p) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> size(1, 1000);
  std::vector<LocalEstimate> out;
  for (int k = 0; k < servers; ++k) {
    LocalEstimate e{k + 1, size(rng), Eigen::VectorXd(p), oracle::random_spd(rng, p)};
    for (Eigen::Index j = 0; j < p; ++j) e.theta_star(j) = 3 * normal(rng);
    out.push_back(e);
  }
  return out;
}

// Cache of the clean study so criteria 3 and 8 share one run.
const StudyMetrics& clean_study() {
  static const StudyMetrics m = [] {
    StudyConfig cfg;
    return run_study(cfg);
  }();
  return m;
}

Outcome efficiency_constants() {
  Outcome o;
  const double cases[][2] = {{1.345, 0.950}, {0.9818, 0.900}, {1.5, 0.964}, {1e-4, 2.0 / M_PI}};
  for (const auto& c : cases) {
    const double t = tau_c(c[0]);
    o.require(std::abs(t - c[1]) <= 1e-3, "tau(" + fmt("%g", c[0]) + ")=" + fmt("%.6f", t));
  }
  return o;
}

Outcome reduction_property() {
  std::mt19937_64 rng(2024);
  double worst_inf = 0.0, worst_huge = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto est = random_estimates(rng, 1 + static_cast<int>(rng() % 50), 1 + static_cast<Eigen::Index>(rng() % 5));
    const Eigen::Index p = est.front().theta_star.size();
    const Eigen::MatrixXd s = oracle::random_spd(rng, p);
    const Eigen::VectorXd w = weighted_average(est).theta_bar;
    worst_inf = std::max(worst_inf, (huber_aggregate(est, s, {kHuberInfinity}).theta_hat - w).cwiseAbs().maxCoeff());
    worst_huge = std::max(worst_huge, (huber_aggregate(est, s, {1e12}).theta_hat - w).cwiseAbs().maxCoeff());
  }
  Outcome o;
  o.require(worst_inf <= 1e-8, "max |diff| c=inf " + fmt("%.2e", worst_inf));
  o.require(worst_huge <= 1e-8, "c=1e12 " + fmt("%.2e", worst_huge));
  return o;
}

Outcome clean_coverage() {
  const StudyMetrics& m = clean_study();
  Outcome o;
  for (std::size_t j = 0; j < m.huber.size(); ++j) {
    o.require(m.huber[j].cp >= 0.91 && m.huber[j].cp <= 0.98, "CP" + std::to_string(j + 1) + "=" + fmt("%.3f", m.huber[j].cp));
    o.require(m.re[j] >= 0.90 && m.re[j] <= 1.00, "RE" + std::to_string(j + 1) + "=" + fmt("%.3f", m.re[j]));
  }
  o.require(m.failed == 0, "failed=" + std::to_string(m.failed));
  return o;
}

Outcome omniscient_study() {
  StudyConfig cfg;
  cfg.contamination.kind = ContaminationKind::Omniscient;
  Outcome o;
  o.require(cfg.contamination.resolved_count(cfg.servers) == 2, "count=2");
  const StudyMetrics m = run_study(cfg);
  o.require(m.hit_rate && *m.hit_rate == 1.0, "HR=" + (m.hit_rate ? fmt("%.3f", *m.hit_rate) : std::string("NA")));
  for (std::size_t j = 0; j < m.huber.size(); ++j) {
    const auto n = std::to_string(j + 1);
    o.require(m.huber[j].cp >= 0.90 && m.huber[j].cp <= 0.98, "huber CP" + n + "=" + fmt("%.3f", m.huber[j].cp));
    o.require(m.wavg[j].cp <= 0.05, "wavg CP" + n + "=" + fmt("%.3f", m.wavg[j].cp));
  }
  return o;
}

Outcome pd_guarantee() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 5.0);
  int bad = 0;
  double smallest = 1e300;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index p = 1 + t % 5;
    const int k = 1 + static_cast<int>(rng() % 50);
    std::vector<LocalEstimate> est;
    for (int i = 0; i < k; ++i) {
      Eigen::MatrixXd s = oracle::random_spd(rng, p, 1e-3);
      if (t % 2 == 1 && i < (k + 3) / 4)
        for (Eigen::Index j = 0; j < s.size(); ++j) s.data()[j] = normal(rng);
      est.push_back({i + 1, 10 + i, Eigen::VectorXd::Zero(p), s});
    }
    const double lo = min_eigenvalue(aggregate_sigma(est));
    smallest = std::min(smallest, lo);
    if (!(lo > 0.0)) ++bad;
  }
  Outcome o;
  o.require(bad == 0, std::to_string(bad) + "/1000 not PD, min eig " + fmt("%.2e", smallest));
  return o;
}

Outcome spatial_median_oracle() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> weight(0.5, 3.0);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int k = 2 + t % 6;
    const Eigen::Index d = 1 + t % 3;
    std::vector<WeightedPoint> pts;
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd v(d);
      for (Eigen::Index j = 0; j < d; ++j) v(j) = normal(rng);
      pts.push_back({v, weight(rng)});
    }
    const auto f = [&](const Eigen::VectorXd& e) { return spatial_objective(pts, e); };
    double best = 1e300;
    for (const auto& p : pts) best = std::min(best, f(oracle::nelder_mead(f, p.value, 0.5)));
    worst = std::max(worst, std::abs(spatial_median(pts).objective - best));
  }
  o.require(worst <= 1e-6, "max objective gap " + fmt("%.2e", worst));

  // Error of the median of K local means, each from n_k = N/K draws.
  const int servers = 10, reps = 400;
  const Eigen::Vector3d eta0(1.0, -0.5, 2.0);
  std::vector<double> err;
  for (double total : {1e3, 1e4, 1e5}) {
    const double sd = 1.0 / std::sqrt(total / servers);
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::vector<WeightedPoint> pts;
      for (int i = 0; i < servers; ++i)
        pts.push_back({eta0 + sd * Eigen::Vector3d(normal(rng), normal(rng), normal(rng)), total / servers});
      sum += (spatial_median(pts).eta - eta0).norm();
    }
    err.push_back(sum / reps);
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double ratio = err[i] / err[i + 1];
    o.require(ratio >= std::sqrt(10.0) / 2 && ratio <= 2 * std::sqrt(10.0), "error ratio " + fmt("%.3f", ratio));
  }
  return o;
}

Outcome sandwich_check() {
  const Dataset data = generate_dataset(ModelKind::Linear, Eigen::Vector2d(2, 1), 100000, 7);
  const auto fit = fit_local({ModelKind::Linear, 2}, data);
  const double dev = (fit.sigma_hat - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
  Outcome o;
  o.require(dev <= 0.05, "max |Sigma - I| " + fmt("%.4f", dev));
  return o;
}

Outcome detection_calibration() {
  Outcome o;
  o.require(clean_study().clean_flag_rate <= 0.10, "flag rate " + fmt("%.4f", clean_study().clean_flag_rate));
  return o;
}

Outcome kernel_properties() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  int failures = 0, checks = 0;
  auto tally = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };

  for (ModelKind kind : {ModelKind::Logistic, ModelKind::Linear}) {
    const ModelSpec spec{kind, 3};
    const Eigen::VectorXd th0 = Eigen::Vector3d(0.5, -1, 0.25);
    const Dataset data = generate_dataset(kind, th0, 300, 11);
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd th = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
      const auto value = [&](const Eigen::VectorXd& v) { return criterion_eval(spec, data, v).value; };
      const Eigen::VectorXd g = criterion_eval(spec, data, th).gradient;
      const Eigen::VectorXd fd = oracle::fd_gradient(value, th, 1e-5);
      tally((g - fd).norm() <= 1e-6 * std::max(1.0, g.norm()));
    }
  }

  for (int t = 0; t < 200; ++t) {
    const Eigen::Index p = 1 + t % 6;
    const Eigen::MatrixXd a = oracle::random_spd(rng, p, 0.1);
    const Eigen::MatrixXd r = inv_sqrt_pd(a);
    tally((r * a * r - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() <= 1e-8);
    const Eigen::MatrixXd s = symmetrize(Eigen::MatrixXd::Random(p, p).eval());
    tally(vech_inv(vech(s), p) == s);
  }

  std::uniform_real_distribution<double> expo(-200, 200);
  for (int t = 0; t < 2000; ++t) {
    const Eigen::Index p = 1 + t % 5;
    LocalEstimate e{t, 1 + t, Eigen::VectorXd(p), Eigen::MatrixXd(p, p)};
    for (Eigen::Index j = 0; j < p; ++j) e.theta_star(j) = normal(rng) * std::pow(10.0, expo(rng));
    e.sigma_star = symmetrize(Eigen::MatrixXd::Random(p, p).eval());
    const LocalEstimate back = decode_message(encode_message(e));
    tally(back.server_id == e.server_id && back.n_k == e.n_k && back.theta_star == e.theta_star &&
          back.sigma_star == e.sigma_star);
  }
  Outcome o;
  o.require(failures == 0, std::to_string(failures) + " failures in " + std::to_string(checks) + " checks");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"efficiency constants", efficiency_constants},
      {"reduction to weighted average", reduction_property},
      {"clean study coverage and efficiency", clean_coverage},
      {"omniscient contamination study", omniscient_study},
      {"aggregated variance positive definite", pd_guarantee},
      {"spatial median oracle and rate", spatial_median_oracle},
      {"linear sandwich variance", sandwich_check},
      {"detection calibration", detection_calibration},
      {"numerical kernel properties", kernel_properties},
  };
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria.size());
    return 2;
  }
  bool all_ok = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i) + 1) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu: %s %s (%s) [%.1fs]\n", i + 1, o.ok ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    all_ok = all_ok && o.ok;
  }
  return all_ok ? 0 : 1;
}
