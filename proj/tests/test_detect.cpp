#include <doctest.h>

#include <sstream>

#include "robagg/detect.hpp"
#include "robagg/distsim.hpp"
#include "robagg/error.hpp"
#include "robagg/numkit.hpp"
#include "robagg/spatialmed.hpp"

using namespace robagg;

namespace {

LocalEstimate at(int id, std::int64_t n, Eigen::Vector2d theta, Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity()) {
  return {id, n, theta, sigma};
}

}  // namespace

TEST_CASE("mahalanobis_d1") {
  const Eigen::Vector2d th(2, 1);
  CHECK(mahalanobis_d1(at(1, 100, th), th, Eigen::Matrix2d::Identity()) == 0.0);
  CHECK(mahalanobis_d1(at(1, 100, th + Eigen::Vector2d(0.1, 0)), th, Eigen::Matrix2d::Identity()) ==
        doctest::Approx(1.0));
  CHECK(mahalanobis_d1(at(1, 4, th + Eigen::Vector2d(1, 1)), th, Eigen::Matrix2d(Eigen::Vector2d(4, 1).asDiagonal())) ==
        doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(mahalanobis_d1(at(1, 4, th), th, Eigen::Matrix2d(Eigen::Vector2d(1, -1).asDiagonal())),
                  NotPositiveDefinite);

  // Joint rescaling leaves d1 unchanged; moving outward increases it.
  const Eigen::Matrix2d s = (Eigen::Matrix2d() << 2, 0.3, 0.3, 1).finished();
  const Eigen::Vector2d diff(0.2, -0.1);
  const double base = mahalanobis_d1(at(1, 50, th + diff), th, s);
  CHECK(mahalanobis_d1(at(1, 50, th + std::sqrt(9.0) * diff), th, 9.0 * s) == doctest::Approx(base));
  double prev = 0.0;
  for (double scale = 0.1; scale < 5; scale += 0.3) {
    const double d = mahalanobis_d1(at(1, 50, th + scale * diff), th, s);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("mahalanobis_d2") {
  const Eigen::Vector2d th(2, 1);
  CHECK(*mahalanobis_d2(at(1, 100, th, 3 * Eigen::Matrix2d::Identity()), th) == 0.0);
  CHECK(*mahalanobis_d2(at(1, 100, th + Eigen::Vector2d(0.1, 0)), th) == doctest::Approx(1.0));
  CHECK(*mahalanobis_d2(at(1, 100, th + Eigen::Vector2d(0.1, 0), 4 * Eigen::Matrix2d::Identity()), th) ==
        doctest::Approx(0.5));
  CHECK_FALSE(mahalanobis_d2(at(1, 100, th, Eigen::Matrix2d::Zero()), th).has_value());
}

TEST_CASE("detect gating and flags") {
  const Eigen::Vector2d th(2, 1);
  std::vector<LocalEstimate> clean;
  for (int k = 5; k >= 1; --k) clean.push_back(at(k, 100, th));
  const auto r = detect(clean, th, Eigen::Matrix2d::Identity());
  CHECK(r.threshold == doctest::Approx(std::sqrt(chi2_quantile(2, 0.05))));
  for (std::size_t i = 0; i < r.servers.size(); ++i) {
    CHECK(r.servers[i].server_id == static_cast<int>(i) + 1);
    CHECK_FALSE(r.servers[i].theta_flagged);
    CHECK_FALSE(r.servers[i].sigma_flagged);
  }

  std::vector<LocalEstimate> mixed = {at(1, 100, Eigen::Vector2d(-1e6, -1e6)),
                                      at(2, 100, th + Eigen::Vector2d(0.15, 0), Eigen::Matrix2d::Identity() / 100),
                                      at(3, 100, th, Eigen::Matrix2d::Zero()),
                                      at(4, 100, th + Eigen::Vector2d(0.05, 0)),
                                      {5, 100, Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity()}};
  const auto m = detect(mixed, th, Eigen::Matrix2d::Identity());
  CHECK(m.servers[0].theta_flagged);
  CHECK_FALSE(m.servers[0].sigma_flagged);
  CHECK_FALSE(m.servers[1].theta_flagged);  // d1 = 1.5
  CHECK(m.servers[1].sigma_flagged);        // d2 = 15
  CHECK(m.servers[2].sigma_flagged);        // singular sigma
  CHECK_FALSE(m.servers[2].d2.has_value());
  CHECK_FALSE(m.servers[3].theta_flagged);
  CHECK_FALSE(m.servers[3].sigma_flagged);
  CHECK_FALSE(m.servers[4].error.empty());
  for (const auto& s : m.servers) CHECK_FALSE((s.theta_flagged && s.sigma_flagged));

  CHECK_THROWS_AS(detect(clean, th, Eigen::Matrix2d::Identity(), 1.5), DomainError);
}

TEST_CASE("detect flags an omniscient server in a simulated replicate") {
  const ModelSpec spec{ModelKind::Logistic, 2};
  const Dataset data = generate_dataset(ModelKind::Logistic, Eigen::Vector2d(2, 1), 20000, 51);
  const auto shards = partition(data, 20);
  std::vector<LocalEstimate> est;
  for (int k = 0; k < 20; ++k) {
    const auto f = fit_local(spec, shards[static_cast<std::size_t>(k)], {}, k + 1);
    est.push_back({k + 1, f.n_k, f.theta_hat, f.sigma_hat});
  }
  est[0].theta_star = Eigen::Vector2d(-1e6, -1e6);
  const Eigen::MatrixXd s = aggregate_sigma(est);
  const auto h = huber_aggregate(est, s);
  const auto r = detect(est, h.theta_hat, s);
  CHECK(r.servers[0].theta_flagged);
}

TEST_CASE("detection csv") {
  std::vector<LocalEstimate> est = {at(2, 10, Eigen::Vector2d(0, 0), Eigen::Matrix2d::Zero()),
                                    at(1, 10, Eigen::Vector2d(1, 0))};
  const auto r = detect(est, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  std::ostringstream os;
  write_detection_csv(r, os);
  const std::string text = os.str();
  CHECK(text.rfind("server_id,n_k,d1,d2,theta_flagged,sigma_flagged\n", 0) == 0);
  CHECK(text.find("1,10,3.16227766016837") != std::string::npos);
  CHECK(text.find("2,10,0,NA,0,1") != std::string::npos);
}
