#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "robagg/aggregate.hpp"
#include "robagg/error.hpp"
#include "robagg/numkit.hpp"

using namespace robagg;

namespace {

std::vector<LocalEstimate> random_estimates(std::mt19937_64& rng, int servers, Eigen::Index p) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> size(1, 500);
  std::vector<LocalEstimate> out;
  for (int k = 0; k < servers; ++k) {
    LocalEstimate e{k + 1, size(rng), Eigen::VectorXd(p), oracle::random_spd(rng, p)};
    for (Eigen::Index j = 0; j < p; ++j) e.theta_star(j) = normal(rng);
    out.push_back(e);
  }
  return out;
}

LocalEstimate scalar(int id, double theta) {
  return {id, 1, Eigen::VectorXd::Constant(1, theta), Eigen::MatrixXd::Identity(1, 1)};
}

}  // namespace

TEST_CASE("huber_psi") {
  CHECK(huber_psi(0.5, 1.345) == 0.5);
  CHECK(huber_psi(10, 1.345) == 1.345);
  CHECK(huber_psi(-2, 1.345) == -1.345);
  CHECK(huber_psi(1.345, 1.345) == 1.345);
  CHECK(huber_psi(-1.345, 1.345) == -1.345);
}

TEST_CASE("tau_c against quadrature and reference values") {
  CHECK(std::abs(tau_c(1.345) - 0.950) <= 1e-3);
  CHECK(std::abs(tau_c(0.9818) - 0.900) <= 1e-3);
  CHECK(std::abs(tau_c(1.5) - 0.964) <= 1e-3);
  CHECK(std::abs(tau_c(1e-4) - 2.0 / M_PI) <= 1e-3);
  CHECK(tau_c(kHuberInfinity) == 1.0);

  for (double c : {0.5, 1.0, 1.345, 2.0}) {
    const double b = oracle::integrate(oracle::normal_pdf, -c, c);
    const double quad = oracle::integrate([](double u) { return u * u * oracle::normal_pdf(u); }, -c, c) +
                        c * c * (1.0 - b);
    CHECK(std::abs(huber_sigma2(c) - quad) <= 1e-9);
    CHECK(std::abs(huber_b(c) - b) <= 1e-12);
    CHECK(std::abs(tau_c(c) - oracle::tau(c)) <= 1e-9);
  }
  double prev = 0.0;
  for (double c : {0.1, 0.5, 1.0, 1.345, 2.0, 5.0}) {
    CHECK(tau_c(c) > prev);
    prev = tau_c(c);
  }
}

TEST_CASE("weighted_average") {
  std::vector<LocalEstimate> same(4, {0, 10, Eigen::Vector2d(2, 1), Eigen::Matrix2d::Identity()});
  CHECK(weighted_average(same).theta_bar.isApprox(Eigen::Vector2d(2, 1)));

  std::vector<LocalEstimate> two = {{1, 1, Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()},
                                    {2, 3, Eigen::Vector2d(4, 4), 5 * Eigen::Matrix2d::Identity()}};
  const auto w = weighted_average(two);
  CHECK(w.theta_bar.isApprox(Eigen::Vector2d(3, 3)));
  CHECK(w.sigma_bar.isApprox(4 * Eigen::Matrix2d::Identity()));

  CHECK(weighted_average(std::vector<LocalEstimate>{two[1]}).theta_bar == two[1].theta_star);
  CHECK_THROWS_AS(weighted_average(std::vector<LocalEstimate>{}), DomainError);
}

TEST_CASE("huber_aggregate scalar example against a bisection oracle") {
  const std::vector<LocalEstimate> est = {scalar(1, 0), scalar(2, 0), scalar(3, 100)};
  const double root = oracle::bisect(
      [](double t) { return 2 * huber_psi(-t, 1.0) + huber_psi(100 - t, 1.0); }, -10, 110);
  CHECK(root == doctest::Approx(0.5).epsilon(1e-12));
  const auto r = huber_aggregate(est, Eigen::MatrixXd::Identity(1, 1), HuberConfig{1.0});
  CHECK(r.theta_hat(0) == doctest::Approx(root).epsilon(1e-10));
  CHECK(r.residual_norm <= 1e-10);
}

TEST_CASE("huber_aggregate identical estimates") {
  std::mt19937_64 rng(31);
  const Eigen::Vector3d t(1.5, -2, 0.25);
  std::vector<LocalEstimate> est;
  for (int k = 0; k < 7; ++k) est.push_back({k + 1, 50 + k, t, oracle::random_spd(rng, 3)});
  const auto r = huber_aggregate(est, oracle::random_spd(rng, 3));
  CHECK((r.theta_hat - t).norm() <= 1e-12);
}

TEST_CASE("huber_aggregate with c = inf or huge c is the weighted average") {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index p = 1 + t % 5;
    const auto est = random_estimates(rng, 1 + t % 50, p);
    const Eigen::MatrixXd s = oracle::random_spd(rng, p);
    const Eigen::VectorXd w = weighted_average(est).theta_bar;
    CHECK((huber_aggregate(est, s, HuberConfig{kHuberInfinity}).theta_hat - w).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((huber_aggregate(est, s, HuberConfig{1e12}).theta_hat - w).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("huber_aggregate solves the estimating equations") {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index p = 1 + t % 4;
    auto est = random_estimates(rng, 3 + t % 30, p);
    est.front().theta_star *= 1e4;
    const Eigen::MatrixXd s = oracle::random_spd(rng, p);
    for (double c : {0.5, 1.345, 3.0}) {
      const auto r = huber_aggregate(est, s, HuberConfig{c});
      const Eigen::VectorXd g = huber_estimating_function(est, inv_sqrt_pd(s), r.theta_hat, c);
      CHECK(g.norm() <= 1e-10);
      CHECK(r.tau == doctest::Approx(tau_c(c)));
      CHECK((r.se.array() > 0).all());
    }
  }
}

TEST_CASE("huber_aggregate translation equivariance and reordering") {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index p = 2 + t % 3;
    auto est = random_estimates(rng, 10, p);
    const Eigen::MatrixXd s = oracle::random_spd(rng, p);
    const auto base = huber_aggregate(est, s).theta_hat;
    Eigen::VectorXd shift = Eigen::VectorXd::LinSpaced(p, -3.0, 5.0);
    auto moved = est;
    for (auto& e : moved) e.theta_star += shift;
    CHECK((huber_aggregate(moved, s).theta_hat - (base + shift)).norm() <= 1e-9 * (1 + base.norm()));
    auto reordered = est;
    std::reverse(reordered.begin(), reordered.end());
    CHECK((huber_aggregate(reordered, s).theta_hat - base).norm() <= 1e-12 * (1 + base.norm()));
  }
}

TEST_CASE("bounded influence of one outlier") {
  std::mt19937_64 rng(35);
  auto est = random_estimates(rng, 20, 2);
  const Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
  double prev_norm = 0.0;
  double wavg_prev = 0.0;
  for (int e = 2; e <= 9; ++e) {
    est.front().theta_star = Eigen::Vector2d::Constant(std::pow(10.0, e));
    const double h = huber_aggregate(est, s).theta_hat.norm();
    const double w = weighted_average(est).theta_bar.norm();
    if (e > 3) CHECK(std::abs(h - prev_norm) <= 1e-9 * (1 + h));
    if (e > 2) CHECK(w > 5.0 * wavg_prev);
    prev_norm = h;
    wavg_prev = w;
  }
}

TEST_CASE("huber_aggregate input errors") {
  std::vector<LocalEstimate> est = {scalar(1, 0), scalar(2, 1)};
  CHECK_THROWS_AS(huber_aggregate(est, Eigen::MatrixXd::Constant(1, 1, -1.0)), NotPositiveDefinite);
  CHECK_THROWS_AS(huber_aggregate(std::vector<LocalEstimate>{}, Eigen::MatrixXd::Identity(1, 1)), DomainError);
  CHECK_THROWS_AS(huber_aggregate(est, Eigen::MatrixXd::Identity(1, 1), HuberConfig{0.0}), DomainError);
}

TEST_CASE("standard_errors") {
  CHECK(standard_errors(Eigen::Matrix2d::Identity(), 100, 1.0).isApprox(Eigen::Vector2d(0.1, 0.1)));
  CHECK(standard_errors(Eigen::Matrix2d::Identity(), 100, 0.25).isApprox(Eigen::Vector2d(0.2, 0.2)));
  CHECK(standard_errors(Eigen::Matrix2d(Eigen::Vector2d(4, 1).asDiagonal()), 400, 1.0)
            .isApprox(Eigen::Vector2d(0.1, 0.05)));
  CHECK_THROWS_AS(standard_errors(Eigen::Matrix2d(Eigen::Vector2d(0, 1).asDiagonal()), 10, 1.0), DomainError);
}
