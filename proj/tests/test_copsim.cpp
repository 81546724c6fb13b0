#include <catch_amalgamated.hpp>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <algorithm>
#include <cmath>

#include "test_support.hpp"

using Catch::Matchers::WithinAbs;

namespace {

/// Kolmogorov-Smirnov distance of a sample to U(0, 1).
double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k)
    d = std::max({d, (k + 1) / n - u[k], u[k] - k / n});
  return d;
}

/// Pearson chi-square p-value of integer draws against Poisson(lambda), pooling
/// the tail so that every expected cell count is at least 5.
double poisson_gof(const std::vector<int>& draws, double lambda) {
  const boost::math::poisson_distribution<> pois(lambda);
  const double n = static_cast<double>(draws.size());
  int kmax = 0;
  while (n * boost::math::pdf(pois, kmax + 1) >= 5.0 || kmax < lambda) ++kmax;
  std::vector<double> obs(kmax + 1, 0.0);
  for (int d : draws) obs[std::min(d, kmax)] += 1.0;
  double stat = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    const double e = n * (k < kmax ? boost::math::pdf(pois, k) : boost::math::cdf(boost::math::complement(pois, k - 1)));
    stat += (obs[k] - e) * (obs[k] - e) / e;
  }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(kmax), stat));
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  auto ranks = [](const Eigen::VectorXd& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int i, int j) { return v(i) < v(j); });
    Eigen::VectorXd r(v.size());
    for (int k = 0; k < v.size(); ++k) r(idx[k]) = k;
    return r;
  };
  const Eigen::VectorXd ra = ranks(a), rb = ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("copula uniforms", "[copsim]") {
  const int k = 10000;
  const double ks_crit = 1.63 / std::sqrt(static_cast<double>(k));  // 1% level

  SECTION("independent Gaussian copula") {
    const auto u = pnar::copula_uniforms({}, 3, k, 1);
    for (int c = 0; c < 3; ++c) {
      const Eigen::VectorXd col = u.col(c);
      CHECK(ks_uniform(std::vector<double>(col.data(), col.data() + k)) < ks_crit);
    }
    CHECK(std::abs(correlation(u.col(0), u.col(1))) < 4 / std::sqrt(static_cast<double>(k)));
    CHECK(((u.array() > 0) && (u.array() < 1)).all());
  }
  SECTION("strong equicorrelation") {
    pnar::CopulaSpec c;
    c.rho = 0.99;
    const auto u = pnar::copula_uniforms(c, 2, k, 2);
    CHECK(spearman(u.col(0), u.col(1)) > 0.9);
  }
  SECTION("marginals stay uniform under dependence") {
    for (auto fam : {pnar::CopulaFamily::gaussian, pnar::CopulaFamily::student_t, pnar::CopulaFamily::clayton}) {
      pnar::CopulaSpec c;
      c.family = fam;
      c.corrtype = pnar::CorrType::toeplitz;
      c.rho = 0.6;
      const auto u = pnar::copula_uniforms(c, 4, k, 3);
      for (int col = 0; col < 4; ++col) {
        const Eigen::VectorXd v = u.col(col);
        INFO(pnar::to_string(fam) << " column " << col);
        CHECK(ks_uniform(std::vector<double>(v.data(), v.data() + k)) < ks_crit);
      }
      CHECK(spearman(u.col(0), u.col(1)) > 0.3);
    }
  }
  SECTION("Toeplitz decays with distance") {
    pnar::CopulaSpec c;
    c.corrtype = pnar::CorrType::toeplitz;
    c.rho = 0.8;
    const auto u = pnar::copula_uniforms(c, 4, k, 4);
    CHECK(spearman(u.col(0), u.col(1)) > spearman(u.col(0), u.col(3)) + 0.2);
  }
  SECTION("infeasible parameters") {
    pnar::CopulaSpec c;
    c.rho = -0.5;
    CHECK_THROWS_AS(pnar::copula_uniforms(c, 4, 10, 1), pnar::ValidationError);  // below -1/3
    c.rho = 1.0;
    CHECK_THROWS_AS(pnar::copula_uniforms(c, 2, 10, 1), pnar::ValidationError);
    c.corrtype = pnar::CorrType::toeplitz;
    c.rho = -1.0;
    CHECK_THROWS_AS(pnar::copula_uniforms(c, 2, 10, 1), pnar::ValidationError);
    c.family = pnar::CopulaFamily::clayton;
    c.rho = 0.0;
    CHECK_THROWS_AS(pnar::copula_uniforms(c, 2, 10, 1), pnar::ValidationError);
  }
  CHECK(pnar::copula_uniforms({}, 3, 50, 9) == pnar::copula_uniforms({}, 3, 50, 9));
}

TEST_CASE("Poisson counts from waiting times", "[copsim]") {
  const double lambda = 2.0;
  const std::vector<double> forced{std::exp(-2 * lambda), 0.5, 0.5};
  CHECK(pnar::poisson_from_waiting_times(forced, lambda) == 0);
  const std::vector<double> two{std::exp(-0.4 * lambda), std::exp(-0.4 * lambda), std::exp(-0.4 * lambda)};
  CHECK(pnar::poisson_from_waiting_times(two, lambda) == 2);
  const std::vector<double> all(5, 0.999);
  CHECK(pnar::poisson_from_waiting_times(all, 1.0) == 5);  // capped at K
  CHECK(pnar::poisson_from_waiting_times(std::vector<double>{0.5}, 1e-12) == 0);
  CHECK_THROWS_AS(pnar::poisson_from_waiting_times(forced, 0.0), pnar::ValidationError);
  CHECK_THROWS_AS(pnar::poisson_from_waiting_times(std::vector<double>{0.0}, 1.0), pnar::ValidationError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> draws(100000);
  std::vector<double> u(100);
  for (auto& d : draws) {
    for (auto& v : u) do v = unif(rng); while (v == 0.0);
    d = pnar::poisson_from_waiting_times(u, 3.0);
  }
  CHECK(poisson_gof(draws, 3.0) > 0.01);
}

TEST_CASE("simulation", "[copsim]") {
  SECTION("constant mean gives Poisson marginals") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(2.5, 0, 0));
    cfg.adj = pnar::gen_erdos_renyi(5, 0.5, 1);
    cfg.T = 10000;
    cfg.seed = 12;
    const auto res = pnar::simulate(cfg);
    std::vector<int> draws(res.counts.data(), res.counts.data() + res.counts.size());
    CHECK(poisson_gof(draws, 2.5) > 0.01);
    CHECK((res.lambda.array() == 2.5).all());
  }
  SECTION("reference configuration: N = 10, T = 100, rho = 0.5") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(0.2, 0.2, 0.4));
    cfg.adj = pnar::gen_sbm(10, 2, 0.7, true, 1234);
    cfg.copula.rho = 0.5;
    cfg.T = 100;
    const auto res = pnar::simulate(cfg);
    CHECK(res.counts.rows() == 10);
    CHECK(res.counts.cols() == 100);
    CHECK(res.counts.allFinite());
    // stationary mean 0.2 / (1 - 0.6) = 0.5; a long run pins it down
    cfg.T = 20000;
    const auto longer = pnar::simulate(cfg);
    const Eigen::VectorXd deg = pnar::out_degree(cfg.adj);
    double sum = 0.0;
    int used = 0;
    for (int i = 0; i < 10; ++i)
      if (deg(i) > 0) {
        sum += longer.counts.row(i).mean();
        ++used;
      }
    CHECK_THAT(sum / used, WithinAbs(0.5, 0.05));
  }
  SECTION("stronger copula dependence gives stronger cross correlation") {
    auto avg_corr = [](double rho, std::uint64_t seed) {
      pnar::SimConfig cfg;
      cfg.spec = pnar::ModelSpec{};
      cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(1.0, 0.1, 0.3));
      cfg.adj = pnar::gen_erdos_renyi(6, 0.5, 3);
      cfg.copula.rho = rho;
      cfg.T = 500;
      cfg.seed = seed;
      const auto res = pnar::simulate(cfg);
      double s = 0.0;
      int c = 0;
      for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) {
          s += correlation(res.counts.row(i).transpose(), res.counts.row(j).transpose());
          ++c;
        }
      return s / c;
    };
    double lo = 0.0, hi = 0.0;
    for (int r = 0; r < 20; ++r) {
      lo += avg_corr(0.2, 100 + r);
      hi += avg_corr(0.8, 100 + r);
    }
    CHECK(hi > lo);
  }
  SECTION("every family runs and is reproducible") {
    std::mt19937_64 rng(6);
    for (auto f : {pnar::Family::linear, pnar::Family::loglinear, pnar::Family::intercept_drift,
                   pnar::Family::smooth_transition, pnar::Family::threshold}) {
      const auto in = testing::random_instance(rng, f);
      pnar::SimConfig cfg;
      cfg.spec = in.spec;
      cfg.theta = in.theta;
      cfg.adj = in.data.adjacency();
      cfg.z = in.data.covariates();
      cfg.T = 50;
      cfg.seed = 4;
      const auto a = pnar::simulate(cfg);
      const auto b = pnar::simulate(cfg);
      INFO(pnar::to_string(f));
      CHECK(a.counts == b.counts);
      CHECK((a.lambda.array() > 0).all());
    }
  }
  SECTION("single time point") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(0.2, 0.2, 0.4));
    cfg.adj = pnar::gen_erdos_renyi(4, 0.5, 1);
    cfg.T = 1;
    CHECK(pnar::simulate(cfg).counts.cols() == 1);
  }
  SECTION("non-stationary parameters") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(0.2, 0.5, 0.6));
    cfg.adj = pnar::gen_erdos_renyi(4, 0.5, 1);
    cfg.T = 5;
    cfg.burn_in = 0;
    cfg.strict = true;
    CHECK_THROWS_AS(pnar::simulate(cfg), pnar::ValidationError);
    cfg.strict = false;
    const auto res = pnar::simulate(cfg);
    CHECK_FALSE(res.warnings.empty());
  }
  SECTION("exploding means abort") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{pnar::Family::loglinear, 1, 0, 1};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(25.0, 0.0, 0.0));
    cfg.adj = pnar::gen_erdos_renyi(4, 0.5, 1);
    CHECK_THROWS_AS(pnar::simulate(cfg), pnar::NumericalError);
  }
  SECTION("large means raise the waiting-time cap") {
    pnar::SimConfig cfg;
    cfg.spec = pnar::ModelSpec{};
    cfg.theta = pnar::Theta::linear(cfg.spec, Eigen::Vector3d(30.0, 0.0, 0.0));
    cfg.adj = pnar::gen_erdos_renyi(3, 0.5, 1);
    cfg.T = 20;
    const auto res = pnar::simulate(cfg);
    CHECK(res.K_used == 300);
    CHECK_FALSE(res.warnings.empty());
  }
}
