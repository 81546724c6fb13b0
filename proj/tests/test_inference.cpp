#include <catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

pnar::NetworkPanel single_node(const std::vector<double>& y) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(y.size()));
  for (std::size_t t = 0; t < y.size(); ++t) m(0, t) = y[t];
  return {pnar::CountPanel(m), pnar::Adjacency(Eigen::MatrixXd::Zero(1, 1))};
}

}  // namespace

TEST_CASE("quasi log-likelihood", "[inference]") {
  const pnar::ModelSpec spec;
  SECTION("single cell, Y = 0 and lambda = 1") {
    const auto th = pnar::Theta::linear(spec, Eigen::Vector3d(1, 0, 0));
    CHECK_THAT(pnar::quasi_loglik(th, single_node({0, 0}), spec), WithinAbs(-1.0, 1e-15));
  }
  SECTION("single cell, Y = lambda = 2") {
    const auto th = pnar::Theta::linear(spec, Eigen::Vector3d(2, 0, 0));
    CHECK_THAT(pnar::quasi_loglik(th, single_node({2, 2}), spec), WithinAbs(2 * std::log(2.0) - 2, 1e-12));
  }
  SECTION("random instance against a double loop") {
    std::mt19937_64 rng(17);
    for (auto f : {pnar::Family::linear, pnar::Family::loglinear, pnar::Family::smooth_transition}) {
      const auto in = testing::random_instance(rng, f);
      const auto mp = pnar::detail::evaluate_mean(in.theta, in.data, in.spec);
      double ll = 0.0;
      for (int t = in.spec.p; t < in.data.t(); ++t)
        for (int i = 0; i < in.data.n(); ++i) {
          const double lam = mp.lambda(i, t - in.spec.p);
          ll += in.data.counts()(i, t) * std::log(lam) - lam;
        }
      CHECK_THAT(pnar::quasi_loglik(in.theta, in.data, in.spec), WithinAbs(ll, 1e-10 * (1 + std::abs(ll))));
    }
  }
}

TEST_CASE("score", "[inference]") {
  std::mt19937_64 rng(23);
  for (auto f : {pnar::Family::linear, pnar::Family::loglinear, pnar::Family::intercept_drift,
                 pnar::Family::smooth_transition, pnar::Family::threshold}) {
    const auto in = testing::random_instance(rng, f);
    const pnar::Score sc = pnar::score(in.theta, in.data, in.spec);
    CHECK((sc.per_time.rowwise().sum() - sc.total).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd v = in.theta.pack(in.spec);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd up = v, dn = v;
      up(k) += h;
      dn(k) -= h;
      const double fd = (pnar::quasi_loglik(in.theta.with_packed(in.spec, up), in.data, in.spec) -
                         pnar::quasi_loglik(in.theta.with_packed(in.spec, dn), in.data, in.spec)) /
                        (2 * h);
      INFO(pnar::to_string(f) << " component " << k);
      CHECK(std::abs(sc.total(k) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }

  SECTION("vanishes where Y equals lambda") {
    const pnar::ModelSpec spec;
    const auto th = pnar::Theta::linear(spec, Eigen::Vector3d(3, 0, 0));
    CHECK(pnar::score(th, single_node({3, 3, 3, 3}), spec).total.isZero());
  }
}

TEST_CASE("Hessian and information matrices", "[inference]") {
  const pnar::ModelSpec spec;
  SECTION("constant-mean hand oracle") {
    const double b0 = 1.5;
    const auto th = pnar::Theta::linear(spec, Eigen::Vector3d(b0, 0, 0));
    const auto data = single_node({0, 1, 4});  // modelled Y = 1, 4
    const auto mp = pnar::detail::evaluate_mean(th, data, spec);
    const Eigen::MatrixXd h = pnar::hessian_matrix(mp, data);
    const Eigen::MatrixXd b = pnar::information_matrix(mp, data);
    CHECK_THAT(h(0, 0), WithinRel((1 + 4) / (b0 * b0), 1e-14));
    CHECK_THAT(b(0, 0), WithinRel(((1 - b0) * (1 - b0) + (4 - b0) * (4 - b0)) / (b0 * b0), 1e-14));
    // the lag regressors: Y_{t-1} = (0, 1), X = 0 for the isolated node
    CHECK_THAT(h(2, 2), WithinRel(4 * 1 / (b0 * b0), 1e-14));
    CHECK_THAT(b(0, 2), WithinRel((4 - b0) / b0 * (4 - b0) / b0 * 1.0, 1e-14));
  }

  std::mt19937_64 rng(31);
  const auto in = testing::random_instance(rng, pnar::Family::linear, 10, 50);
  SECTION("sandwich is symmetric and positive semi-definite") {
    const auto qm = pnar::quasi_matrices(in.theta, in.data, in.spec);
    CHECK((qm.sandwich - qm.sandwich.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(qm.sandwich);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
  SECTION("diagonal plug-in at Y = lambda reduces the sandwich to H^-1") {
    // with Sigma_t = D_t, B = sum g g'/lambda; and H = B when Y = lambda cell by cell
    const auto mp = pnar::detail::evaluate_mean(in.theta, in.data, in.spec);
    const Eigen::MatrixXd bd = pnar::information_matrix(mp, in.data, pnar::CovariancePlugin::diagonal);
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(bd.rows(), bd.cols());
    for (Eigen::Index c = 0; c < mp.grad.rows(); ++c) {
      const double lam = mp.lambda(c % mp.nodes(), c / mp.nodes());
      expect += mp.grad.row(c).transpose() * mp.grad.row(c) / lam;
    }
    CHECK((bd - expect).cwiseAbs().maxCoeff() < 1e-9 * expect.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd hinv = bd.inverse();
    const Eigen::MatrixXd sand = hinv * bd * hinv;
    CHECK((sand - hinv).cwiseAbs().maxCoeff() < 1e-9 * hinv.cwiseAbs().maxCoeff());
  }
  SECTION("singular Hessian reports a condition number") {
    const auto th = pnar::Theta::linear(spec, Eigen::Vector3d(1, 0, 0));
    CHECK_THROWS_WITH(pnar::quasi_matrices(th, single_node({0, 0, 0, 0}), spec),
                      Catch::Matchers::ContainsSubstring("condition number"));
  }
}

TEST_CASE("information criteria", "[inference]") {
  const auto ic = pnar::info_criteria(4324.057, 20, 416, 20.0);
  CHECK_THAT(ic.aic, WithinAbs(-8608.114, 1e-9));
  CHECK_THAT(ic.bic, WithinAbs(-8527.5, 0.05));
  CHECK(ic.qic == ic.aic);
  CHECK_THROWS_AS(pnar::info_criteria(1.0, 0, 10, 1.0), pnar::ValidationError);
}

TEST_CASE("least-squares start", "[inference]") {
  SECTION("orthonormal design matches the normal equations") {
    Eigen::MatrixXd x(4, 2);
    x << 0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5;
    const Eigen::Vector4d y(1, 2, 3, 5);
    CHECK(pnar::least_squares(x, y).isApprox(x.transpose() * y, 1e-14));
  }
  SECTION("rank deficient design falls back to a ridge") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 1, 2, 1, 2;
    const Eigen::VectorXd c = pnar::least_squares(x, Eigen::Vector3d(1, 1, 1));
    CHECK(c.allFinite());
    CHECK((x * c - Eigen::Vector3d(1, 1, 1)).norm() < 1e-4);
  }
  SECTION("zero counts floor every coefficient") {
    const pnar::ModelSpec spec;
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(3, 10);
    Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 3);
    w.diagonal().setZero();
    const pnar::NetworkPanel data{pnar::CountPanel(y), pnar::Adjacency(w)};
    CHECK((pnar::init_ls(data, spec).pack(spec).array() == 0.01).all());
  }
  SECTION("linear start is feasible") {
    std::mt19937_64 rng(41);
    for (int r = 0; r < 10; ++r) {
      const auto in = testing::random_instance(rng, pnar::Family::linear);
      const auto th = pnar::init_ls(in.data, in.spec);
      CHECK((th.pack(in.spec).array() >= 0.01).all());
      CHECK(pnar::persistence(in.spec, th) < 1.0);
    }
  }
}

TEST_CASE("QMLE", "[inference]") {
  const auto adj = pnar::gen_erdos_renyi(20, 0.2, 7);
  const Eigen::Vector3d truth(0.2, 0.2, 0.4);
  const auto data = testing::simulate_linear(adj, truth, 1, 1000, 0.0, 99);

  SECTION("linear model recovers the truth") {
    const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{});
    CHECK(fr.converged);
    CHECK(fr.score_sup_norm() < 1e-4);
    CHECK(fr.loglik >= fr.loglik_init);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(fr.estimate(k) - truth(k)) < 4 * fr.se(k));
    CHECK((fr.zstat - fr.estimate.cwiseQuotient(fr.se)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(((fr.pval.array() >= 0) && (fr.pval.array() <= 1)).all());
    CHECK_THAT(fr.aic, WithinAbs(-2 * fr.loglik + 6, 1e-9));
    CHECK(fr.names == std::vector<std::string>{"beta0", "beta11", "beta21"});
  }
  SECTION("log-linear fit satisfies the absolute-value constraint") {
    const pnar::ModelSpec ll{pnar::Family::loglinear, 2, 0, 1};
    const auto fr = pnar::fit_qmle(data, ll);
    CHECK(pnar::persistence(ll, fr.theta_hat) <= 1.0 - 1e-8 + 1e-9);
    CHECK(fr.loglik >= fr.loglik_init);
  }
  SECTION("nonlinear families converge") {
    for (auto f : {pnar::Family::intercept_drift, pnar::Family::smooth_transition}) {
      const pnar::ModelSpec s{f, 1, 0, 1};
      const auto fr = pnar::fit_qmle(data, s);
      INFO(pnar::to_string(f));
      CHECK(fr.loglik >= fr.loglik_init);
      CHECK((fr.estimate.array() >= 0).all());
    }
  }
  SECTION("unconstrained fit agrees at an interior optimum") {
    pnar::FitOptions o;
    o.constrained = false;
    const auto a = pnar::fit_qmle(data, pnar::ModelSpec{}, o);
    const auto b = pnar::fit_qmle(data, pnar::ModelSpec{});
    CHECK((a.estimate - b.estimate).cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("ic scan is nested and matches a single fit") {
    const auto rows = pnar::ic_scan(data, {1, 2, 3}, pnar::Criterion::aic);
    REQUIRE(rows.size() == 3);
    CHECK(rows[1].loglik >= rows[0].loglik - 1e-8);
    CHECK(rows[2].loglik >= rows[1].loglik - 1e-8);
    const auto one = pnar::ic_scan(data, {1});
    const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{});
    CHECK_THAT(one[0].qic, WithinAbs(fr.qic, 1e-8 * std::abs(fr.qic)));
    CHECK(one[0].value == one[0].qic);
  }
}
