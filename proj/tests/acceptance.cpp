// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "test_support.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. analytic gradients against central differences
Outcome gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (auto f : {pnar::Family::linear, pnar::Family::loglinear, pnar::Family::intercept_drift,
                 pnar::Family::smooth_transition, pnar::Family::threshold})
    for (int r = 0; r < 100; ++r) worst = std::max(worst, testing::gradient_error(testing::random_instance(rng, f, 10, 50), 1e-6));
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 30.0,
          fmt("500 instances, worst scaled error %.2e (tol 1e-6), %.1f s (limit 30 s)", worst, secs)};
}

// 2. information criteria at the published log-likelihood
Outcome ic_identity() {
  const auto ic = pnar::info_criteria(4324.057, 20, 416, 20.0);
  const bool aic_ok = std::abs(ic.aic - (-8608.114)) < 1e-9;
  const bool bic_ok = std::abs(ic.bic - (-8527.5)) <= 0.05;
  return {aic_ok && bic_ok, fmt("AIC %.6f (want -8608.114), BIC %.4f (want -8527.5 +- 0.05)", ic.aic, ic.bic)};
}

struct MonteCarlo {
  Eigen::MatrixXd est, se, naive;
  Eigen::VectorXd score;
  int failures = 0;
};

MonteCarlo recovery_runs(double rho, int reps, std::uint64_t seed) {
  const auto adj = pnar::gen_sbm(20, 2, 0.7, true, seed);
  const Eigen::Vector3d truth(0.2, 0.2, 0.4);
  MonteCarlo mc;
  mc.est.resize(reps, 3);
  mc.se.resize(reps, 3);
  mc.naive.resize(reps, 3);
  mc.score.resize(reps);
  for (int r = 0; r < reps; ++r) {
    const auto data = testing::simulate_linear(adj, truth, 1, 1000, rho, seed * 1000 + r);
    const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{});
    if (!fr.converged) ++mc.failures;
    mc.est.row(r) = fr.estimate.transpose();
    mc.se.row(r) = fr.se.transpose();
    mc.naive.row(r) = fr.naive_se.transpose();
    mc.score(r) = fr.score_sup_norm();
  }
  return mc;
}

// 3. coverage of sandwich intervals
Outcome recovery() {
  const auto t0 = Clock::now();
  const int reps = 200;
  const auto mc = recovery_runs(0.0, reps, 3);
  const Eigen::Vector3d truth(0.2, 0.2, 0.4);
  bool ok = mc.failures == 0;
  std::ostringstream os;
  os << "coverage";
  for (int k = 0; k < 3; ++k) {
    int hit = 0;
    for (int r = 0; r < reps; ++r) hit += std::abs(mc.est(r, k) - truth(k)) <= 1.96 * mc.se(r, k);
    const double cov = static_cast<double>(hit) / reps;
    ok = ok && cov >= 0.90 && cov <= 0.99;
    os << fmt(" %.3f", cov);
  }
  const double mean_score = mc.score.mean();
  const double secs = seconds_since(t0);
  ok = ok && mean_score < 1e-4 && secs < 600.0;
  os << fmt(" (want [0.90, 0.99]); mean sup|score| %.1e (tol 1e-4); %d non-converged; %.0f s (limit 600 s)",
            mean_score, mc.failures, secs);
  return {ok, os.str()};
}

// 4. robust against naive standard errors under cross-sectional dependence
Outcome robust_se() {
  const auto t0 = Clock::now();
  const int reps = 200;
  const auto mc = recovery_runs(0.8, reps, 4);
  bool ok = mc.failures == 0;
  std::ostringstream os;
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd e = mc.est.col(k);
    const double sd = std::sqrt((e.array() - e.mean()).square().sum() / (reps - 1));
    const double sand = mc.se.col(k).mean(), naive = mc.naive.col(k).mean();
    const bool within = std::abs(sd - sand) <= 0.25 * sand;
    ok = ok && within && sd > naive;
    os << fmt("[%d] sd %.4f sandwich %.4f naive %.4f; ", k, sd, sand, naive);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 900.0;
  os << fmt("%.0f s (limit 900 s)", secs);
  return {ok, os.str()};
}

// 5. waiting-time counts are Poisson
Outcome poisson_marginals() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int draws = 100000;
  const double lambda = 3.0;
  std::vector<double> u(100);
  const boost::math::poisson_distribution<> pois(lambda);
  int kmax = 0;
  while (draws * boost::math::pdf(pois, kmax + 1) >= 5.0) ++kmax;
  std::vector<double> obs(kmax + 1, 0.0);
  for (int d = 0; d < draws; ++d) {
    for (auto& v : u) do v = unif(rng); while (v == 0.0);
    obs[std::min(pnar::poisson_from_waiting_times(u, lambda), kmax)] += 1.0;
  }
  double stat = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    const double e = draws * (k < kmax ? boost::math::pdf(pois, k) : boost::math::cdf(boost::math::complement(pois, k - 1)));
    stat += (obs[k] - e) * (obs[k] - e) / e;
  }
  const double pv = boost::math::cdf(boost::math::complement(boost::math::chi_squared(kmax), stat));
  return {pv > 0.01, fmt("chi-square %.2f on %d df, p = %.3f (reject below 0.01)", stat, kmax, pv)};
}

// 6. size of the linearity tests under the linear null
Outcome test_size() {
  const auto t0 = Clock::now();
  const auto adj = pnar::gen_sbm(10, 2, 0.7, true, 6);
  const Eigen::Vector3d truth(0.2, 0.2, 0.4);
  const pnar::ModelSpec lin;
  int id_rej = 0, st_rej = 0, t_rej = 0;
  const int id_runs = 500, boot_runs = 200;
  pnar::BootstrapOptions bo;
  bo.J = 199;
  for (int r = 0; r < id_runs; ++r) {
    const auto data = testing::simulate_linear(adj, truth, 1, 500, 0.0, 600000 + r);
    const auto fr = pnar::fit_qmle(data, lin);
    id_rej += pnar::score_test_id(fr.theta_hat, data, {pnar::Family::intercept_drift, 1, 0, 1}).pvalue < 0.05;
    if (r >= boot_runs) continue;
    bo.seed = 700000 + r;
    const pnar::ModelSpec st{pnar::Family::smooth_transition, 1, 0, 1};
    const auto rs = pnar::bootstrap_test(fr.theta_hat, data, st, pnar::gamma_band_st(data, 1, 1, 10), bo);
    st_rej += rs.pvalue < 0.05;
    const pnar::ModelSpec tt{pnar::Family::threshold, 1, 0, 1};
    const auto rt = pnar::bootstrap_test(fr.theta_hat, data, tt, pnar::gamma_band_t(data), bo);
    t_rej += rt.pvalue < 0.05;
  }
  const double id_rate = static_cast<double>(id_rej) / id_runs;
  const double st_rate = static_cast<double>(st_rej) / boot_runs;
  const double t_rate = static_cast<double>(t_rej) / boot_runs;
  const bool ok = id_rate >= 0.02 && id_rate <= 0.09 && st_rate >= 0.01 && st_rate <= 0.10 && t_rate >= 0.01 &&
                  t_rate <= 0.10;
  return {ok, fmt("ID %.3f over %d (want [0.02, 0.09]); ST bootstrap %.3f, T bootstrap %.3f over %d (want [0.01, "
                  "0.10]); %.0f s",
                  id_rate, id_runs, st_rate, t_rate, boot_runs, seconds_since(t0))};
}

// 7. structure of Davies' bound
Outcome davies() {
  bool ok = true;
  std::ostringstream os;
  const std::vector<double> flat(10, 2.7);
  const auto zero = pnar::davies_pvalue(flat, 2);
  ok = ok && zero.variation == 0.0 && zero.bound == zero.chisq_tail;
  const std::vector<double> lm{0.0, 1.0, 4.0};  // sqrt path 0, 1, 2: V = 2, M = 4
  const auto r = pnar::davies_pvalue(lm, 1);
  const double tail = boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), 4.0));
  const double expect = tail + 2.0 * std::exp(-2.0) / std::sqrt(2.0 * M_PI);
  const double err = std::abs(r.bound - expect);
  ok = ok && err <= 1e-10;
  os << fmt("V=0 equality %s; m2=1,M=4,V=2 error %.1e (tol 1e-10); ", zero.bound == zero.chisq_tail ? "yes" : "no",
            err);
  const auto adj = pnar::gen_sbm(10, 2, 0.7, true, 7);
  int reports = 0, violations = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const auto data = testing::simulate_linear(adj, Eigen::Vector3d(0.2, 0.2, 0.4), 1 + rep % 2, 300, 0.0, 7000 + rep);
    const int p = 1 + rep % 2;
    const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{pnar::Family::linear, p, 0, 1});
    const pnar::ModelSpec st{pnar::Family::smooth_transition, p, 0, p};
    const auto report = pnar::davies_test(fr.theta_hat, data, st, pnar::gamma_band_st(data, p, p, 100));
    ++reports;
    violations += report.pvalue < pnar::stats::chisq_survival(report.statistic, report.df);
  }
  std::mt19937_64 rng(70);
  std::uniform_real_distribution<double> unif(0.0, 12.0);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> v(25);
    for (auto& x : v) x = unif(rng);
    const auto d = pnar::davies_pvalue(v, 1 + k % 5);
    ++reports;
    violations += d.bound < d.chisq_tail;
  }
  ok = ok && violations == 0;
  os << fmt("bound >= tail in %d/%d reports", reports - violations, reports);
  return {ok, os.str()};
}

// 8. bootstrap p-value arithmetic and worker-count independence
Outcome bootstrap_determinism() {
  const auto r = pnar::bootstrap_pvalues(1, 499);
  bool ok = std::abs(r.pJ - 1.0 / 499) < 1e-15 && std::abs(r.cpJ - 0.004) < 1e-15;
  std::ostringstream os;
  os << fmt("pJ %.9f cpJ %.4f; ", r.pJ, r.cpJ);
  const auto adj = pnar::gen_sbm(10, 2, 0.7, true, 8);
  const auto data = testing::simulate_linear(adj, Eigen::Vector3d(0.2, 0.2, 0.4), 1, 300, 0.0, 88);
  const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{});
  for (auto fam : {pnar::Family::smooth_transition, pnar::Family::threshold}) {
    const pnar::ModelSpec alt{fam, 1, 0, 1};
    const auto band = fam == pnar::Family::threshold ? pnar::gamma_band_t(data) : pnar::gamma_band_st(data, 1, 1, 10);
    const auto sup = pnar::global_optimise_lm(fr.theta_hat, data, alt, band);
    pnar::BootstrapOptions bo;
    bo.J = 99;
    bo.seed = 8;
    std::vector<pnar::BootstrapReport> reps;
    for (int w : {1, 4, 8}) {
      bo.workers = w;
      reps.push_back(pnar::score_bootstrap(fr.theta_hat, data, alt, band, sup.value, bo));
    }
    const bool same = reps[0].pJ == reps[1].pJ && reps[0].pJ == reps[2].pJ && reps[0].cpJ == reps[1].cpJ &&
                      reps[0].cpJ == reps[2].cpJ && reps[0].sup_values == reps[1].sup_values &&
                      reps[0].sup_values == reps[2].sup_values;
    ok = ok && same;
    os << fmt("%s workers 1/4/8 pJ %.4f/%.4f/%.4f; ", pnar::to_string(fam).c_str(), reps[0].pJ, reps[1].pJ, reps[2].pJ);
  }
  return {ok, os.str()};
}

// 9. sup-LM search against a dense grid
Outcome sup_lm() {
  const auto t0 = Clock::now();
  double worst = -1e300;
  int instances = 0;
  for (int rep = 0; rep < 20; ++rep) {
    std::mt19937_64 rng(900 + rep);
    const int p = 1 + rep % 2;
    const auto adj = pnar::gen_erdos_renyi(6 + rep % 5, 0.4, rng());
    Eigen::VectorXd truth(1 + 2 * p);
    truth << 0.4, Eigen::VectorXd::Constant(p, 0.25 / p), Eigen::VectorXd::Constant(p, 0.35 / p);
    const auto data = testing::simulate_linear(adj, truth, p, 150, 0.3, rng());
    const auto fr = pnar::fit_qmle(data, pnar::ModelSpec{pnar::Family::linear, p, 0, 1});
    for (auto fam : {pnar::Family::smooth_transition, pnar::Family::threshold}) {
      const pnar::ModelSpec alt{fam, p, 0, 1 + rep % p};
      const auto band = fam == pnar::Family::threshold ? pnar::gamma_band_t(data) : pnar::gamma_band_st(data, p, alt.d, 10);
      const auto sup = pnar::global_optimise_lm(fr.theta_hat, data, alt, band);
      const pnar::detail::NullFit nf(fr.theta_hat, data, alt);
      double grid = -1.0;
      for (double g : pnar::GammaGrid{band.lower, band.upper, 1000}.points()) {
        try {
          grid = std::max(grid, nf.pieces(g).lm);
        } catch (const pnar::NumericalError&) {
        }
      }
      worst = std::max(worst, grid - sup.value);
      ++instances;
    }
  }
  return {worst <= 1e-6, fmt("%d instances (ST and T), max(grid - sup) = %.2e (tol 1e-6), %.1f s", instances, worst,
                             seconds_since(t0))};
}

// 10. nested models
Outcome nesting() {
  std::mt19937_64 rng(1010);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto in = testing::random_instance(rng, pnar::Family::linear);
    const auto ref = pnar::mean_linear(in.theta, in.data, in.spec).lambda;
    pnar::Theta th = in.theta;
    th.alpha.setZero();
    th.alpha0 = 0.0;
    th.alpha1.setZero();
    th.alpha2.setZero();
    th.gamma = 0.0;
    const pnar::ModelSpec id{pnar::Family::intercept_drift, in.spec.p, in.spec.q, in.spec.d};
    worst = std::max(worst, (pnar::mean_id(th, in.data, id).lambda - ref).cwiseAbs().maxCoeff());
    th.gamma = 0.37;
    const pnar::ModelSpec st{pnar::Family::smooth_transition, in.spec.p, in.spec.q, in.spec.d};
    worst = std::max(worst, (pnar::mean_st(th, in.data, st).lambda - ref).cwiseAbs().maxCoeff());
    th.gamma = in.data.network_means().mean();
    const pnar::ModelSpec t{pnar::Family::threshold, in.spec.p, in.spec.q, in.spec.d};
    worst = std::max(worst, (pnar::mean_t(th, in.data, t).lambda - ref).cwiseAbs().maxCoeff());
  }
  const auto adj = pnar::gen_sbm(15, 2, 0.7, true, 10);
  int monotone_fail = 0, scans = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto data = testing::simulate_linear(adj, Eigen::Vector3d(0.3, 0.2, 0.3), 1, 400, 0.0, 1000 + rep);
    const auto rows = pnar::ic_scan(data, {1, 2, 3, 4}, pnar::Criterion::qic);
    for (std::size_t k = 1; k < rows.size(); ++k) monotone_fail += !(rows[k].loglik >= rows[k - 1].loglik);
    ++scans;
  }
  return {worst <= 1e-12 && monotone_fail == 0,
          fmt("max |nested - linear| = %.1e (tol 1e-12) over 50 instances; loglik decreases in p: %d (over %d scans "
              "p = 1..4)",
              worst, monotone_fail, scans)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradients},
      {"2 information criteria identity", ic_identity},
      {"3 QMLE recovery", recovery},
      {"4 robust vs naive standard errors", robust_se},
      {"5 conditional Poisson marginals", poisson_marginals},
      {"6 linearity test size", test_size},
      {"7 Davies bound structure", davies},
      {"8 bootstrap arithmetic and determinism", bootstrap_determinism},
      {"9 sup-LM optimizer", sup_lm},
      {"10 nesting identities", nesting},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
