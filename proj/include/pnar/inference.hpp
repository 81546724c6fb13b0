#pragma once

// Pooled Poisson quasi-likelihood inference: log-likelihood, score, Hessian and
// information matrices, constrained QMLE with sandwich standard errors, and
// information criteria.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pnar/error.hpp"
#include "pnar/models.hpp"
#include "pnar/optim.hpp"
#include "pnar/stats.hpp"

namespace pnar {

/// Stationarity is imposed as persistence <= 1 - kStationarityMargin.
inline constexpr double kStationarityMargin = 1e-8;

/// sum_{t,i} (Y_{i,t} log lambda_{i,t} - lambda_{i,t}) over the modelled window.
inline double quasi_loglik(const MeanPath& mp, const NetworkPanel& data) {
  const Eigen::MatrixXd& y = data.counts();
  double ll = 0.0;
  for (int s = 0; s < mp.times(); ++s) {
    double col = 0.0;
    for (int i = 0; i < mp.nodes(); ++i) {
      const double lam = mp.lambda(i, s);
      if (!(lam > 0.0)) throw NumericalError("non-positive conditional mean in quasi log-likelihood");
      const double yy = y(i, mp.first + s);
      col += (yy > 0.0 ? yy * std::log(lam) : 0.0) - lam;
    }
    ll += col;
  }
  return ll;
}

inline double quasi_loglik(const Theta& th, const NetworkPanel& data, const ModelSpec& spec,
                           int first = -1) {
  return quasi_loglik(detail::evaluate_mean(th, data, spec, first, false), data);
}

/// Total score and its per-time addends s_t (one column per modelled time point).
struct Score {
  Eigen::VectorXd total;
  Eigen::MatrixXd per_time;
};

inline Score score(const MeanPath& mp, const NetworkPanel& data) {
  const Eigen::MatrixXd& y = data.counts();
  const Eigen::Index m = mp.grad.cols();
  Score sc;
  sc.per_time = Eigen::MatrixXd::Zero(m, mp.times());
  for (int s = 0; s < mp.times(); ++s) {
    for (int i = 0; i < mp.nodes(); ++i) {
      const double r = y(i, mp.first + s) / mp.lambda(i, s) - 1.0;
      sc.per_time.col(s) += r * mp.grad.row(mp.cell(s, i)).transpose();
    }
  }
  sc.total = sc.per_time.rowwise().sum();
  return sc;
}

inline Score score(const Theta& th, const NetworkPanel& data, const ModelSpec& spec, int first = -1) {
  return score(detail::evaluate_mean(th, data, spec, first), data);
}

/// How the conditional covariance Sigma_t enters the information matrix.
enum class CovariancePlugin {
  outer_product,  ///< xi_t xi_t' (cross-sectional dependence allowed)
  diagonal,       ///< D_t (contemporaneous independence)
};

struct QuasiMatrices {
  Eigen::MatrixXd hessian;      ///< H_T
  Eigen::MatrixXd information;  ///< B_T
  Eigen::MatrixXd sandwich;     ///< H^-1 B H^-1
  Eigen::MatrixXd hessian_inverse;
};

namespace detail {

/// Sum_{t,i} weight_{i,t} g g'.
template <class WeightFn>
Eigen::MatrixXd weighted_gram(const MeanPath& mp, WeightFn&& weight) {
  Eigen::VectorXd w(mp.grad.rows());
  for (int s = 0; s < mp.times(); ++s)
    for (int i = 0; i < mp.nodes(); ++i) w(mp.cell(s, i)) = weight(i, s);
  Eigen::MatrixXd out = mp.grad.transpose() * (mp.grad.array().colwise() * w.array()).matrix();
  return 0.5 * (out + out.transpose());
}

/// Inverse of a symmetric positive definite matrix; throws with the condition number otherwise.
inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double hi = ev.cwiseAbs().maxCoeff();
  const double lo = ev.minCoeff();
  if (!(hi > 0.0) || !(lo > 1e-13 * hi)) {
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    throw NumericalError(what + " is numerically singular (condition number " + std::to_string(cond) +
                         ")");
  }
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// H_T = sum Y/lambda^2 g g'.
inline Eigen::MatrixXd hessian_matrix(const MeanPath& mp, const NetworkPanel& data) {
  const Eigen::MatrixXd& y = data.counts();
  return detail::weighted_gram(mp, [&](int i, int s) {
    const double lam = mp.lambda(i, s);
    return y(i, mp.first + s) / (lam * lam);
  });
}

/// B_T = sum_t dlambda_t' D^-1 Sigma_t D^-1 dlambda_t.
inline Eigen::MatrixXd information_matrix(const MeanPath& mp, const NetworkPanel& data,
                                          CovariancePlugin plugin = CovariancePlugin::outer_product) {
  if (plugin == CovariancePlugin::diagonal)
    return detail::weighted_gram(mp, [&](int i, int s) { return 1.0 / mp.lambda(i, s); });
  // with Sigma_t = xi xi' each addend collapses to s_t s_t'
  const Score sc = score(mp, data);
  Eigen::MatrixXd b = sc.per_time * sc.per_time.transpose();
  return 0.5 * (b + b.transpose());
}

inline QuasiMatrices quasi_matrices(const MeanPath& mp, const NetworkPanel& data,
                                    CovariancePlugin plugin = CovariancePlugin::outer_product) {
  QuasiMatrices qm;
  qm.hessian = hessian_matrix(mp, data);
  qm.information = information_matrix(mp, data, plugin);
  qm.hessian_inverse = detail::spd_inverse(qm.hessian, "Hessian H_T");
  qm.sandwich = qm.hessian_inverse * qm.information * qm.hessian_inverse;
  qm.sandwich = (0.5 * (qm.sandwich + qm.sandwich.transpose())).eval();
  return qm;
}

inline QuasiMatrices quasi_matrices(const Theta& th, const NetworkPanel& data, const ModelSpec& spec,
                                    int first = -1) {
  return quasi_matrices(detail::evaluate_mean(th, data, spec, first), data);
}

struct InfoCriteria {
  double aic = 0.0;
  double bic = 0.0;
  double qic = 0.0;
};

/// AIC = -2l + 2m, BIC = -2l + m log T, QIC = -2l + 2 tr(H^-1 B).
inline InfoCriteria info_criteria(double loglik, int m, int t, double trace_hinv_b) {
  detail::require(m >= 1, "info_criteria: parameter count must be >= 1");
  detail::require(t >= 2, "info_criteria: sample length must be >= 2");
  return {-2.0 * loglik + 2.0 * m, -2.0 * loglik + m * std::log(static_cast<double>(t)),
          -2.0 * loglik + 2.0 * trace_hinv_b};
}

/// Least squares with a ridge fallback (1e-6) when the design is rank deficient.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() == x.cols()) return qr.solve(y);
  Eigen::MatrixXd xtx = x.transpose() * x;
  xtx.diagonal().array() += 1e-6;
  return xtx.ldlt().solve(x.transpose() * y);
}

namespace detail {

/// Pulls lag coefficients back inside the stationary region when needed.
inline void shrink_to_stationary(const ModelSpec& spec, Theta& th, double target = 0.95) {
  const double s = persistence(spec, th);
  if (s < 1.0 - kStationarityMargin) return;
  const double f = target / s;
  th.beta1 *= f;
  th.beta2 *= f;
  if (spec.family == Family::smooth_transition) th.alpha *= f;
  if (spec.family == Family::threshold) {
    th.alpha1 *= f;
    th.alpha2 *= f;
  }
}

}  // namespace detail

/// Starting values: pooled OLS of Y (log(1+Y) for the log-linear model) on the linear
/// regressors, floored at 0.01 for positivity-constrained families. Nonlinear parameters
/// start at gamma = 0.1 and alpha = 0.01; a T threshold is left as given in `base`.
inline Theta init_ls(const NetworkPanel& data, const ModelSpec& spec, int first = -1,
                     const Theta& base = {}) {
  spec.validate();
  if (first < 0) first = spec.p;
  detail::require(data.t() > first, "insufficient time points for p = " + std::to_string(spec.p));
  const bool log_scale = spec.family == Family::loglinear;
  const Eigen::MatrixXd& ys = log_scale ? data.log_counts() : data.counts();
  const Eigen::MatrixXd& xs = log_scale ? data.log_network_means() : data.network_means();
  const int n = data.n();
  const int tn = data.t() - first;
  const int m1 = spec.linear_size();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n) * tn, m1);
  Eigen::VectorXd resp(design.rows());
  for (int s = 0; s < tn; ++s) {
    const int t = first + s;
    for (int i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(s) * n + i;
      design(r, 0) = 1.0;
      for (int h = 0; h < spec.p; ++h) {
        design(r, 1 + h) = xs(i, t - h - 1);
        design(r, 1 + spec.p + h) = ys(i, t - h - 1);
      }
      for (int l = 0; l < spec.q; ++l) design(r, 1 + 2 * spec.p + l) = data.covariates()(i, l);
      resp(r) = ys(i, t);
    }
  }
  Eigen::VectorXd coef = least_squares(design, resp);
  if (spec.positive()) coef = coef.cwiseMax(0.01);

  Theta th = base.beta1.size() == spec.p ? base : Theta::zeros(spec);
  if (th.alpha.size() != spec.p) {
    const double g = th.gamma;
    th = Theta::zeros(spec);
    th.gamma = g;
  }
  th.beta0 = coef(0);
  th.beta1 = coef.segment(1, spec.p);
  th.beta2 = coef.segment(1 + spec.p, spec.p);
  th.delta = coef.segment(1 + 2 * spec.p, spec.q);
  switch (spec.family) {
    case Family::intercept_drift: th.gamma = 0.1; break;
    case Family::smooth_transition:
      th.alpha.setConstant(0.01);
      th.gamma = 0.1;
      break;
    case Family::threshold:
      th.alpha0 = 0.01;
      th.alpha1.setConstant(0.01);
      th.alpha2.setConstant(0.01);
      break;
    default: break;
  }
  detail::shrink_to_stationary(spec, th);
  return th;
}

struct FitOptions {
  int maxeval = 100;  ///< SQP iteration cap; 0 reports the fit at the start value
  double xtol_rel = 1e-8;
  std::optional<Theta> init;  ///< empty: least-squares start
  bool constrained = true;
  int first = -1;  ///< first modelled time index (0-based); -1 means p
};

struct FitResult {
  ModelSpec spec;
  Theta theta_hat;
  std::vector<std::string> names;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;        ///< sandwich standard errors
  Eigen::VectorXd naive_se;  ///< sqrt(diag(H^-1))
  Eigen::VectorXd zstat;
  Eigen::VectorXd pval;
  Eigen::VectorXd score_at_opt;
  double loglik = 0.0;
  double loglik_init = 0.0;
  double aic = 0.0, bic = 0.0, qic = 0.0;
  int iterations = 0;
  bool converged = false;
  int first = 0;
  int sample_length = 0;  ///< T used in the BIC penalty
  std::vector<std::string> warnings;

  [[nodiscard]] double score_sup_norm() const { return score_at_opt.lpNorm<Eigen::Infinity>(); }
};

namespace detail {

/// Maps optimiser coordinates to the packed parameter vector. The log-linear
/// constrained fit splits each lag coefficient into positive and negative parts.
struct Parametrisation {
  Eigen::MatrixXd to_theta;  // packed = to_theta * u
  Eigen::VectorXd lower;
  optim::LinearInequalities ineq;

  [[nodiscard]] Eigen::VectorXd packed(const Eigen::VectorXd& u) const { return to_theta * u; }
};

inline Parametrisation make_parametrisation(const ModelSpec& spec, bool constrained) {
  const int m = spec.size();
  const int p = spec.p;
  const double inf = std::numeric_limits<double>::infinity();
  Parametrisation par;
  if (spec.family == Family::loglinear && constrained) {
    // u = (beta0, beta1+, beta1-, beta2+, beta2-, delta)
    const int mu = m + 2 * p;
    par.to_theta = Eigen::MatrixXd::Zero(m, mu);
    par.lower = Eigen::VectorXd::Constant(mu, -inf);
    par.to_theta(0, 0) = 1.0;
    for (int k = 0; k < 2 * p; ++k) {
      par.to_theta(1 + k, 1 + 2 * k) = 1.0;
      par.to_theta(1 + k, 2 + 2 * k) = -1.0;
      par.lower(1 + 2 * k) = 0.0;
      par.lower(2 + 2 * k) = 0.0;
    }
    for (int l = 0; l < spec.q; ++l) par.to_theta(1 + 2 * p + l, 1 + 4 * p + l) = 1.0;
    par.ineq.a = Eigen::MatrixXd::Zero(1, mu);
    par.ineq.a.block(0, 1, 1, 4 * p).setOnes();
    par.ineq.b = Eigen::VectorXd::Constant(1, 1.0 - kStationarityMargin);
    return par;
  }
  par.to_theta = Eigen::MatrixXd::Identity(m, m);
  par.lower = Eigen::VectorXd::Constant(m, -inf);
  if (!constrained) return par;
  par.lower.setZero();
  par.ineq.a = Eigen::MatrixXd::Zero(1, m);
  par.ineq.a.block(0, 1, 1, 2 * p).setOnes();
  const int m1 = spec.linear_size();
  if (spec.family == Family::smooth_transition) par.ineq.a.block(0, m1, 1, p).setOnes();
  if (spec.family == Family::threshold) par.ineq.a.block(0, m1 + 1, 1, 2 * p).setOnes();
  par.ineq.b = Eigen::VectorXd::Constant(1, 1.0 - kStationarityMargin);
  return par;
}

inline Eigen::VectorXd split_coordinates(const ModelSpec& spec, const Eigen::VectorXd& packed,
                                         const Parametrisation& par) {
  if (par.to_theta.cols() == packed.size()) return packed;
  const int p = spec.p;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(par.to_theta.cols());
  u(0) = packed(0);
  for (int k = 0; k < 2 * p; ++k) {
    u(1 + 2 * k) = std::max(packed(1 + k), 0.0);
    u(2 + 2 * k) = std::max(-packed(1 + k), 0.0);
  }
  for (int l = 0; l < spec.q; ++l) u(1 + 4 * p + l) = packed(1 + 2 * p + l);
  return u;
}

/// Moves a starting point into { u >= lower, a u <= b }.
inline Eigen::VectorXd project_feasible(Eigen::VectorXd u, const Parametrisation& par) {
  u = u.cwiseMax(par.lower);
  for (Eigen::Index r = 0; r < par.ineq.size(); ++r) {
    const double lhs = par.ineq.a.row(r).dot(u);
    if (lhs > par.ineq.b(r)) {
      // all constrained coordinates are non-negative here, so scaling them down is enough
      const double f = 0.95 * par.ineq.b(r) / lhs;
      for (Eigen::Index k = 0; k < u.size(); ++k)
        if (par.ineq.a(r, k) != 0.0) u(k) *= f;
    }
  }
  return u;
}

}  // namespace detail

/// Maximises the pooled quasi log-likelihood subject to non-negativity and stationarity
/// (or only lambda > 0 when `constrained` is false) and reports sandwich inference.
inline FitResult fit_qmle(const NetworkPanel& data, const ModelSpec& spec, const FitOptions& opt = {}) {
  spec.validate();
  const int first = opt.first < 0 ? spec.p : opt.first;
  detail::require(first >= spec.p, "estimation window must start after the first p lags");
  detail::require(data.t() > first + 1, "insufficient time points: T = " + std::to_string(data.t()) +
                                            " for lag order p = " + std::to_string(spec.p));
  detail::require(spec.q == data.q(), "model has q = " + std::to_string(spec.q) +
                                          " but the covariate matrix has " + std::to_string(data.q()) +
                                          " columns");
  detail::require(opt.maxeval >= 0, "maxeval must be >= 0");

  FitResult fr;
  fr.spec = spec;
  fr.first = first;
  fr.sample_length = data.t();
  fr.names = parameter_names(spec);

  Theta start = opt.init ? *opt.init : init_ls(data, spec, first);
  start.check_shape(spec);
  const detail::Parametrisation par = detail::make_parametrisation(spec, opt.constrained);
  const Eigen::VectorXd u_raw = detail::split_coordinates(spec, start.pack(spec), par);
  const Eigen::VectorXd u0 = detail::project_feasible(u_raw, par);
  if ((u0 - u_raw).lpNorm<Eigen::Infinity>() > 0.0)
    fr.warnings.emplace_back("initial values projected into the feasible region");

  const bool exact_newton = spec.family == Family::linear || spec.family == Family::loglinear;
  const bool require_positive = !opt.constrained && spec.family != Family::loglinear;

  auto value_only = [&](const Eigen::VectorXd& u) {
    const Theta th = start.with_packed(spec, par.packed(u));
    const MeanPath mp = detail::evaluate_mean(th, data, spec, first, false);
    if (require_positive && !(mp.min_raw > 0.0)) return -std::numeric_limits<double>::infinity();
    const double ll = quasi_loglik(mp, data);
    return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
  };
  auto full = [&](const Eigen::VectorXd& u) {
    optim::Evaluation ev;
    const Theta th = start.with_packed(spec, par.packed(u));
    const MeanPath mp = detail::evaluate_mean(th, data, spec, first, true);
    if (require_positive && !(mp.min_raw > 0.0)) return ev;
    ev.value = quasi_loglik(mp, data);
    const Score sc = score(mp, data);
    Eigen::MatrixXd curv;
    if (spec.family == Family::loglinear) {
      curv = detail::weighted_gram(mp, [&](int i, int s) { return 1.0 / mp.lambda(i, s); });
    } else {
      curv = hessian_matrix(mp, data);
    }
    ev.gradient = par.to_theta.transpose() * sc.total;
    ev.curvature = par.to_theta.transpose() * curv * par.to_theta;
    if (!exact_newton) {
      // H_T only approximates the curvature of nonlinear means; keep it well conditioned
      ev.curvature.diagonal().array() += 1e-8 * std::max(1.0, ev.curvature.diagonal().maxCoeff());
    }
    return ev;
  };

  fr.loglik_init = value_only(u0);
  optim::SqpOptions sopt;
  sopt.max_iterations = opt.maxeval;
  sopt.xtol_rel = opt.xtol_rel;
  const optim::SqpResult sr = optim::maximize(full, value_only, u0, par.lower, par.ineq, sopt);
  fr.iterations = sr.iterations;
  fr.converged = sr.converged;
  if (!sr.converged) fr.warnings.push_back("optimizer did not converge: " + sr.message);

  fr.estimate = par.packed(sr.x);
  fr.theta_hat = start.with_packed(spec, fr.estimate);
  const MeanPath mp = detail::evaluate_mean(fr.theta_hat, data, spec, first, true);
  fr.loglik = quasi_loglik(mp, data);
  fr.score_at_opt = score(mp, data).total;

  const int m = spec.size();
  fr.se = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
  fr.naive_se = fr.se;
  double trace = std::numeric_limits<double>::quiet_NaN();
  try {
    const QuasiMatrices qm = quasi_matrices(mp, data);
    fr.se = qm.sandwich.diagonal().cwiseMax(0.0).cwiseSqrt();
    fr.naive_se = qm.hessian_inverse.diagonal().cwiseMax(0.0).cwiseSqrt();
    trace = (qm.hessian_inverse * qm.information).trace();
  } catch (const NumericalError& e) {
    fr.warnings.push_back(std::string("standard errors unavailable: ") + e.what());
  }
  fr.zstat = fr.estimate.cwiseQuotient(fr.se);
  fr.pval = fr.zstat.unaryExpr([](double z) { return stats::normal_two_sided(z); });
  const InfoCriteria ic = info_criteria(fr.loglik, m, data.t(), trace);
  fr.aic = ic.aic;
  fr.bic = ic.bic;
  fr.qic = ic.qic;
  return fr;
}

enum class Criterion { aic, bic, qic };

inline Criterion criterion_from_string(const std::string& s) {
  if (s == "aic" || s == "AIC") return Criterion::aic;
  if (s == "bic" || s == "BIC") return Criterion::bic;
  if (s == "qic" || s == "QIC") return Criterion::qic;
  throw ValidationError("unknown information criterion '" + s + "' (expected aic|bic|qic)");
}

struct IcRow {
  int p = 0;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double aic = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  double qic = std::numeric_limits<double>::quiet_NaN();
  double value = std::numeric_limits<double>::quiet_NaN();  ///< selected criterion
  bool converged = false;
  bool ok = false;
  std::string message;
};

/// Fits the linear PNAR(p, q) for every p in `p_values` on the common window
/// t > max(p_values), so the log-likelihoods are comparable across rows.
inline std::vector<IcRow> ic_scan(const NetworkPanel& data, const std::vector<int>& p_values,
                                  Criterion criterion = Criterion::qic, const FitOptions& base = {}) {
  detail::require(!p_values.empty(), "ic_scan: empty lag range");
  const int pmax = *std::max_element(p_values.begin(), p_values.end());
  detail::require(pmax < data.t() - 1, "ic_scan: largest lag order " + std::to_string(pmax) +
                                           " leaves insufficient time points (T = " +
                                           std::to_string(data.t()) + ")");
  std::vector<IcRow> rows;
  std::map<int, Theta> fitted;
  for (int p : p_values) {
    IcRow row;
    row.p = p;
    try {
      ModelSpec spec{Family::linear, p, data.q(), 1};
      FitOptions opt = base;
      opt.init.reset();
      opt.first = pmax;
      FitResult fr = fit_qmle(data, spec, opt);
      // a smaller fitted model padded with zero lags is feasible here and starts at its
      // log-likelihood, so the larger model cannot end below it
      const auto smaller = fitted.lower_bound(p);
      if (smaller != fitted.begin()) {
        const Theta& prev = std::prev(smaller)->second;
        Theta warm = Theta::zeros(spec);
        warm.beta0 = prev.beta0;
        warm.delta = prev.delta;
        warm.beta1.head(prev.beta1.size()) = prev.beta1;
        warm.beta2.head(prev.beta2.size()) = prev.beta2;
        opt.init = warm;
        FitResult alt = fit_qmle(data, spec, opt);
        if (alt.loglik < alt.loglik_init) {
          // the optimizer's rounding-level steps ended below the start; report the start
          FitOptions at_start = opt;
          at_start.maxeval = 0;
          FitResult start = fit_qmle(data, spec, at_start);
          start.converged = alt.converged;
          start.iterations = alt.iterations;
          start.warnings = alt.warnings;
          alt = std::move(start);
        }
        if (alt.loglik > fr.loglik) fr = std::move(alt);
      }
      fitted[p] = fr.theta_hat;
      row.loglik = fr.loglik;
      row.aic = fr.aic;
      row.bic = fr.bic;
      row.qic = fr.qic;
      row.converged = fr.converged;
      row.ok = true;
      if (!fr.warnings.empty()) row.message = fr.warnings.front();
    } catch (const std::exception& e) {
      row.message = e.what();
    }
    row.value = criterion == Criterion::aic ? row.aic : criterion == Criterion::bic ? row.bic : row.qic;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pnar
