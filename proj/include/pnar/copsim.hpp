#pragma once

// Copula-Poisson simulation: per time step, a vector of dependent uniforms drives
// exponential waiting times for every node, and the number of arrivals in [0, 1]
// is the count. Marginals are Poisson(lambda_{i,t}) given the past.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "pnar/error.hpp"
#include "pnar/models.hpp"
#include "pnar/netgraph.hpp"

namespace pnar {

enum class CopulaFamily { gaussian, student_t, clayton };
enum class CorrType { equicorrelation, toeplitz };

inline std::string to_string(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::gaussian: return "gaussian";
    case CopulaFamily::student_t: return "t";
    case CopulaFamily::clayton: return "clayton";
  }
  return "?";
}

inline std::string to_string(CorrType c) {
  return c == CorrType::equicorrelation ? "equicorrelation" : "toeplitz";
}

inline CopulaFamily copula_from_string(const std::string& s) {
  if (s == "gaussian" || s == "normal") return CopulaFamily::gaussian;
  if (s == "t" || s == "student" || s == "student_t") return CopulaFamily::student_t;
  if (s == "clayton") return CopulaFamily::clayton;
  throw ValidationError("unknown copula '" + s + "' (expected gaussian, t or clayton)");
}

inline CorrType corrtype_from_string(const std::string& s) {
  if (s == "equicorrelation" || s == "equi" || s == "exchangeable") return CorrType::equicorrelation;
  if (s == "toeplitz" || s == "ar1") return CorrType::toeplitz;
  throw ValidationError("unknown correlation type '" + s + "' (expected equicorrelation or toeplitz)");
}

struct CopulaSpec {
  CopulaFamily family = CopulaFamily::gaussian;
  CorrType corrtype = CorrType::equicorrelation;
  double rho = 0.0;
  double dof = 4.0;  // Student-t only; that copula is experimental

  void validate(int n) const {
    detail::require(std::isfinite(rho), "copula parameter rho must be finite");
    if (family == CopulaFamily::clayton) {
      detail::require(rho > 0.0, "Clayton copula requires rho > 0, got " + std::to_string(rho));
      return;
    }
    if (family == CopulaFamily::student_t)
      detail::require(dof > 0.0 && std::isfinite(dof), "t copula requires dof > 0");
    if (corrtype == CorrType::equicorrelation) {
      detail::require(rho < 1.0, "equicorrelation requires rho < 1, got " + std::to_string(rho));
      if (n > 1)
        detail::require(rho > -1.0 / (n - 1), "equicorrelation requires rho > -1/(N-1) = " +
                                                  std::to_string(-1.0 / (n - 1)) + ", got " + std::to_string(rho));
    } else {
      detail::require(std::abs(rho) < 1.0, "Toeplitz correlation requires |rho| < 1, got " + std::to_string(rho));
    }
  }

  [[nodiscard]] Eigen::MatrixXd correlation(int n) const {
    Eigen::MatrixXd r(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        r(i, j) = i == j ? 1.0
                         : (corrtype == CorrType::equicorrelation ? rho : std::pow(rho, std::abs(i - j)));
    return r;
  }
};

/// Draws rows of dependent uniforms on the open interval (0, 1).
class CopulaSampler {
 public:
  CopulaSampler(const CopulaSpec& spec, int n) : spec_(spec), n_(n), z_(n) {
    detail::require(n >= 1, "copula dimension must be >= 1");
    spec.validate(n);
    if (spec.family != CopulaFamily::clayton && spec.rho != 0.0) {
      Eigen::LLT<Eigen::MatrixXd> llt(spec.correlation(n));
      if (llt.info() != Eigen::Success) throw ValidationError("copula correlation matrix is not positive definite");
      chol_ = llt.matrixL();
    }
  }

  [[nodiscard]] int dim() const { return n_; }

  template <class Rng>
  void draw(Rng& rng, std::span<double> u) {
    // exact 0 or 1 would give an infinite or zero waiting time, so such rows are redrawn
    do {
      fill(rng, u);
    } while (std::any_of(u.begin(), u.end(), [](double v) { return !(v > 0.0 && v < 1.0); }));
  }

 private:
  template <class Rng>
  void fill(Rng& rng, std::span<double> u) {
    switch (spec_.family) {
      case CopulaFamily::gaussian: {
        correlated_normals(rng);
        for (int i = 0; i < n_; ++i) u[i] = 0.5 * std::erfc(-z_(i) / std::sqrt(2.0));
        break;
      }
      case CopulaFamily::student_t: {
        correlated_normals(rng);
        std::chi_squared_distribution<double> chi(spec_.dof);
        const double scale = std::sqrt(spec_.dof / chi(rng));
        const boost::math::students_t dist(spec_.dof);
        for (int i = 0; i < n_; ++i) u[i] = boost::math::cdf(dist, z_(i) * scale);
        break;
      }
      case CopulaFamily::clayton: {
        // Marshall-Olkin frailty: V ~ Gamma(1/rho), U_i = (1 + E_i / V)^(-1/rho)
        std::gamma_distribution<double> frailty(1.0 / spec_.rho, 1.0);
        std::exponential_distribution<double> expo(1.0);
        const double v = frailty(rng);
        for (int i = 0; i < n_; ++i) u[i] = std::pow(1.0 + expo(rng) / v, -1.0 / spec_.rho);
        break;
      }
    }
  }

  template <class Rng>
  void correlated_normals(Rng& rng) {
    for (int i = 0; i < n_; ++i) z_(i) = normal_(rng);
    if (chol_.size() > 0) z_ = chol_.triangularView<Eigen::Lower>() * z_;
  }

  CopulaSpec spec_;
  int n_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd z_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// K x N matrix of copula uniforms; rows are independent draws.
inline Eigen::MatrixXd copula_uniforms(const CopulaSpec& copula, int n_dim, int k_draws, std::uint64_t seed) {
  detail::require(k_draws >= 1, "copula_uniforms needs k_draws >= 1");
  CopulaSampler sampler(copula, n_dim);
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(k_draws, n_dim);
  std::vector<double> row(n_dim);
  for (int k = 0; k < k_draws; ++k) {
    sampler.draw(rng, row);
    for (int i = 0; i < n_dim; ++i) out(k, i) = row[i];
  }
  return out;
}

/// Number of exponential arrivals E_l = -log(U_l) / lambda that fit in [0, 1],
/// capped at the number of uniforms supplied.
inline int poisson_from_waiting_times(std::span<const double> u_col, double lambda) {
  detail::require(lambda > 0.0, "poisson_from_waiting_times requires lambda > 0");
  detail::require(!u_col.empty(), "poisson_from_waiting_times requires K >= 1 uniforms");
  double total = 0.0;
  for (std::size_t k = 0; k < u_col.size(); ++k) {
    detail::require(u_col[k] > 0.0 && u_col[k] <= 1.0, "uniform draws must lie in (0, 1]");
    total += -std::log(u_col[k]) / lambda;
    if (total > 1.0) return static_cast<int>(k);
  }
  return static_cast<int>(u_col.size());
}

struct SimConfig {
  ModelSpec spec;
  Theta theta;
  Adjacency adj;
  Eigen::MatrixXd z;  // N x q, may be empty when q = 0
  int T = 100;
  int burn_in = 500;
  int K = 100;
  CopulaSpec copula;
  std::uint64_t seed = 1234;
  bool strict = false;  // reject non-stationary parameters instead of warning
};

struct SimResult {
  Eigen::MatrixXd counts;  // N x T
  Eigen::MatrixXd lambda;  // N x T conditional means
  int K_used = 0;
  int truncated = 0;  // cells whose count reached the cap K
  std::vector<std::string> warnings;

  [[nodiscard]] CountPanel panel() const { return CountPanel(counts); }
};

namespace detail {

/// Homogeneous fixed point per node: iterate lambda = f(lambda) with every lag at the
/// node's own level. Falls back to the intercept when the map does not settle.
inline Eigen::VectorXd initial_mean(const SimConfig& cfg, bool stationary) {
  const ModelSpec& spec = cfg.spec;
  const int n = cfg.adj.n();
  const bool log_scale = spec.family == Family::loglinear;
  const double fallback = log_scale ? std::exp(cfg.theta.beta0) : cfg.theta.beta0;
  Eigen::VectorXd out = Eigen::VectorXd::Constant(n, std::max(fallback, kLambdaFloor));
  if (!stationary) return out;
  std::vector<double> lag(spec.p), zrow(spec.q);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < spec.q; ++l) zrow[l] = cfg.z(i, l);
    double mu = std::max(fallback, 0.0);
    bool settled = false;
    for (int it = 0; it < 10000; ++it) {
      std::fill(lag.begin(), lag.end(), log_scale ? std::log1p(mu) : mu);
      const double next = cell_mean(cfg.theta, spec, CellInput{lag, lag, zrow}, {});
      if (!std::isfinite(next)) break;
      if (std::abs(next - mu) <= 1e-12 * (1.0 + std::abs(mu))) {
        mu = next;
        settled = true;
        break;
      }
      mu = next;
    }
    if (settled && mu > 0.0) out(i) = mu;
  }
  return out;
}

}  // namespace detail

/// Runs the copula-Poisson recursion for burn_in + T steps and returns the last T.
inline SimResult simulate(const SimConfig& cfg) {
  const ModelSpec& spec = cfg.spec;
  spec.validate();
  cfg.theta.check_shape(spec);
  const int n = cfg.adj.n();
  detail::require(cfg.T >= 1, "simulation length T must be >= 1");
  detail::require(cfg.burn_in >= 0, "burn-in must be >= 0");
  detail::require(cfg.K >= 1, "waiting-time cap K must be >= 1");
  Eigen::MatrixXd z = cfg.z;
  if (z.size() == 0) z.resize(n, 0);
  detail::require(z.rows() == n && z.cols() == spec.q,
                  "covariates must be N x q = " + std::to_string(n) + " x " + std::to_string(spec.q));
  if (spec.positive()) check_nonnegative(spec, cfg.theta);
  cfg.copula.validate(n);

  SimResult res;
  const bool stationary = is_stationary(spec, cfg.theta);
  if (!stationary) {
    const std::string msg = "parameters violate the stationarity condition (persistence " +
                            std::to_string(persistence(spec, cfg.theta)) + " >= 1)";
    if (cfg.strict) throw ValidationError(msg);
    res.warnings.push_back(msg);
  }

  SimConfig zcfg = cfg;
  zcfg.z = z;
  const Eigen::VectorXd lambda0 = detail::initial_mean(zcfg, stationary);
  const bool log_scale = spec.family == Family::loglinear;

  const int steps = cfg.burn_in + cfg.T;
  const int p = spec.p;
  // lagged inputs on the model's scale, one column per step
  Eigen::MatrixXd ys(n, steps), xs(n, steps);
  res.counts.resize(n, cfg.T);
  res.lambda.resize(n, cfg.T);

  std::mt19937_64 rng(cfg.seed);
  CopulaSampler sampler(cfg.copula, n);
  std::vector<double> u(n), cum(n), ylag(p), xlag(p), zrow(spec.q);
  std::vector<int> count(n);
  Eigen::VectorXd lam(n), y(n);
  res.K_used = cfg.K;
  bool escalated = false;

  for (int t = 0; t < steps; ++t) {
    if (t < p) {
      lam = lambda0;
    } else {
      for (int i = 0; i < n; ++i) {
        for (int h = 0; h < p; ++h) {
          ylag[h] = ys(i, t - h - 1);
          xlag[h] = xs(i, t - h - 1);
        }
        for (int l = 0; l < spec.q; ++l) zrow[l] = z(i, l);
        lam(i) = std::max(detail::cell_mean(cfg.theta, spec, detail::CellInput{ylag, xlag, zrow}, {}),
                          kLambdaFloor);
      }
    }
    const double lmax = lam.maxCoeff();
    if (!(lmax <= 1e9))
      throw NumericalError("conditional mean exceeded 1e9 at step " + std::to_string(t) +
                           ": the process is not stationary");
    const int need = static_cast<int>(std::ceil(10.0 * lmax));
    if (need > res.K_used) {
      res.K_used = need;
      escalated = true;
    }

    // draw copula rows until every node's waiting times pass 1 (or the cap is reached)
    std::fill(cum.begin(), cum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    std::vector<bool> open(n, true);
    int n_open = n;
    for (int k = 0; k < res.K_used && n_open > 0; ++k) {
      sampler.draw(rng, u);
      for (int i = 0; i < n; ++i) {
        if (!open[i]) continue;
        cum[i] += -std::log(u[i]) / lam(i);
        if (cum[i] > 1.0) {
          open[i] = false;
          --n_open;
        } else {
          ++count[i];
        }
      }
    }
    for (int i = 0; i < n; ++i) y(i) = count[i];

    if (log_scale) {
      ys.col(t) = y.array().log1p().matrix();
    } else {
      ys.col(t) = y;
    }
    xs.col(t) = network_mean(cfg.adj, ys.col(t));
    if (t >= cfg.burn_in) {
      const int s = t - cfg.burn_in;
      res.counts.col(s) = y;
      res.lambda.col(s) = lam;
      for (int i = 0; i < n; ++i)
        if (count[i] >= res.K_used) ++res.truncated;
    }
  }
  if (escalated)
    res.warnings.push_back("waiting-time cap K raised from " + std::to_string(cfg.K) + " to " +
                           std::to_string(res.K_used) + " (10 x largest conditional mean)");
  if (res.truncated > 0)
    res.warnings.push_back(std::to_string(res.truncated) + " counts reached the cap K = " +
                           std::to_string(res.K_used));
  return res;
}

}  // namespace pnar
