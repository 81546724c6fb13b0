#pragma once

// Conditional-mean recursions of the Poisson network autoregressions and their
// analytic gradients with respect to the packed parameter vector.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pnar/error.hpp"
#include "pnar/netgraph.hpp"

namespace pnar {

enum class Family { linear, loglinear, intercept_drift, smooth_transition, threshold };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::linear: return "linear";
    case Family::loglinear: return "loglinear";
    case Family::intercept_drift: return "id";
    case Family::smooth_transition: return "st";
    case Family::threshold: return "t";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "linear") return Family::linear;
  if (s == "loglinear" || s == "log-linear") return Family::loglinear;
  if (s == "id") return Family::intercept_drift;
  if (s == "st") return Family::smooth_transition;
  if (s == "t") return Family::threshold;
  throw ValidationError("unknown model family '" + s + "' (expected linear|loglinear|id|st|t)");
}

/// Lambda values below this are clamped before logs and divisions.
inline constexpr double kLambdaFloor = 1e-12;

/// Model family, lag order p, covariate count q and nonlinearity delay d.
struct ModelSpec {
  Family family = Family::linear;
  int p = 1;
  int q = 0;
  int d = 1;

  [[nodiscard]] bool nonlinear() const {
    return family != Family::linear && family != Family::loglinear;
  }
  /// Positivity-constrained families (everything but the log-linear one).
  [[nodiscard]] bool positive() const { return family != Family::loglinear; }

  [[nodiscard]] int linear_size() const { return 1 + 2 * p + q; }

  /// Size of the nonlinear block of the packed vector. The threshold of T is not packed.
  [[nodiscard]] int nonlinear_size() const {
    switch (family) {
      case Family::intercept_drift: return 1;
      case Family::smooth_transition: return p + 1;
      case Family::threshold: return 2 * p + 1;
      default: return 0;
    }
  }
  [[nodiscard]] int size() const { return linear_size() + nonlinear_size(); }

  void validate() const {
    detail::require(p >= 1, "lag order p must be >= 1");
    detail::require(q >= 0, "covariate count q must be >= 0");
    if (nonlinear()) {
      detail::require(d >= 1 && d <= p, "delay d must satisfy 1 <= d <= p, got d = " +
                                            std::to_string(d) + ", p = " + std::to_string(p));
    }
  }
};

/// Parameters of every family. Fields that a family does not use stay empty/zero.
struct Theta {
  double beta0 = 0.0;
  Eigen::VectorXd beta1;  // network effects, lags 1..p
  Eigen::VectorXd beta2;  // autoregressive effects, lags 1..p
  Eigen::VectorXd delta;  // covariate effects
  double gamma = 0.0;     // ID exponent, ST smoothing or T threshold
  Eigen::VectorXd alpha;  // ST regime network effects
  double alpha0 = 0.0;    // T regime intercept
  Eigen::VectorXd alpha1;
  Eigen::VectorXd alpha2;

  static Theta zeros(const ModelSpec& spec) {
    Theta th;
    th.beta1 = Eigen::VectorXd::Zero(spec.p);
    th.beta2 = Eigen::VectorXd::Zero(spec.p);
    th.delta = Eigen::VectorXd::Zero(spec.q);
    th.alpha = Eigen::VectorXd::Zero(spec.p);
    th.alpha1 = Eigen::VectorXd::Zero(spec.p);
    th.alpha2 = Eigen::VectorXd::Zero(spec.p);
    return th;
  }

  /// Linear PNAR parameters from a packed (beta0, beta1., beta2., delta.) vector.
  static Theta linear(const ModelSpec& spec, const Eigen::VectorXd& packed) {
    ModelSpec lin = spec;
    lin.family = Family::linear;
    return zeros(spec).with_packed(lin, packed.head(lin.size()));
  }

  /// Layout: beta0, beta1[1..p], beta2[1..p], delta[1..q], then
  /// ID: gamma | ST: alpha[1..p], gamma | T: alpha0, alpha1[1..p], alpha2[1..p].
  [[nodiscard]] Eigen::VectorXd pack(const ModelSpec& spec) const {
    check_shape(spec);
    Eigen::VectorXd v(spec.size());
    const int p = spec.p;
    v(0) = beta0;
    v.segment(1, p) = beta1;
    v.segment(1 + p, p) = beta2;
    v.segment(1 + 2 * p, spec.q) = delta;
    const int m1 = spec.linear_size();
    switch (spec.family) {
      case Family::intercept_drift: v(m1) = gamma; break;
      case Family::smooth_transition:
        v.segment(m1, p) = alpha;
        v(m1 + p) = gamma;
        break;
      case Family::threshold:
        v(m1) = alpha0;
        v.segment(m1 + 1, p) = alpha1;
        v.segment(m1 + 1 + p, p) = alpha2;
        break;
      default: break;
    }
    return v;
  }

  /// Copy with the packed fields replaced; unpacked fields (T threshold) are kept.
  [[nodiscard]] Theta with_packed(const ModelSpec& spec, const Eigen::VectorXd& v) const {
    detail::require(v.size() == spec.size(), "parameter vector has length " +
                                                 std::to_string(v.size()) + ", model expects " +
                                                 std::to_string(spec.size()));
    Theta th = *this;
    if (th.beta1.size() != spec.p) {
      th = zeros(spec);
      th.gamma = gamma;
    }
    const int p = spec.p;
    th.beta0 = v(0);
    th.beta1 = v.segment(1, p);
    th.beta2 = v.segment(1 + p, p);
    th.delta = v.segment(1 + 2 * p, spec.q);
    const int m1 = spec.linear_size();
    switch (spec.family) {
      case Family::intercept_drift: th.gamma = v(m1); break;
      case Family::smooth_transition:
        th.alpha = v.segment(m1, p);
        th.gamma = v(m1 + p);
        break;
      case Family::threshold:
        th.alpha0 = v(m1);
        th.alpha1 = v.segment(m1 + 1, p);
        th.alpha2 = v.segment(m1 + 1 + p, p);
        break;
      default: break;
    }
    return th;
  }

  void check_shape(const ModelSpec& spec) const {
    detail::require(beta1.size() == spec.p && beta2.size() == spec.p,
                    "theta lag vectors do not match p = " + std::to_string(spec.p));
    detail::require(delta.size() == spec.q,
                    "theta has " + std::to_string(delta.size()) + " covariate effects, model has q = " +
                        std::to_string(spec.q));
    if (spec.family == Family::smooth_transition)
      detail::require(alpha.size() == spec.p, "ST theta needs p alpha coefficients");
    if (spec.family == Family::threshold)
      detail::require(alpha1.size() == spec.p && alpha2.size() == spec.p,
                      "T theta needs p alpha1 and p alpha2 coefficients");
  }
};

/// Parameter names matching the packed layout (beta0, beta11, ..., delta1, ...).
inline std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names{"beta0"};
  for (int h = 1; h <= spec.p; ++h) names.push_back("beta1" + std::to_string(h));
  for (int h = 1; h <= spec.p; ++h) names.push_back("beta2" + std::to_string(h));
  for (int l = 1; l <= spec.q; ++l) names.push_back("delta" + std::to_string(l));
  switch (spec.family) {
    case Family::intercept_drift: names.emplace_back("gamma"); break;
    case Family::smooth_transition:
      for (int h = 1; h <= spec.p; ++h) names.push_back("alpha" + std::to_string(h));
      names.emplace_back("gamma");
      break;
    case Family::threshold:
      names.emplace_back("alpha0");
      for (int h = 1; h <= spec.p; ++h) names.push_back("alpha1" + std::to_string(h));
      for (int h = 1; h <= spec.p; ++h) names.push_back("alpha2" + std::to_string(h));
      break;
    default: break;
  }
  return names;
}

/// Sum of the lag coefficients entering the stationarity inequality.
inline double persistence(const ModelSpec& spec, const Theta& th) {
  double s = 0.0;
  for (int h = 0; h < spec.p; ++h) {
    if (spec.family == Family::loglinear) {
      s += std::abs(th.beta1(h)) + std::abs(th.beta2(h));
    } else {
      s += th.beta1(h) + th.beta2(h);
      if (spec.family == Family::smooth_transition) s += th.alpha(h);
      if (spec.family == Family::threshold) s += th.alpha1(h) + th.alpha2(h);
    }
  }
  return s;
}

inline bool is_stationary(const ModelSpec& spec, const Theta& th) { return persistence(spec, th) < 1.0; }

/// Throws when a positivity-constrained family carries a negative coefficient.
inline void check_nonnegative(const ModelSpec& spec, const Theta& th) {
  if (!spec.positive()) return;
  const Eigen::VectorXd v = th.pack(spec);
  const auto names = parameter_names(spec);
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    detail::require(v(k) >= 0.0, "coefficient " + names[k] + " = " + std::to_string(v(k)) +
                                     " is negative; the " + to_string(spec.family) +
                                     " model requires non-negative coefficients");
  }
  if (spec.family == Family::threshold)
    detail::require(th.gamma >= 0.0, "threshold gamma must be non-negative");
}

/// Panel, network and covariates together with the precomputed network means.
class NetworkPanel {
 public:
  NetworkPanel(CountPanel panel, Adjacency adj, Eigen::MatrixXd covariates = {})
      : panel_(std::move(panel)), adj_(std::move(adj)), z_(std::move(covariates)) {
    detail::require(adj_.n() == panel_.n(), "adjacency has " + std::to_string(adj_.n()) +
                                                " nodes but the panel has " +
                                                std::to_string(panel_.n()));
    if (z_.size() == 0) z_.resize(panel_.n(), 0);
    detail::require(z_.rows() == panel_.n(), "covariates have " + std::to_string(z_.rows()) +
                                                 " rows, expected one per node (" +
                                                 std::to_string(panel_.n()) + ")");
    detail::require(z_.allFinite(), "covariates contain non-finite values");
    x_ = pnar::network_means(adj_, panel_.counts());
    log_y_ = panel_.counts().array().log1p().matrix();
    log_x_ = pnar::network_means(adj_, log_y_);
  }

  [[nodiscard]] int n() const { return panel_.n(); }
  [[nodiscard]] int t() const { return panel_.t(); }
  [[nodiscard]] int q() const { return static_cast<int>(z_.cols()); }
  [[nodiscard]] const CountPanel& panel() const { return panel_; }
  [[nodiscard]] const Adjacency& adjacency() const { return adj_; }
  [[nodiscard]] const Eigen::MatrixXd& counts() const { return panel_.counts(); }
  [[nodiscard]] const Eigen::MatrixXd& covariates() const { return z_; }
  /// X_{i,t}: neighbour average of the counts.
  [[nodiscard]] const Eigen::MatrixXd& network_means() const { return x_; }
  [[nodiscard]] const Eigen::MatrixXd& log_counts() const { return log_y_; }
  /// Neighbour average of log(1 + Y).
  [[nodiscard]] const Eigen::MatrixXd& log_network_means() const { return log_x_; }

 private:
  CountPanel panel_;
  Adjacency adj_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXd x_, log_y_, log_x_;
};

/// Conditional means over the modelled window t = first..T-1 (0-based) and gradients.
/// Row (s * N + i) of `grad` is d lambda_{i, first + s} / d theta.
struct MeanPath {
  int first = 0;
  Eigen::MatrixXd lambda;  // N x (T - first), floored at kLambdaFloor
  Eigen::MatrixXd grad;    // (N (T - first)) x m
  double min_raw = 0.0;    // smallest lambda before flooring

  [[nodiscard]] int nodes() const { return static_cast<int>(lambda.rows()); }
  [[nodiscard]] int times() const { return static_cast<int>(lambda.cols()); }
  [[nodiscard]] Eigen::Index cell(int s, int i) const {
    return static_cast<Eigen::Index>(s) * lambda.rows() + i;
  }
};

namespace detail {

/// Lagged inputs of one node at one time. Index h-1 holds lag h.
/// For the log-linear family `y` and `x` carry log(1+Y) and its neighbour average.
struct CellInput {
  std::span<const double> y;
  std::span<const double> x;
  std::span<const double> z;
};

/// Raw (unfloored) lambda of one cell; writes d lambda / d theta into `grad` if non-empty.
inline double cell_mean(const Theta& th, const ModelSpec& spec, const CellInput& in,
                        std::span<double> grad) {
  const int p = spec.p;
  const int q = spec.q;
  const int m1 = spec.linear_size();
  const bool want = !grad.empty();

  double lin = 0.0;  // everything except the intercept term
  for (int h = 0; h < p; ++h) lin += th.beta1(h) * in.x[h] + th.beta2(h) * in.y[h];
  for (int l = 0; l < q; ++l) lin += th.delta(l) * in.z[l];
  if (want) {
    for (int h = 0; h < p; ++h) {
      grad[1 + h] = in.x[h];
      grad[1 + p + h] = in.y[h];
    }
    for (int l = 0; l < q; ++l) grad[1 + 2 * p + l] = in.z[l];
  }

  switch (spec.family) {
    case Family::linear: {
      if (want) grad[0] = 1.0;
      return th.beta0 + lin;
    }
    case Family::loglinear: {
      const double lambda = std::exp(th.beta0 + lin);
      if (want) {
        grad[0] = 1.0;
        for (int k = 0; k < m1; ++k) grad[k] *= lambda;
      }
      return lambda;
    }
    case Family::intercept_drift: {
      const double lx = std::log1p(in.x[spec.d - 1]);
      const double drift = std::exp(-th.gamma * lx);  // (1 + X_{t-d})^{-gamma}
      if (want) {
        grad[0] = drift;
        grad[m1] = -th.beta0 * drift * lx;
      }
      return th.beta0 * drift + lin;
    }
    case Family::smooth_transition: {
      const double xd = in.x[spec.d - 1];
      const double smooth = std::exp(-th.gamma * xd * xd);
      double regime = 0.0;
      for (int h = 0; h < p; ++h) regime += th.alpha(h) * in.x[h];
      if (want) {
        grad[0] = 1.0;
        for (int h = 0; h < p; ++h) grad[m1 + h] = smooth * in.x[h];
        grad[m1 + p] = -xd * xd * smooth * regime;
      }
      return th.beta0 + lin + smooth * regime;
    }
    case Family::threshold: {
      const double ind = in.x[spec.d - 1] <= th.gamma ? 1.0 : 0.0;
      double regime = 0.0;
      for (int h = 0; h < p; ++h) regime += th.alpha0 + th.alpha1(h) * in.x[h] + th.alpha2(h) * in.y[h];
      if (want) {
        grad[0] = 1.0;
        grad[m1] = p * ind;
        for (int h = 0; h < p; ++h) {
          grad[m1 + 1 + h] = ind * in.x[h];
          grad[m1 + 1 + p + h] = ind * in.y[h];
        }
      }
      return th.beta0 + lin + ind * regime;
    }
  }
  return 0.0;
}

/// Evaluates the whole path without sign checks (the unconstrained optimiser needs this).
inline MeanPath evaluate_mean(const Theta& th, const NetworkPanel& data, const ModelSpec& spec,
                              int first = -1, bool with_grad = true) {
  spec.validate();
  th.check_shape(spec);
  if (first < 0) first = spec.p;
  detail::require(first >= spec.p, "estimation window must start after the first p lags");
  detail::require(spec.q == data.q(), "model has q = " + std::to_string(spec.q) +
                                          " but the covariate matrix has " +
                                          std::to_string(data.q()) + " columns");
  detail::require(data.t() > first, "insufficient time points: T = " + std::to_string(data.t()) +
                                        " with p = " + std::to_string(spec.p));
  const bool log_scale = spec.family == Family::loglinear;
  const Eigen::MatrixXd& ys = log_scale ? data.log_counts() : data.counts();
  const Eigen::MatrixXd& xs = log_scale ? data.log_network_means() : data.network_means();
  const Eigen::MatrixXd& z = data.covariates();

  const int n = data.n();
  const int tn = data.t() - first;
  const int m = spec.size();
  MeanPath mp;
  mp.first = first;
  mp.lambda.resize(n, tn);
  if (with_grad) mp.grad.resize(static_cast<Eigen::Index>(n) * tn, m);
  mp.min_raw = std::numeric_limits<double>::infinity();

  std::vector<double> ylag(spec.p), xlag(spec.p), zrow(spec.q), g(m);
  for (int s = 0; s < tn; ++s) {
    const int t = first + s;
    for (int i = 0; i < n; ++i) {
      for (int h = 0; h < spec.p; ++h) {
        ylag[h] = ys(i, t - h - 1);
        xlag[h] = xs(i, t - h - 1);
      }
      for (int l = 0; l < spec.q; ++l) zrow[l] = z(i, l);
      const CellInput in{ylag, xlag, zrow};
      const double raw = cell_mean(th, spec, in, with_grad ? std::span<double>(g) : std::span<double>());
      mp.min_raw = std::min(mp.min_raw, raw);
      mp.lambda(i, s) = std::isnan(raw) ? kLambdaFloor : std::max(raw, kLambdaFloor);
      if (with_grad) {
        const Eigen::Index row = mp.cell(s, i);
        for (int k = 0; k < m; ++k) mp.grad(row, k) = g[k];
      }
    }
  }
  return mp;
}

inline void require_family(const ModelSpec& spec, Family f, const char* op) {
  detail::require(spec.family == f, std::string(op) + " called with a " + to_string(spec.family) +
                                        " model specification");
}

}  // namespace detail

/// lambda_{i,t} = beta0 + sum_h (beta1h X_{i,t-h} + beta2h Y_{i,t-h}) + sum_l delta_l Z_{i,l}.
inline MeanPath mean_linear(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  detail::require_family(spec, Family::linear, "mean_linear");
  check_nonnegative(spec, th);
  return detail::evaluate_mean(th, data, spec);
}

/// nu = log lambda is linear in log(1+Y) lags and their neighbour averages.
inline MeanPath mean_loglinear(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  detail::require_family(spec, Family::loglinear, "mean_loglinear");
  return detail::evaluate_mean(th, data, spec);
}

/// Intercept drift: beta0 (1 + X_{i,t-d})^{-gamma} replaces the intercept.
inline MeanPath mean_id(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  detail::require_family(spec, Family::intercept_drift, "mean_id");
  check_nonnegative(spec, th);
  return detail::evaluate_mean(th, data, spec);
}

/// Smooth transition: network effect moves from beta1h + alpha_h to beta1h as gamma X^2 grows.
inline MeanPath mean_st(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  detail::require_family(spec, Family::smooth_transition, "mean_st");
  check_nonnegative(spec, th);
  return detail::evaluate_mean(th, data, spec);
}

/// Threshold regime switch on I(X_{i,t-d} <= gamma). The gradient omits gamma.
inline MeanPath mean_t(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  detail::require_family(spec, Family::threshold, "mean_t");
  check_nonnegative(spec, th);
  return detail::evaluate_mean(th, data, spec);
}

/// Dispatches on the family.
inline MeanPath mean_path(const Theta& th, const NetworkPanel& data, const ModelSpec& spec) {
  switch (spec.family) {
    case Family::linear: return mean_linear(th, data, spec);
    case Family::loglinear: return mean_loglinear(th, data, spec);
    case Family::intercept_drift: return mean_id(th, data, spec);
    case Family::smooth_transition: return mean_st(th, data, spec);
    case Family::threshold: return mean_t(th, data, spec);
  }
  return {};
}

}  // namespace pnar
