#pragma once

// Quasi-score linearity tests of the linear PNAR model against the intercept-drift,
// smooth-transition and threshold alternatives: chi-square calibration, Davies'
// bound, sup-LM optimisation over the nuisance gamma, and the multiplier score
// bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "pnar/error.hpp"
#include "pnar/inference.hpp"
#include "pnar/models.hpp"
#include "pnar/optim.hpp"
#include "pnar/stats.hpp"

namespace pnar {

enum class PValueMethod { chisq, davies, bootstrap };

inline std::string to_string(PValueMethod m) {
  switch (m) {
    case PValueMethod::chisq: return "chisq";
    case PValueMethod::davies: return "davies";
    case PValueMethod::bootstrap: return "bootstrap";
  }
  return "?";
}

/// Closed interval [lower, upper] for the nuisance parameter plus a grid length.
struct GammaGrid {
  double lower = 0.0;
  double upper = 0.0;
  int len = 10;

  void validate() const {
    detail::require(std::isfinite(lower) && std::isfinite(upper) && lower < upper,
                    "gamma band requires gamma_L < gamma_U, got [" + std::to_string(lower) + ", " +
                        std::to_string(upper) + "]");
    detail::require(len >= 2, "gamma grid needs len >= 2");
  }

  /// len equally spaced points from lower to upper inclusive.
  [[nodiscard]] std::vector<double> points() const {
    std::vector<double> g(len);
    for (int k = 0; k < len; ++k)
      g[k] = k == len - 1 ? upper : lower + (upper - lower) * k / (len - 1);
    return g;
  }
};

struct BootstrapReport {
  double pJ = 0.0;
  double cpJ = 0.0;
  int J = 0;
  int exceedances = 0;
  std::vector<double> sup_values;
  std::uint64_t seed = 0;
};

/// pJ = #exceedances / J and the corrected cpJ = (#exceedances + 1) / (J + 1).
inline BootstrapReport bootstrap_pvalues(int exceedances, int j_total) {
  detail::require(j_total >= 1, "bootstrap needs J >= 1 replicates");
  detail::require(exceedances >= 0 && exceedances <= j_total, "exceedance count out of range");
  BootstrapReport rep;
  rep.J = j_total;
  rep.exceedances = exceedances;
  rep.pJ = static_cast<double>(exceedances) / j_total;
  rep.cpJ = (exceedances + 1.0) / (j_total + 1.0);
  return rep;
}

struct LmTestReport {
  double statistic = 0.0;
  int df = 0;
  double pvalue = 1.0;
  PValueMethod method = PValueMethod::chisq;
  std::optional<double> gamma_opt;
  Family alternative = Family::intercept_drift;
  std::optional<GammaGrid> band;
  std::optional<BootstrapReport> bootstrap;
  std::vector<std::string> warnings;
};

/// Number of tested nonlinear parameters: ID 1, ST p, T 2p + 1.
inline int tested_parameters(const ModelSpec& spec) {
  switch (spec.family) {
    case Family::intercept_drift: return 1;
    case Family::smooth_transition: return spec.p;
    case Family::threshold: return 2 * spec.p + 1;
    default: throw ValidationError("linearity tests need an id, st or t alternative");
  }
}

namespace detail {

/// LM statistic ingredients at one value of gamma.
struct LmPieces {
  double lm = 0.0;        // S2' V^-1 S2 with the raw nonlinear score block
  double raw_lm = 0.0;    // before the clamp at zero
  Eigen::MatrixXd whiten; // L^-1 P with V = L L', so LM(S) = |whiten * S|^2
};

/// V = (J H^-1 J')^-1 J H^-1 B H^-1 J' (J H^-1 J')^-1 is the covariance of the
/// efficient nonlinear score P S with P = (J H^-1 J')^-1 J H^-1.
inline LmPieces lm_pieces(const Eigen::MatrixXd& h, const Eigen::MatrixXd& b, const Eigen::VectorXd& s2) {
  const Eigen::Index m = h.rows();
  const Eigen::Index m2 = s2.size();
  Eigen::LLT<Eigen::MatrixXd> hl(h);
  const double hscale = h.diagonal().cwiseAbs().maxCoeff();
  if (hl.info() != Eigen::Success || !(hscale > 0.0) ||
      hl.matrixLLT().diagonal().cwiseAbs2().minCoeff() <= 1e-13 * hscale) {
    throw NumericalError("augmented Hessian is singular at the restricted estimate");
  }
  const Eigen::MatrixXd hinv_rows = hl.solve(Eigen::MatrixXd::Identity(m, m)).bottomRows(m2);
  const Eigen::MatrixXd jhj = hinv_rows.rightCols(m2);
  Eigen::LLT<Eigen::MatrixXd> jl(0.5 * (jhj + jhj.transpose()));
  if (jl.info() != Eigen::Success) throw NumericalError("J H^-1 J' is not positive definite");
  const Eigen::MatrixXd proj = jl.solve(hinv_rows);  // m2 x m
  Eigen::MatrixXd v = proj * b * proj.transpose();
  v = (0.5 * (v + v.transpose())).eval();
  Eigen::LLT<Eigen::MatrixXd> vl(v);
  const double vscale = v.diagonal().cwiseAbs().maxCoeff();
  if (vl.info() != Eigen::Success || !(vscale > 0.0) ||
      vl.matrixLLT().diagonal().cwiseAbs2().minCoeff() <= 1e-13 * vscale) {
    throw NumericalError("score covariance Sigma_T is singular (condition number above 1e13)");
  }
  LmPieces out;
  out.whiten = vl.matrixL().solve(proj);
  const Eigen::VectorXd z = vl.matrixL().solve(s2);
  out.raw_lm = z.squaredNorm();
  out.lm = std::max(0.0, out.raw_lm);
  (void)m;
  return out;
}

/// Quantities of the linear null model at the restricted estimate, shared by every
/// alternative and every gamma.
class NullFit {
 public:
  NullFit(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt)
      : spec_(alt), data_(&data) {
    alt.validate();
    detail::require(alt.nonlinear(), "linearity tests need an id, st or t alternative");
    lin_ = ModelSpec{Family::linear, alt.p, alt.q, alt.d};
    theta_ = Theta::linear(lin_, theta_tilde.pack(lin_));
    mp_ = evaluate_mean(theta_, data, lin_);
    n_ = mp_.nodes();
    tn_ = mp_.times();
    m1_ = lin_.size();
    const Eigen::Index cells = mp_.grad.rows();
    resid_.resize(cells);
    weight_.resize(cells);
    xd_.resize(cells);
    xlag_.resize(cells, alt.p);
    ylag_.resize(cells, alt.p);
    time_.resize(cells);
    const Eigen::MatrixXd& y = data.counts();
    const Eigen::MatrixXd& x = data.network_means();
    for (int s = 0; s < tn_; ++s) {
      const int t = mp_.first + s;
      for (int i = 0; i < n_; ++i) {
        const Eigen::Index c = mp_.cell(s, i);
        const double lam = mp_.lambda(i, s);
        resid_(c) = y(i, t) / lam - 1.0;
        weight_(c) = y(i, t) / (lam * lam);
        xd_(c) = x(i, t - alt.d);
        for (int h = 0; h < alt.p; ++h) {
          xlag_(c, h) = x(i, t - h - 1);
          ylag_(c, h) = y(i, t - h - 1);
        }
        time_[c] = s;
      }
    }
    s1_ = per_time(mp_.grad);
    h11_ = mp_.grad.transpose() * (mp_.grad.array().colwise() * weight_.array()).matrix();
    b11_ = s1_ * s1_.transpose();
  }

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] int m1() const { return m1_; }
  [[nodiscard]] int m2() const { return tested_parameters(spec_); }
  [[nodiscard]] int times() const { return tn_; }
  [[nodiscard]] Eigen::Index cells() const { return resid_.size(); }
  [[nodiscard]] const Eigen::MatrixXd& s1() const { return s1_; }
  [[nodiscard]] const Eigen::VectorXd& resid() const { return resid_; }
  [[nodiscard]] const Eigen::VectorXd& weight() const { return weight_; }
  [[nodiscard]] const Eigen::VectorXd& delayed_network_mean() const { return xd_; }
  [[nodiscard]] int time_of(Eigen::Index c) const { return time_[c]; }
  [[nodiscard]] const Theta& theta() const { return theta_; }
  [[nodiscard]] const MeanPath& mean_path() const { return mp_; }
  [[nodiscard]] const Eigen::MatrixXd& h11() const { return h11_; }
  [[nodiscard]] const Eigen::MatrixXd& b11() const { return b11_; }

  /// d lambda / d gamma at gamma = 0 for the intercept-drift alternative.
  [[nodiscard]] Eigen::MatrixXd id_block() const {
    return (-theta_.beta0 * xd_.array().log1p()).matrix();
  }

  /// d lambda / d alpha_h = exp(-gamma X_{t-d}^2) X_{t-h}.
  [[nodiscard]] Eigen::MatrixXd st_block(double gamma) const {
    const Eigen::ArrayXd smooth = (-gamma * xd_.array().square()).exp();
    return (xlag_.array().colwise() * smooth).matrix();
  }

  /// Regime regressors (p, X_{t-h}, Y_{t-h}) switched on where X_{t-d} <= gamma.
  [[nodiscard]] Eigen::MatrixXd t_block(double gamma) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(cells(), 2 * spec_.p + 1);
    for (Eigen::Index c = 0; c < cells(); ++c) {
      if (xd_(c) <= gamma) g.row(c) = threshold_row(c);
    }
    return g;
  }

  [[nodiscard]] Eigen::RowVectorXd threshold_row(Eigen::Index c) const {
    Eigen::RowVectorXd r(2 * spec_.p + 1);
    r(0) = spec_.p;
    r.segment(1, spec_.p) = xlag_.row(c);
    r.segment(1 + spec_.p, spec_.p) = ylag_.row(c);
    return r;
  }

  [[nodiscard]] Eigen::MatrixXd block(double gamma) const {
    switch (spec_.family) {
      case Family::intercept_drift: return id_block();
      case Family::smooth_transition: return st_block(gamma);
      default: return t_block(gamma);
    }
  }

  /// Per-time score addends sum_i r_{i,t} g_{i,t} for a cells x k gradient block.
  [[nodiscard]] Eigen::MatrixXd per_time(const Eigen::MatrixXd& g) const {
    Eigen::MatrixXd out(g.cols(), tn_);
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
      const Eigen::VectorXd rg = resid_.cwiseProduct(g.col(k));
      out.row(k) = Eigen::Map<const Eigen::MatrixXd>(rg.data(), n_, tn_).colwise().sum();
    }
    return out;
  }

  struct Moments {
    Eigen::MatrixXd h;
    Eigen::MatrixXd b;
    Eigen::VectorXd s2;
    Eigen::MatrixXd s2_per_time;
  };

  /// Augmented H, B and nonlinear score for a nonlinear gradient block.
  [[nodiscard]] Moments moments(const Eigen::MatrixXd& g2) const {
    const Eigen::Index m2 = g2.cols();
    const Eigen::Index m = m1_ + m2;
    Moments mo;
    const Eigen::MatrixXd wg2 = (g2.array().colwise() * weight_.array()).matrix();
    mo.h.resize(m, m);
    mo.h.topLeftCorner(m1_, m1_) = h11_;
    mo.h.topRightCorner(m1_, m2) = mp_.grad.transpose() * wg2;
    mo.h.bottomLeftCorner(m2, m1_) = mo.h.topRightCorner(m1_, m2).transpose();
    mo.h.bottomRightCorner(m2, m2) = g2.transpose() * wg2;
    mo.s2_per_time = per_time(g2);
    mo.b.resize(m, m);
    mo.b.topLeftCorner(m1_, m1_) = b11_;
    mo.b.topRightCorner(m1_, m2) = s1_ * mo.s2_per_time.transpose();
    mo.b.bottomLeftCorner(m2, m1_) = mo.b.topRightCorner(m1_, m2).transpose();
    mo.b.bottomRightCorner(m2, m2) = mo.s2_per_time * mo.s2_per_time.transpose();
    mo.s2 = mo.s2_per_time.rowwise().sum();
    return mo;
  }

  [[nodiscard]] LmPieces pieces(double gamma) const {
    const Moments mo = moments(block(gamma));
    return lm_pieces(mo.h, mo.b, mo.s2);
  }

 private:
  ModelSpec spec_;
  ModelSpec lin_;
  const NetworkPanel* data_;
  Theta theta_;
  MeanPath mp_;
  int n_ = 0, tn_ = 0, m1_ = 0;
  Eigen::VectorXd resid_, weight_, xd_;
  Eigen::MatrixXd xlag_, ylag_;
  std::vector<int> time_;
  Eigen::MatrixXd s1_, h11_, b11_;
};

/// One constant piece of the threshold LM process: gamma in [value, next breakpoint).
struct ThresholdPiece {
  double gamma = 0.0;
  double lm = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd whiten;
  std::size_t active = 0;  // number of sorted cells switched on
};

/// Exact scan of the threshold LM process over [lower, upper]. LM(gamma) only changes
/// where gamma crosses an observed X_{i,t-d}, so evaluating at lower and at every
/// observed value inside the band covers every piece. H and B are updated incrementally.
struct ThresholdScan {
  std::vector<Eigen::Index> order;  // cells sorted by X_{i,t-d}
  std::vector<ThresholdPiece> pieces;
};

inline ThresholdScan scan_threshold(const NullFit& nf, double lower, double upper) {
  const Eigen::Index cells = nf.cells();
  const int m1 = nf.m1();
  const int m2 = nf.m2();
  const Eigen::VectorXd& xd = nf.delayed_network_mean();
  ThresholdScan sc;
  sc.order.resize(cells);
  std::iota(sc.order.begin(), sc.order.end(), Eigen::Index{0});
  std::stable_sort(sc.order.begin(), sc.order.end(), [&](Eigen::Index a, Eigen::Index b) { return xd(a) < xd(b); });

  const Eigen::MatrixXd& g1 = nf.mean_path().grad;
  Eigen::MatrixXd h12 = Eigen::MatrixXd::Zero(m1, m2);
  Eigen::MatrixXd h22 = Eigen::MatrixXd::Zero(m2, m2);
  Eigen::MatrixXd b12 = Eigen::MatrixXd::Zero(m1, m2);
  Eigen::MatrixXd b22 = Eigen::MatrixXd::Zero(m2, m2);
  Eigen::MatrixXd s2t = Eigen::MatrixXd::Zero(m2, nf.times());
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(m2);
  const Eigen::MatrixXd& s1 = nf.s1();

  std::size_t next = 0;
  auto activate_through = [&](double gamma) {
    while (next < sc.order.size() && xd(sc.order[next]) <= gamma) {
      const Eigen::Index c = sc.order[next];
      const Eigen::VectorXd g = nf.threshold_row(c).transpose();
      const double w = nf.weight()(c);
      h12 += w * g1.row(c).transpose() * g.transpose();
      h22 += w * g * g.transpose();
      const int t = nf.time_of(c);
      const Eigen::VectorXd delta = nf.resid()(c) * g;
      const Eigen::VectorXd old = s2t.col(t);
      b12 += s1.col(t) * delta.transpose();
      b22 += old * delta.transpose() + delta * old.transpose() + delta * delta.transpose();
      s2t.col(t) += delta;
      s2 += delta;
      ++next;
    }
  };
  auto evaluate = [&](double gamma) {
    ThresholdPiece piece;
    piece.gamma = gamma;
    piece.active = next;
    const int m = m1 + m2;
    Eigen::MatrixXd h(m, m), b(m, m);
    h << nf.h11(), h12, h12.transpose(), h22;
    b << nf.b11(), b12, b12.transpose(), b22;
    try {
      LmPieces lp = lm_pieces(h, b, s2);
      piece.lm = lp.lm;
      piece.whiten = std::move(lp.whiten);
    } catch (const NumericalError&) {
      // singular pieces (too few active cells) carry no information
    }
    sc.pieces.push_back(std::move(piece));
  };

  activate_through(lower);
  evaluate(lower);
  while (next < sc.order.size()) {
    const double v = xd(sc.order[next]);
    if (v > upper) break;
    activate_through(v);
    evaluate(v);
  }
  return sc;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Quasi score statistic LM_T(gamma) at the restricted (linear) estimate.
/// `alt` selects the alternative; gamma is ignored for ID.
inline double lm_statistic(const Theta& theta_tilde, double gamma, const NetworkPanel& data,
                           const ModelSpec& alt) {
  const detail::NullFit nf(theta_tilde, data, alt);
  return nf.pieces(gamma).lm;
}

/// Linear versus ID-PNAR: chi-square(1) calibration of LM_T at gamma = 0.
inline LmTestReport score_test_id(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt) {
  detail::require(alt.family == Family::intercept_drift, "score_test_id needs an id alternative");
  const detail::NullFit nf(theta_tilde, data, alt);
  const detail::LmPieces lp = nf.pieces(0.0);
  LmTestReport rep;
  rep.alternative = alt.family;
  rep.method = PValueMethod::chisq;
  rep.df = 1;
  rep.statistic = lp.lm;
  if (lp.raw_lm < -1e-8) rep.warnings.emplace_back("negative LM statistic clamped at zero");
  rep.pvalue = stats::chisq_survival(rep.statistic, 1.0);
  return rep;
}

enum class BandAveraging { pooled, per_node };

/// ST band: gamma where exp(-gamma X^2) equals 0.9 and 0.1 on average,
/// i.e. -log(0.9) / mean(X^2) and -log(0.1) / mean(X^2) over the cells t = p+1..T.
inline GammaGrid gamma_band_st(const NetworkPanel& data, int p, int d, int len = 100,
                               BandAveraging avg = BandAveraging::pooled) {
  detail::require(d >= 1 && d <= p, "delay d must satisfy 1 <= d <= p");
  detail::require(data.t() > p, "insufficient time points for the gamma band");
  const Eigen::MatrixXd& x = data.network_means();
  const Eigen::MatrixXd xd2 = x.middleCols(p - d, data.t() - p).array().square().matrix();
  GammaGrid g;
  g.len = len;
  if (avg == BandAveraging::pooled) {
    const double msq = xd2.mean();
    detail::require(msq > 0.0, "gamma band undefined: all network means are zero");
    g.lower = -std::log(0.9) / msq;
    g.upper = -std::log(0.1) / msq;
  } else {
    double lo = 0.0, hi = 0.0;
    int used = 0;
    for (Eigen::Index i = 0; i < xd2.rows(); ++i) {
      const double msq = xd2.row(i).mean();
      if (msq <= 0.0) continue;
      lo += -std::log(0.9) / msq;
      hi += -std::log(0.1) / msq;
      ++used;
    }
    detail::require(used > 0, "gamma band undefined: all network means are zero");
    g.lower = lo / used;
    g.upper = hi / used;
  }
  g.validate();
  return g;
}

/// T band: node average of the 20% and 80% empirical quantiles of X_{i,t}, t = 1..T.
inline GammaGrid gamma_band_t(const NetworkPanel& data, int len = 10) {
  const Eigen::MatrixXd& x = data.network_means();
  double lo = 0.0, hi = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row(x.cols());
    for (Eigen::Index t = 0; t < x.cols(); ++t) row[t] = x(i, t);
    lo += stats::quantile_type7(row, 0.2);
    hi += stats::quantile_type7(row, 0.8);
  }
  GammaGrid g{lo / x.rows(), hi / x.rows(), len};
  detail::require(g.lower < g.upper, "threshold band is degenerate: gamma_L = gamma_U = " +
                                         std::to_string(g.lower));
  return g;
}

struct DaviesResult {
  double bound = 1.0;     ///< p-value bound, capped at 1
  double sup_stat = 0.0;  ///< M
  double variation = 0.0; ///< V
  double chisq_tail = 1.0;
};

/// P(chi2_m2 >= M) + V M^{(m2-1)/2} exp(-M/2) 2^{-m2/2} / Gamma(m2/2), capped at 1,
/// with V the total variation of sqrt(LM) along the grid.
inline DaviesResult davies_pvalue(std::span<const double> lm_values, int m2) {
  detail::require(!lm_values.empty(), "davies_pvalue: empty gamma grid");
  detail::require(m2 >= 1, "davies_pvalue: degrees of freedom must be >= 1");
  DaviesResult r;
  r.sup_stat = *std::max_element(lm_values.begin(), lm_values.end());
  for (std::size_t k = 1; k < lm_values.size(); ++k)
    r.variation += std::abs(std::sqrt(std::max(lm_values[k], 0.0)) - std::sqrt(std::max(lm_values[k - 1], 0.0)));
  const double df = m2;
  const double m = r.sup_stat;
  r.chisq_tail = stats::chisq_survival(m, df);
  const double correction =
      m > 0.0 ? r.variation * std::pow(m, 0.5 * (df - 1.0)) * std::exp(-0.5 * m) * std::pow(2.0, -0.5 * df) /
                    std::tgamma(0.5 * df)
              : 0.0;
  r.bound = std::min(1.0, r.chisq_tail + correction);
  return r;
}

struct SupLm {
  double gamma = 0.0;
  double value = 0.0;
};

namespace detail {

inline SupLm sup_smooth(const NullFit& nf, const GammaGrid& band) {
  band.validate();
  SupLm best{band.lower, -1.0};
  const auto pts = band.points();
  auto lm = [&](double g) { return nf.pieces(g).lm; };
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const optim::ScalarMax r = optim::brent_max(lm, pts[k], pts[k + 1]);
    if (r.value > best.value) best = {r.x, r.value};
  }
  return best;
}

inline SupLm sup_threshold(const ThresholdScan& sc) {
  SupLm best{0.0, -1.0};
  for (const auto& piece : sc.pieces)
    if (std::isfinite(piece.lm) && piece.lm > best.value) best = {piece.gamma, piece.lm};
  if (best.value < 0.0) throw NumericalError("LM statistic is singular at every threshold in the band");
  return best;
}

}  // namespace detail

/// sup over [gamma_L, gamma_U] of LM_T(gamma). ST: Brent on each of the len-1
/// equal sub-intervals, keeping the best. T: exact scan over the step function.
inline SupLm global_optimise_lm(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt,
                                const GammaGrid& band) {
  band.validate();
  const detail::NullFit nf(theta_tilde, data, alt);
  if (alt.family == Family::smooth_transition) return detail::sup_smooth(nf, band);
  detail::require(alt.family == Family::threshold, "global_optimise_lm needs an st or t alternative");
  return detail::sup_threshold(detail::scan_threshold(nf, band.lower, band.upper));
}

enum class Multiplier { normal, rademacher };

struct BootstrapOptions {
  int J = 499;
  int workers = 1;
  std::uint64_t seed = 1234;
  Multiplier multiplier = Multiplier::normal;
  int grid_per_interval = 10;  ///< ST: cached grid points per sub-interval before refinement
};

/// Multiplier weights nu_{t,j} for replicate j; one independent stream per (seed, j).
inline Eigen::VectorXd bootstrap_weights(std::uint64_t seed, int replicate, int count, Multiplier kind) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), 0x5eedu};
  std::mt19937_64 rng(seq);
  Eigen::VectorXd nu(count);
  if (kind == Multiplier::normal) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int t = 0; t < count; ++t) nu(t) = dist(rng);
  } else {
    std::bernoulli_distribution coin(0.5);
    for (int t = 0; t < count; ++t) nu(t) = coin(rng) ? 1.0 : -1.0;
  }
  return nu;
}

namespace detail {

/// Runs body(j) for j = 0..count-1 on `workers` threads. Replicates are independent,
/// so the outcome does not depend on the worker count.
template <class Body>
void parallel_for(int count, int workers, Body&& body) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int j = 0; j < count; ++j) body(j);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int j = w; j < count; j += workers) body(j);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Score bootstrap: each replicate multiplies the per-time score addends by weights
/// nu_t, projects the perturbed score onto the nonlinear block, evaluates the LM
/// process with the same Sigma_T(gamma) as the observed statistic and takes its sup.
inline BootstrapReport score_bootstrap(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt,
                                       const GammaGrid& band, double sup_lm_obs, const BootstrapOptions& opt) {
  detail::require(opt.J >= 1, "bootstrap needs J >= 1 replicates");
  detail::require(opt.workers >= 1, "bootstrap needs at least one worker");
  detail::require(alt.family == Family::smooth_transition || alt.family == Family::threshold,
                  "score bootstrap needs an st or t alternative");
  band.validate();
  const detail::NullFit nf(theta_tilde, data, alt);
  const int tn = nf.times();
  const int m1 = nf.m1();
  const int m2 = nf.m2();
  std::vector<double> sups(opt.J, std::numeric_limits<double>::quiet_NaN());

  if (alt.family == Family::threshold) {
    const detail::ThresholdScan sc = detail::scan_threshold(nf, band.lower, band.upper);
    detail::parallel_for(opt.J, opt.workers, [&](int j) {
      const Eigen::VectorXd nu = bootstrap_weights(opt.seed, j, tn, opt.multiplier);
      Eigen::VectorXd s(m1 + m2);
      s.head(m1) = nf.s1() * nu;
      s.tail(m2).setZero();
      std::size_t next = 0;
      double best = -1.0;
      for (const auto& piece : sc.pieces) {
        for (; next < piece.active; ++next) {
          const Eigen::Index c = sc.order[next];
          s.tail(m2) += (nf.resid()(c) * nu(nf.time_of(c))) * nf.threshold_row(c).transpose();
        }
        if (!std::isfinite(piece.lm)) continue;
        best = std::max(best, (piece.whiten * s).squaredNorm());
      }
      if (best < 0.0) throw NumericalError("bootstrap replicate " + std::to_string(j) + " found no valid threshold");
      sups[j] = best;
    });
  } else {
    // cache the gamma-dependent pieces on a grid shared by all replicates
    const int sub = band.len - 1;
    GammaGrid fine{band.lower, band.upper, sub * std::max(1, opt.grid_per_interval) + 1};
    const auto pts = fine.points();
    std::vector<Eigen::MatrixXd> whiten(pts.size());
    std::vector<Eigen::MatrixXd> s2t(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto mo = nf.moments(nf.st_block(pts[k]));
      whiten[k] = detail::lm_pieces(mo.h, mo.b, mo.s2).whiten;
      s2t[k] = mo.s2_per_time;
    }
    detail::parallel_for(opt.J, opt.workers, [&](int j) {
      const Eigen::VectorXd nu = bootstrap_weights(opt.seed, j, tn, opt.multiplier);
      Eigen::VectorXd s(m1 + m2);
      s.head(m1) = nf.s1() * nu;
      std::size_t arg = 0;
      double best = -1.0;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        s.tail(m2) = s2t[k] * nu;
        const double v = (whiten[k] * s).squaredNorm();
        if (v > best) {
          best = v;
          arg = k;
        }
      }
      auto lm_nu = [&](double g) {
        const auto mo = nf.moments(nf.st_block(g));
        Eigen::VectorXd sg(m1 + m2);
        sg.head(m1) = s.head(m1);
        sg.tail(m2) = mo.s2_per_time * nu;
        return (detail::lm_pieces(mo.h, mo.b, mo.s2).whiten * sg).squaredNorm();
      };
      const double lo = pts[arg == 0 ? 0 : arg - 1];
      const double hi = pts[std::min(arg + 1, pts.size() - 1)];
      const optim::ScalarMax r = optim::brent_max(lm_nu, lo, hi);
      sups[j] = std::max(best, r.value);
    });
  }

  int exceed = 0;
  for (double g : sups)
    if (g >= sup_lm_obs) ++exceed;
  BootstrapReport rep = bootstrap_pvalues(exceed, opt.J);
  rep.sup_values = std::move(sups);
  rep.seed = opt.seed;
  return rep;
}

/// Davies-bound test of linearity against ST-PNAR on the band's grid.
inline LmTestReport davies_test(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt,
                                const GammaGrid& band) {
  detail::require(alt.family == Family::smooth_transition,
                  "the Davies bound needs a differentiable LM process and cannot be applied to the "
                  "threshold alternative");
  band.validate();
  const detail::NullFit nf(theta_tilde, data, alt);
  const auto pts = band.points();
  std::vector<double> lm(pts.size());
  LmTestReport rep;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const detail::LmPieces lp = nf.pieces(pts[k]);
    lm[k] = lp.lm;
    if (lp.raw_lm < -1e-8) rep.warnings.emplace_back("negative LM statistic clamped at zero");
  }
  const DaviesResult dv = davies_pvalue(lm, nf.m2());
  rep.alternative = alt.family;
  rep.method = PValueMethod::davies;
  rep.df = nf.m2();
  rep.statistic = dv.sup_stat;
  rep.pvalue = dv.bound;
  rep.gamma_opt = pts[std::max_element(lm.begin(), lm.end()) - lm.begin()];
  rep.band = band;
  return rep;
}

/// sup-LM test with bootstrap p-value (ST or T alternative).
inline LmTestReport bootstrap_test(const Theta& theta_tilde, const NetworkPanel& data, const ModelSpec& alt,
                                   const GammaGrid& band, const BootstrapOptions& opt) {
  const SupLm sup = global_optimise_lm(theta_tilde, data, alt, band);
  LmTestReport rep;
  rep.alternative = alt.family;
  rep.method = PValueMethod::bootstrap;
  rep.df = tested_parameters(alt);
  rep.statistic = sup.value;
  rep.gamma_opt = sup.gamma;
  rep.band = band;
  rep.bootstrap = score_bootstrap(theta_tilde, data, alt, band, sup.value, opt);
  rep.pvalue = rep.bootstrap->pJ;
  return rep;
}

}  // namespace pnar
