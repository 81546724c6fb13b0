#pragma once

// Small dense optimisers: an active-set QP solver, a feasible SQP maximiser for
// problems with lower bounds plus a few linear inequalities, and a bracketed
// scalar maximiser.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

namespace pnar::optim {

/// Linear inequalities a x <= b.
struct LinearInequalities {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;

  [[nodiscard]] Eigen::Index size() const { return a.rows(); }
};

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per constraint row, zero when inactive
  int iterations = 0;
  bool ok = false;
};

/// Minimises 0.5 x'Qx + c'x subject to G x <= h, starting from a feasible x0.
/// Primal active-set method; Q must be positive definite.
inline QpResult solve_qp(const Eigen::MatrixXd& q, const Eigen::VectorXd& c, const Eigen::MatrixXd& g,
                         const Eigen::VectorXd& h, Eigen::VectorXd x0, int max_iter = 500) {
  const Eigen::Index n = q.rows();
  const Eigen::Index nc = g.rows();
  QpResult res;
  res.x = std::move(x0);
  res.multipliers = Eigen::VectorXd::Zero(nc);

  const double scale = std::max(1.0, q.diagonal().cwiseAbs().maxCoeff());
  const double act_tol = 1e-12 * scale;
  std::vector<Eigen::Index> working;
  for (Eigen::Index k = 0; k < nc; ++k) {
    if (g.row(k).dot(res.x) >= h(k) - 1e-14 * (1.0 + std::abs(h(k)))) {
      // start with a linearly independent subset of the active constraints
      if (static_cast<Eigen::Index>(working.size()) < n) working.push_back(k);
    }
  }

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const auto nw = static_cast<Eigen::Index>(working.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + nw, n + nw);
    kkt.topLeftCorner(n, n) = q;
    for (Eigen::Index r = 0; r < nw; ++r) {
      kkt.block(0, n + r, n, 1) = g.row(working[r]).transpose();
      kkt.row(n + r).head(n) = g.row(working[r]);
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + nw);
    rhs.head(n) = -(q * res.x + c);
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    const Eigen::VectorXd step = sol.head(n);
    const Eigen::VectorXd mu = sol.tail(nw);

    if (step.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + res.x.lpNorm<Eigen::Infinity>())) {
      Eigen::Index worst = -1;
      double most_negative = -act_tol;
      for (Eigen::Index r = 0; r < nw; ++r) {
        if (mu(r) < most_negative) {
          most_negative = mu(r);
          worst = r;
        }
      }
      if (worst < 0) {
        res.multipliers.setZero();
        for (Eigen::Index r = 0; r < nw; ++r) res.multipliers(working[r]) = mu(r);
        res.ok = true;
        return res;
      }
      working.erase(working.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index k = 0; k < nc; ++k) {
      if (std::find(working.begin(), working.end(), k) != working.end()) continue;
      const double gs = g.row(k).dot(step);
      if (gs > 1e-15) {
        const double room = std::max(0.0, h(k) - g.row(k).dot(res.x));
        const double a = room / gs;
        if (a < alpha) {
          alpha = a;
          blocking = k;
        }
      }
    }
    res.x += alpha * step;
    if (blocking >= 0) working.push_back(blocking);
  }
  return res;
}

/// Objective value with ascent information. `curvature` approximates the negative
/// Hessian and must be positive semi-definite. A non-finite value marks an infeasible point.
struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  Eigen::MatrixXd curvature;
};

struct SqpOptions {
  int max_iterations = 100;
  double xtol_rel = 1e-8;
  double gtol = 1e-8;
  int max_backtracks = 40;
};

struct SqpResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Maximises f over { x : x >= lower, a x <= b } with feasible sequential quadratic steps.
/// Each iteration solves the bound- and inequality-constrained QP built from the gradient
/// and the curvature matrix, then backtracks until the Armijo condition holds.
/// `value_only` evaluates f without derivatives (used in the line search).
template <class Full, class ValueOnly>
SqpResult maximize(Full&& full, ValueOnly&& value_only, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                   const LinearInequalities& ineq, const SqpOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  SqpResult res;
  res.x = std::move(x0);

  // Constraint rows for the step d: -d_k <= x_k - lower_k and a d <= b - a x.
  std::vector<Eigen::Index> bounded;
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::isfinite(lower(k))) bounded.push_back(k);
  const auto nb = static_cast<Eigen::Index>(bounded.size());
  const Eigen::Index nc = nb + ineq.size();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nc, n);
  for (Eigen::Index r = 0; r < nb; ++r) g(r, bounded[r]) = -1.0;
  if (ineq.size() > 0) g.bottomRows(ineq.size()) = ineq.a;

  Evaluation ev = full(res.x);
  if (!std::isfinite(ev.value)) {
    res.message = "objective is not finite at the starting point";
    res.value = ev.value;
    return res;
  }

  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    Eigen::VectorXd h(nc);
    for (Eigen::Index r = 0; r < nb; ++r) h(r) = std::max(0.0, res.x(bounded[r]) - lower(bounded[r]));
    if (ineq.size() > 0) h.tail(ineq.size()) = (ineq.b - ineq.a * res.x).cwiseMax(0.0);

    Eigen::MatrixXd qm = 0.5 * (ev.curvature + ev.curvature.transpose());
    const double ridge = 1e-10 * std::max(1.0, qm.diagonal().cwiseAbs().maxCoeff());
    qm.diagonal().array() += ridge;
    const QpResult qp = solve_qp(qm, -ev.gradient, g, h, Eigen::VectorXd::Zero(n));
    const Eigen::VectorXd d = qp.x;

    const double slope = ev.gradient.dot(d);
    if (d.lpNorm<Eigen::Infinity>() == 0.0 || slope <= 0.0) {
      res.converged = true;
      res.message = "no ascent direction (stationary point)";
      break;
    }

    // Gains below the rounding level of the objective cannot be verified by the line
    // search; a full step is then taken on the strength of the quadratic model.
    const double predicted = slope - 0.5 * d.dot(qm * d);
    const double noise = 1e-11 * (1.0 + std::abs(ev.value));
    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      const double trial = value_only(Eigen::VectorXd(res.x + step * d));
      if (std::isfinite(trial) && trial >= ev.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      if (bt == 0 && std::isfinite(trial) && predicted <= noise && trial >= ev.value - noise) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.message = "line search failed";
      break;
    }

    const Eigen::VectorXd dx = step * d;
    res.x += dx;
    // bounds may be crossed by rounding
    for (Eigen::Index r = 0; r < nb; ++r) res.x(bounded[r]) = std::max(res.x(bounded[r]), lower(bounded[r]));
    ev = full(res.x);

    const bool small_step = dx.norm() <= opt.xtol_rel * std::max(res.x.norm(), 1e-300);
    Eigen::VectorXd projected = ev.gradient;  // zero out components pushing into active bounds
    for (Eigen::Index r = 0; r < nb; ++r) {
      const Eigen::Index k = bounded[r];
      if (res.x(k) <= lower(k) && projected(k) < 0.0) projected(k) = 0.0;
    }
    const bool flat = ineq.size() == 0 && projected.lpNorm<Eigen::Infinity>() < opt.gtol;
    if (small_step || flat) {
      res.converged = true;
      res.message = small_step ? "relative parameter change below xtol_rel" : "gradient below gtol";
      break;
    }
  }
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.value = ev.value;
  return res;
}

struct ScalarMax {
  double x = 0.0;
  double value = -std::numeric_limits<double>::infinity();
};

/// Brent maximisation of f on [lo, hi]; the endpoints are also inspected so that a
/// monotone segment returns its boundary value exactly.
template <class F>
ScalarMax brent_max(F&& f, double lo, double hi, double x_tol = 1e-8) {
  ScalarMax best{lo, f(lo)};
  const double fhi = f(hi);
  if (fhi > best.value) best = {hi, fhi};
  if (!(hi > lo)) return best;
  // relative precision in bits, tight enough for an absolute x_tol on this interval
  const double rel = x_tol / std::max({std::abs(lo), std::abs(hi), 1e-300});
  const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(rel))) + 1, 8,
                              std::numeric_limits<double>::digits / 2);
  std::uintmax_t max_iter = 200;
  const auto r = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, lo, hi, bits,
                                                       max_iter);
  if (-r.second > best.value) best = {r.first, -r.second};
  return best;
}

}  // namespace pnar::optim
