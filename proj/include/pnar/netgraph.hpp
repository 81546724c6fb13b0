#pragma once

// Network structure: adjacency matrices, count panels, neighbour averages
// and random graph generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pnar/error.hpp"

namespace pnar {

/// Non-negative weight matrix with zero diagonal. Row i holds the edges i -> j.
class Adjacency {
 public:
  Adjacency() = default;

  explicit Adjacency(Eigen::MatrixXd weights, bool directed = true)
      : w_(std::move(weights)), directed_(directed) {
    validate();
  }

  [[nodiscard]] int n() const { return static_cast<int>(w_.rows()); }
  [[nodiscard]] bool directed() const { return directed_; }
  [[nodiscard]] const Eigen::MatrixXd& weights() const { return w_; }
  [[nodiscard]] double operator()(int i, int j) const { return w_(i, j); }

 private:
  void validate() const {
    detail::require(w_.rows() == w_.cols(), "adjacency matrix must be square, got " +
                                                std::to_string(w_.rows()) + "x" +
                                                std::to_string(w_.cols()));
    for (Eigen::Index i = 0; i < w_.rows(); ++i) {
      for (Eigen::Index j = 0; j < w_.cols(); ++j) {
        const double v = w_(i, j);
        std::ostringstream cell;
        cell << "adjacency[" << i + 1 << "][" << j + 1 << "] = " << v;
        detail::require(std::isfinite(v), cell.str() + ": entry is not finite");
        detail::require(v >= 0.0, cell.str() + ": entries must be non-negative");
        if (i == j) detail::require(v == 0.0, cell.str() + ": diagonal must be zero");
        if (!directed_ && j > i) {
          detail::require(v == w_(j, i), cell.str() + ": undirected adjacency must be symmetric");
        }
      }
    }
  }

  Eigen::MatrixXd w_;
  bool directed_ = true;
};

/// N x T matrix of non-negative integer counts (nodes down, time across).
class CountPanel {
 public:
  CountPanel() = default;

  explicit CountPanel(Eigen::MatrixXd counts) : y_(std::move(counts)) {
    detail::require(y_.cols() >= 2, "count panel needs at least 2 time points, got " +
                                        std::to_string(y_.cols()));
    detail::require(y_.rows() >= 1, "count panel needs at least one node");
    for (Eigen::Index t = 0; t < y_.cols(); ++t) {
      for (Eigen::Index i = 0; i < y_.rows(); ++i) {
        const double v = y_(i, t);
        if (!(std::isfinite(v) && v >= 0.0 && v == std::floor(v))) {
          std::ostringstream msg;
          msg << "count panel cell (node " << i + 1 << ", time " << t + 1 << ") = " << v
              << ": counts must be finite non-negative integers";
          throw ValidationError(msg.str());
        }
      }
    }
  }

  [[nodiscard]] int n() const { return static_cast<int>(y_.rows()); }
  [[nodiscard]] int t() const { return static_cast<int>(y_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& counts() const { return y_; }

 private:
  Eigen::MatrixXd y_;
};

/// Row sums n_i = sum_j w_ij.
inline Eigen::VectorXd out_degree(const Adjacency& adj) { return adj.weights().rowwise().sum(); }

/// Row-normalised weights: row i divided by n_i, rows of isolated nodes left at zero.
inline Eigen::MatrixXd row_normalised(const Adjacency& adj) {
  Eigen::MatrixXd w = adj.weights();
  const Eigen::VectorXd deg = out_degree(adj);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (deg(i) > 0.0) w.row(i) /= deg(i);
  }
  return w;
}

/// Column-wise neighbour averages of `y` (N x T). The weighted sum is formed before
/// dividing by n_i so integer panels give the same X under any node ordering.
inline Eigen::MatrixXd network_means(const Adjacency& adj, const Eigen::MatrixXd& y) {
  detail::require(y.rows() == adj.n(), "network_mean: vector has length " + std::to_string(y.rows()) +
                                           ", adjacency has " + std::to_string(adj.n()) + " nodes");
  Eigen::MatrixXd x = adj.weights() * y;
  const Eigen::VectorXd deg = out_degree(adj);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (deg(i) > 0.0) x.row(i) /= deg(i);
  }
  return x;
}

/// Average neighbour value X_i = n_i^{-1} sum_j w_ij y_j; isolated nodes get 0.
inline Eigen::VectorXd network_mean(const Adjacency& adj, const Eigen::VectorXd& y_col) {
  return network_means(adj, y_col);
}

/// G(n, p) random graph with 0/1 entries. Directed graphs draw every ordered pair.
inline Adjacency gen_erdos_renyi(int n, double prob, std::uint64_t seed, bool directed = true) {
  detail::require(n >= 1, "gen_erdos_renyi: node count must be positive");
  detail::require(prob >= 0.0 && prob <= 1.0,
                  "gen_erdos_renyi: edge probability must lie in [0,1], got " + std::to_string(prob));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(prob);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = directed ? 0 : i + 1; j < n; ++j) {
      if (i == j) continue;
      if (edge(rng)) {
        w(i, j) = 1.0;
        if (!directed) w(j, i) = 1.0;
      }
    }
  }
  return Adjacency(std::move(w), directed);
}

/// Edge-probability law of the stochastic block model generator.
struct SbmRates {
  double within_exponent = -0.3;   ///< within-block probability alpha * n^within_exponent
  double between_exponent = -1.0;  ///< between-block probability n^between_exponent
};

struct SbmGraph {
  Adjacency adjacency;
  std::vector<int> blocks;
};

/// Stochastic block model: nodes fall in one of k blocks uniformly at random; an edge
/// appears with probability alpha * n^-0.3 inside a block and n^-1 across blocks.
inline SbmGraph gen_sbm_with_blocks(int n, int k, double alpha, bool directed, std::uint64_t seed,
                                    const SbmRates& rates = {}) {
  detail::require(n >= 1, "gen_sbm: node count must be positive");
  detail::require(k >= 1 && k <= n, "gen_sbm: block count must satisfy 1 <= k <= n, got k = " +
                                        std::to_string(k));
  detail::require(alpha > 0.0 && std::isfinite(alpha),
                  "gen_sbm: alpha must be positive, got " + std::to_string(alpha));
  const double nn = static_cast<double>(n);
  const double p_in = std::min(1.0, alpha * std::pow(nn, rates.within_exponent));
  const double p_out = std::min(1.0, std::pow(nn, rates.between_exponent));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::vector<int> block(n);
  for (auto& b : block) b = pick(rng);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = directed ? 0 : i + 1; j < n; ++j) {
      if (i == j) continue;
      const double prob = block[i] == block[j] ? p_in : p_out;
      if (unif(rng) < prob) {
        w(i, j) = 1.0;
        if (!directed) w(j, i) = 1.0;
      }
    }
  }
  return {Adjacency(std::move(w), directed), std::move(block)};
}

inline Adjacency gen_sbm(int n, int k, double alpha, bool directed, std::uint64_t seed,
                         const SbmRates& rates = {}) {
  return gen_sbm_with_blocks(n, k, alpha, directed, seed, rates).adjacency;
}

}  // namespace pnar
