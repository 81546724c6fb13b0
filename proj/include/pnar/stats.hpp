#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "pnar/error.hpp"

namespace pnar::stats {

/// P(chi2_df >= x).
inline double chisq_survival(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

/// Two-sided normal p-value P(|Z| >= |z|).
inline double normal_two_sided(double z) {
  if (std::isnan(z)) return z;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Sample quantile with linear interpolation between order statistics (R type 7).
inline double quantile_type7(std::vector<double> values, double prob) {
  detail::require(!values.empty(), "quantile of an empty sample");
  detail::require(prob >= 0.0 && prob <= 1.0, "quantile probability must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Significance code used in coefficient tables.
inline const char* significance_stars(double pval) {
  if (pval < 0.001) return "***";
  if (pval < 0.01) return "**";
  if (pval < 0.05) return "*";
  if (pval < 0.1) return ".";
  return " ";
}

}  // namespace pnar::stats
