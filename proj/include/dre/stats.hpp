#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dre/errors.hpp"

namespace dre {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw precondition_error("mean of empty sample");
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

// Unbiased sample variance (n-1 denominator); 0 for a single observation.
inline double sample_variance(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) throw precondition_error("variance of empty sample");
  if (n == 1) return 0.0;
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(n - 1);
}

// Standard error of the sample mean.
inline double mean_stderr(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

struct mean_with_error {
  double value = 0.0;
  double se = 0.0;
};

inline mean_with_error mean_and_stderr(std::span<const double> xs) {
  return {mean(xs), mean_stderr(xs)};
}

// Standard error via group means: the draws are split into `groups` nearly
// equal consecutive batches and the spread of the batch means is used. More
// honest than the plain i.i.d. formula when draws within a batch are
// correlated (several queries against one sampled point set).
inline mean_with_error grouped_mean_stderr(std::span<const double> xs,
                                           std::size_t groups = 20) {
  if (xs.empty()) throw precondition_error("grouped stderr of empty sample");
  groups = std::min(groups, xs.size());
  std::vector<double> gmeans(groups, 0.0);
  std::vector<std::size_t> gcount(groups, 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t g = i * groups / xs.size();
    gmeans[g] += xs[i];
    gcount[g] += 1;
  }
  for (std::size_t g = 0; g < groups; ++g) gmeans[g] /= static_cast<double>(gcount[g]);
  mean_with_error out;
  out.value = mean(xs);
  out.se = groups > 1 ? mean_stderr(gmeans) : 0.0;
  return out;
}

// Type-7 quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw precondition_error("quantile of empty sample");
  if (q < 0.0 || q > 1.0) throw precondition_error("quantile level outside [0,1]");
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

struct summary_stats {
  double med = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

inline summary_stats summarize(const std::vector<double>& xs) {
  return {median(xs), quantile(xs, 0.25), quantile(xs, 0.75)};
}

}  // namespace dre
