#include "umd/anomaly.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace umd {

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> reciprocals(const std::vector<double>& sizes) {
  std::vector<double> out;
  out.reserve(sizes.size());
  for (double z : sizes) {
    if (z < 0.0 || std::isnan(z)) throw InputError("trigger sizes must be non-negative");
    out.push_back(z == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / z);
  }
  return out;
}

NullSplit split_sizes(const SizeMap& sizes, const std::vector<ClassPair>& candidate) {
  const std::set<ClassPair> inside(candidate.begin(), candidate.end());
  for (const auto& p : inside) {
    if (!sizes.contains(p)) throw InputError("no size statistic for candidate " + to_string(p));
  }
  NullSplit split;
  for (const auto& [pair, z] : sizes) (inside.contains(pair) ? split.candidate : split.null).push_back(z);
  return split;
}

double mad_of_reciprocals(const std::vector<double>& null_sizes) {
  if (null_sizes.empty()) throw InputError("MAD needs at least one null statistic");
  const auto r = reciprocals(null_sizes);
  const double center = median(r);
  if (std::isinf(center)) return 0.0;
  std::vector<double> dev;
  dev.reserve(r.size());
  for (double x : r) dev.push_back(std::isinf(x) ? x : std::abs(x - center));
  return median(std::move(dev));
}

double mad_null(const SizeMap& sizes, const std::vector<ClassPair>& candidate) {
  return mad_of_reciprocals(split_sizes(sizes, candidate).null);
}

double anomaly_score(const std::vector<double>& candidate_sizes,
                     const std::vector<double>& null_sizes) {
  if (candidate_sizes.empty()) throw InputError("anomaly score needs candidate statistics");
  const double sigma = mad_of_reciprocals(null_sizes);
  const double null_center = median(reciprocals(null_sizes));
  if (std::isinf(null_center)) return 0.0;
  const double numerator = median(reciprocals(candidate_sizes)) - null_center;
  if (sigma == 0.0) return numerator > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return numerator / (kMadScale * sigma);
}

double anomaly_score(const SizeMap& sizes, const std::vector<ClassPair>& candidate) {
  const auto split = split_sizes(sizes, candidate);
  return anomaly_score(split.candidate, split.null);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// Rational approximation of the lower half (p <= 0.5) followed by one Halley
// step against the erfc-based CDF.
double lower_quantile(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double e = std_normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("quantile argument must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -lower_quantile(1.0 - p);
  return lower_quantile(p);
}

double threshold(double beta, std::size_t n_null) {
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must lie in (0, 1)");
  if (n_null == 0) throw InputError("threshold needs N >= 1");
  // 1 - (1 - beta)^{1/N}, computed without cancellation.
  const double tail = -std::expm1(std::log1p(-beta) / static_cast<double>(n_null));
  return -std_normal_quantile(tail);
}

AnomalyResult assess(const SizeMap& sizes, const std::vector<ClassPair>& candidate, double beta) {
  const auto split = split_sizes(sizes, candidate);
  AnomalyResult r;
  r.beta = beta;
  r.n_null = split.null.size();
  r.mad = mad_of_reciprocals(split.null);
  r.score = anomaly_score(split.candidate, split.null);
  r.threshold = threshold(beta, r.n_null);
  r.attacked = r.score > r.threshold;
  return r;
}

}  // namespace umd
