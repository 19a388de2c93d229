#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "umd/attack.hpp"

namespace umd {

/// Gaussian scale factor that maps a MAD to a standard deviation.
inline constexpr double kMadScale = 1.4826;

using SizeMap = std::map<ClassPair, double>;

/// Median; the mean of the two middle values for even lengths. +inf entries
/// take part through ordering only.
double median(std::vector<double> values);

/// Reciprocals of trigger sizes; a zero size maps to +inf.
std::vector<double> reciprocals(const std::vector<double>& sizes);

struct NullSplit {
  std::vector<double> candidate;  // sizes of pairs in the candidate set
  std::vector<double> null;       // sizes of every other pair
};

NullSplit split_sizes(const SizeMap& sizes, const std::vector<ClassPair>& candidate);

/// MAD of the null reciprocals, computed only over pairs outside the
/// candidate set. Returns 0 when the null median is +inf.
double mad_null(const SizeMap& sizes, const std::vector<ClassPair>& candidate);
double mad_of_reciprocals(const std::vector<double>& null_sizes);

/// (median candidate reciprocal - median null reciprocal) / (1.4826 * MAD).
/// Degenerate MAD yields +inf for a positive numerator and 0 otherwise.
double anomaly_score(const SizeMap& sizes, const std::vector<ClassPair>& candidate);
double anomaly_score(const std::vector<double>& candidate_sizes,
                     const std::vector<double>& null_sizes);

/// Phi^{-1}(p) for 0 < p < 1.
double std_normal_quantile(double p);
double std_normal_cdf(double x);

/// theta such that P(max of N iid standard normals > theta) = beta.
double threshold(double beta, std::size_t n_null);

struct AnomalyResult {
  double score = 0.0;
  double mad = 0.0;
  double threshold = 0.0;
  double beta = 0.05;
  std::size_t n_null = 0;
  bool attacked = false;
};

AnomalyResult assess(const SizeMap& sizes, const std::vector<ClassPair>& candidate, double beta);

}  // namespace umd
