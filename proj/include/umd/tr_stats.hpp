#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "umd/trigger_re.hpp"

namespace umd {

/// Transferability between every ordered pair of distinct class pairs.
/// values(i, j) is the TR from pairs[i] to pairs[j]; the diagonal holds NaN.
struct TRMatrix {
  std::size_t num_classes = 0;
  std::vector<ClassPair> pairs;
  Matrix values;

  std::size_t size() const { return pairs.size(); }
  double at(std::size_t i, std::size_t j) const {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  std::optional<std::size_t> index_of(ClassPair pair) const;

  /// Sub-map over the given pair indices (in the given order).
  TRMatrix restricted(const std::vector<std::size_t>& keep) const;

  /// Each row divided by its off-diagonal sum (rows summing to 0 stay 0).
  Matrix row_normalized() const;
};

/// All ordered pairs (s, t), s != t, in lexicographic order.
std::vector<ClassPair> all_class_pairs(std::size_t num_classes);

/// Fraction of `target_source_rows` (clean class-s_j samples) classified to
/// t_j after applying the trigger estimated for another pair.
double transferability(const Network& net, const TriggerEstimate& from, ClassPair to,
                       const Matrix& target_source_rows);

/// Builds the full map. TR to (s_j, t_j) is evaluated on every clean sample
/// of class s_j that the model classifies correctly.
TRMatrix tr_matrix(const Network& net, const EstimateMap& estimates, const LabeledDataset& clean,
                   std::size_t workers = 1);

/// Number of off-diagonal entries strictly above `bright_threshold`.
std::size_t count_bright(const TRMatrix& tr, double bright_threshold);

/// Halves the image count while the map built with n images has more than
/// 2(K^2 - K) bright entries and n > 2.
std::size_t auto_tune_image_count(const std::function<TRMatrix(std::size_t)>& build_map,
                                  std::size_t num_classes, std::size_t start_n,
                                  double bright_threshold = 0.5);

std::size_t auto_tune_image_count(const Network& net, const LabeledDataset& clean, ReMode mode,
                                  const ReConfig& cfg, std::size_t start_n,
                                  double bright_threshold = 0.5, std::size_t workers = 1);

}  // namespace umd
