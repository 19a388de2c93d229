#include "umd/tr_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace umd {

std::optional<std::size_t> TRMatrix::index_of(ClassPair pair) const {
  const auto it = std::find(pairs.begin(), pairs.end(), pair);
  if (it == pairs.end()) return std::nullopt;
  return static_cast<std::size_t>(it - pairs.begin());
}

TRMatrix TRMatrix::restricted(const std::vector<std::size_t>& keep) const {
  TRMatrix out;
  out.num_classes = num_classes;
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.values.resize(n, n);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.pairs.push_back(pairs.at(keep[i]));
    for (std::size_t j = 0; j < keep.size(); ++j)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(keep[i], keep[j]);
  }
  return out;
}

Matrix TRMatrix::row_normalized() const {
  Matrix out = Matrix::Zero(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (i != j) sum += values(i, j);
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (i == j) continue;
      out(i, j) = sum > 0.0 ? values(i, j) / sum : 0.0;
    }
  }
  return out;
}

std::vector<ClassPair> all_class_pairs(std::size_t num_classes) {
  std::vector<ClassPair> pairs;
  const int K = static_cast<int>(num_classes);
  for (int s = 0; s < K; ++s)
    for (int t = 0; t < K; ++t)
      if (s != t) pairs.emplace_back(s, t);
  return pairs;
}

double transferability(const Network& net, const TriggerEstimate& from, ClassPair to,
                       const Matrix& target_source_rows) {
  if (from.pair == to) throw InputError("transferability needs two distinct class pairs");
  if (target_source_rows.rows() == 0)
    throw InputError("no clean samples of class " + std::to_string(to.source));
  const auto pred = predict_triggered(net, from, target_source_rows);
  return static_cast<double>(std::count(pred.begin(), pred.end(), to.target)) /
         static_cast<double>(pred.size());
}

TRMatrix tr_matrix(const Network& net, const EstimateMap& estimates, const LabeledDataset& clean,
                   std::size_t workers) {
  const std::size_t K = net.output_dim();
  if (clean.num_classes() != K) throw InputError("clean set class count does not match the model");
  TRMatrix tr;
  tr.num_classes = K;
  tr.pairs = all_class_pairs(K);
  for (const auto& p : tr.pairs) {
    if (!estimates.contains(p)) throw InputError("missing trigger estimate for pair " + to_string(p));
  }

  const auto pred = net.predict(clean.inputs());
  std::vector<Matrix> pools(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < clean.size(); ++i)
      if (clean.labels()[i] == static_cast<int>(k) && pred[i] == clean.labels()[i])
        idx.push_back(static_cast<Eigen::Index>(i));
    if (idx.empty())
      throw InputError("no correctly classified clean samples of class " + std::to_string(k));
    pools[k].resize(static_cast<Eigen::Index>(idx.size()), clean.inputs().cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      pools[k].row(static_cast<Eigen::Index>(r)) = clean.inputs().row(idx[r]);
  }

  const std::size_t n = tr.pairs.size();
  tr.values = Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n),
                               std::numeric_limits<double>::quiet_NaN());
  // One row per RE'd trigger: classify every source pool once and read off
  // the fraction landing on each target.
  parallel_for(n, workers, [&](std::size_t i) {
    const TriggerEstimate& est = estimates.at(tr.pairs[i]);
    std::vector<std::vector<int>> preds(K);
    for (std::size_t k = 0; k < K; ++k) preds[k] = predict_triggered(net, est, pools[k]);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const ClassPair to = tr.pairs[j];
      const auto& pk = preds[static_cast<std::size_t>(to.source)];
      tr.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(std::count(pk.begin(), pk.end(), to.target)) /
          static_cast<double>(pk.size());
    }
  });
  return tr;
}

std::size_t count_bright(const TRMatrix& tr, double bright_threshold) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < tr.size(); ++i)
    for (std::size_t j = 0; j < tr.size(); ++j)
      if (i != j && tr.at(i, j) > bright_threshold) ++count;
  return count;
}

std::size_t auto_tune_image_count(const std::function<TRMatrix(std::size_t)>& build_map,
                                  std::size_t num_classes, std::size_t start_n,
                                  double bright_threshold) {
  if (start_n < 2) throw InputError("auto-tuning needs start_n >= 2");
  const std::size_t bound = 2 * (num_classes * num_classes - num_classes);
  std::size_t n = start_n;
  while (n > 2 && count_bright(build_map(n), bright_threshold) > bound) n = std::max<std::size_t>(2, n / 2);
  return n;
}

std::size_t auto_tune_image_count(const Network& net, const LabeledDataset& clean, ReMode mode,
                                  const ReConfig& cfg, std::size_t start_n,
                                  double bright_threshold, std::size_t workers) {
  auto build = [&](std::size_t n) {
    ReConfig local = cfg;
    local.images_per_class = n;
    return tr_matrix(net, reverse_engineer_all_pairs(net, clean, mode, local, workers), clean,
                     workers);
  };
  return auto_tune_image_count(build, net.output_dim(), start_n, bright_threshold);
}

}  // namespace umd
