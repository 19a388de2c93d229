#pragma once

// Independent oracles and fixtures shared by the unit tests. Nothing here
// calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "umd/bench.hpp"

namespace umd::testing {

inline Network random_network(std::vector<std::size_t> widths, std::uint64_t seed) {
  Network net = Network::glorot(widths, seed);
  std::mt19937_64 rng(derive_seed(seed, 99));
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& layer : net.mutable_layers())
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = n(rng);
  return net;
}

inline Matrix random_rows(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, double lo, double hi, std::uint64_t seed) {
  return random_rows(n, 1, lo, hi, seed).col(0);
}

/// Central differences of a scalar function, step h. The small default keeps
/// probes of random ReLU networks from straddling a kink.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                                 double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Largest componentwise difference relative to the largest reference entry.
inline double max_relative_error(const Vector& got, const Vector& ref) {
  const double scale = std::max(ref.cwiseAbs().maxCoeff(), 1e-12);
  return (got - ref).cwiseAbs().maxCoeff() / scale;
}

inline double naive_softmax_entry(const Vector& logits, Eigen::Index k) {
  double denom = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) denom += std::exp(logits(i));
  return std::exp(logits(k)) / denom;
}

/// Standard normal CDF from its Taylor series, accurate for |x| <= 8.
inline double series_normal_cdf(double x) {
  double term = x;
  double sum = x;
  for (int n = 1; n < 400; ++n) {
    term *= x * x / (2.0 * n + 1.0);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return 0.5 + sum * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double bisection_quantile(double p) {
  double lo = -8.0, hi = 8.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (series_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Median by selection, written independently of the library's sort-based one.
inline double brute_median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto kth = [&](std::size_t k) {
    std::vector<double> w = v;
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k), w.end());
    return w[k];
  };
  if (n % 2 == 1) return kth(n / 2);
  return (kth(n / 2 - 1) + kth(n / 2)) / 2.0;
}

inline double brute_mad_of_reciprocals(const std::vector<double>& sizes) {
  std::vector<double> r;
  for (double z : sizes) r.push_back(1.0 / z);
  const double c = brute_median(r);
  std::vector<double> dev;
  for (double x : r) dev.push_back(std::fabs(x - c));
  return brute_median(dev);
}

inline double brute_score(const std::vector<double>& cand, const std::vector<double>& null) {
  std::vector<double> rc, rn;
  for (double z : cand) rc.push_back(1.0 / z);
  for (double z : null) rn.push_back(1.0 / z);
  const double sigma = brute_mad_of_reciprocals(null);
  return (brute_median(rc) - brute_median(rn)) / (1.4826 * sigma);
}

/// TR map with every off-diagonal entry set by fill(i, j).
inline TRMatrix make_tr(std::size_t K, const std::function<double(std::size_t, std::size_t)>& fill) {
  TRMatrix tr;
  tr.num_classes = K;
  tr.pairs = all_class_pairs(K);
  const auto n = static_cast<Eigen::Index>(tr.pairs.size());
  tr.values = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) tr.values(i, j) = fill(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return tr;
}

inline TRMatrix random_tr(std::size_t K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return make_tr(K, [&](std::size_t, std::size_t) { return u(rng); });
}

/// In-block entries `in`, every other entry uniform in [0, out_max].
inline TRMatrix planted_block_tr(std::size_t K, const std::vector<ClassPair>& block, double in,
                                 double out_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, out_max);
  const auto pairs = all_class_pairs(K);
  auto member = [&](std::size_t i) {
    return std::find(block.begin(), block.end(), pairs[i]) != block.end();
  };
  return make_tr(K, [&](std::size_t i, std::size_t j) {
    return member(i) && member(j) ? in : u(rng);
  });
}

/// Random source-disjoint set of `n` pairs over K classes.
inline std::vector<ClassPair> random_disjoint_pairs(std::size_t K, std::size_t n, std::mt19937_64& rng) {
  std::vector<int> sources(K);
  for (std::size_t i = 0; i < K; ++i) sources[i] = static_cast<int>(i);
  std::shuffle(sources.begin(), sources.end(), rng);
  std::vector<ClassPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int s = sources[i];
    int t = std::uniform_int_distribution<int>(0, static_cast<int>(K) - 2)(rng);
    if (t >= s) ++t;
    out.emplace_back(s, t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Estimate map with perturbation triggers of the given sizes.
inline EstimateMap estimates_with_sizes(const SizeMap& sizes, std::size_t d = 4) {
  EstimateMap est;
  for (const auto& [pair, z] : sizes) {
    TriggerEstimate e;
    e.pair = pair;
    e.size = z;
    e.converged = true;
    Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
    v(0) = z;
    e.trigger = TriggerSpec::perturbation(v);
    est.emplace(pair, e);
  }
  return est;
}

/// A small, fast victim recipe for tests that need a trained model.
inline VictimConfig small_victim_config() {
  VictimConfig cfg;
  cfg.train_per_class = 300;
  cfg.test_per_class = 100;
  cfg.poison_per_source = 250;
  cfg.train.epochs = 30;
  return cfg;
}

}  // namespace umd::testing
