#include <doctest.h>

#include "support.hpp"

using namespace umd;
using namespace umd::testing;

namespace {

SizeMap sizes_of(const std::vector<double>& z) {
  SizeMap m;
  const auto pairs = all_class_pairs(5);
  for (std::size_t i = 0; i < z.size(); ++i) m[pairs[i]] = z[i];
  return m;
}

}  // namespace

TEST_CASE("median conventions") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(median({1.0, inf, 2.0}) == 2.0);
  CHECK(median({inf, inf, 2.0}) == inf);
  CHECK_THROWS_AS(median({}), InputError);
}

TEST_CASE("reciprocals map zero sizes to infinity") {
  const auto r = reciprocals({0.5, 0.0, 4.0});
  CHECK(r[0] == 2.0);
  CHECK(std::isinf(r[1]));
  CHECK(r[2] == 0.25);
  CHECK_THROWS_AS(reciprocals({-1.0}), InputError);
}

TEST_CASE("null MAD by hand") {
  // Null reciprocals {1, 2, 3}.
  CHECK(mad_of_reciprocals({1.0, 0.5, 1.0 / 3.0}) == doctest::Approx(1.0));
  CHECK(mad_of_reciprocals({0.7, 0.7, 0.7}) == 0.0);
  CHECK(mad_of_reciprocals({0.3}) == 0.0);
  CHECK_THROWS_AS(mad_of_reciprocals({}), InputError);
}

TEST_CASE("null MAD excludes the candidate set") {
  const SizeMap z = sizes_of({0.1, 0.1, 1.0, 0.5, 1.0 / 3.0});
  const std::vector<ClassPair> cand{{0, 1}, {0, 2}};
  CHECK(mad_null(z, cand) == doctest::Approx(1.0));
  const auto split = split_sizes(z, cand);
  CHECK(split.candidate.size() == 2);
  CHECK(split.null.size() == 3);
  CHECK_THROWS_AS(mad_null(z, {{4, 3}}), InputError);
}

TEST_CASE("anomaly score by hand") {
  // Candidate median reciprocal 10, null reciprocals {1, 2, 3}.
  CHECK(anomaly_score({0.1}, {1.0, 0.5, 1.0 / 3.0}) == doctest::Approx(8.0 / 1.4826).epsilon(1e-12));
  CHECK(8.0 / 1.4826 == doctest::Approx(5.396).epsilon(1e-4));
  CHECK(anomaly_score({0.5}, {1.0, 0.5, 1.0 / 3.0}) == 0.0);
  CHECK(kMadScale == 1.4826);
}

TEST_CASE("degenerate spread") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(anomaly_score({0.1, 0.2}, {1.0, 1.0, 1.0}) == inf);
  CHECK(anomaly_score({1.0, 1.0}, {1.0, 1.0, 1.0}) == 0.0);
  CHECK(anomaly_score({2.0}, {1.0, 1.0}) == 0.0);
  // Zero-size candidates carry infinite reciprocals.
  CHECK(anomaly_score({0.0, 0.0}, {1.0, 0.5, 1.0 / 3.0}) == inf);
  // Null median itself infinite: no evidence either way.
  CHECK(anomaly_score({0.0}, {0.0, 0.0, 1.0}) == 0.0);
  CHECK(mad_of_reciprocals({0.0, 0.0, 1.0}) == 0.0);
  // A single zero-size null statistic joins by ordering only.
  // Reciprocals {inf, 1, 2, 4}: center 3, deviations {inf, 2, 1, 1}.
  CHECK(mad_of_reciprocals({0.0, 1.0, 0.5, 0.25}) == 1.5);
}

TEST_CASE("score and MAD match brute force on random maps") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> z(0.05, 5.0);
  std::uniform_int_distribution<int> sizes(2, 5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> all(20);
    for (auto& x : all) x = z(rng);
    const std::size_t n = static_cast<std::size_t>(sizes(rng));
    const std::vector<double> cand(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    const std::vector<double> null(all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
    CHECK(mad_of_reciprocals(null) == brute_mad_of_reciprocals(null));
    CHECK(anomaly_score(cand, null) == brute_score(cand, null));
  }
}

TEST_CASE("score is invariant to a common positive rescaling") {
  std::mt19937_64 rng(78);
  std::uniform_real_distribution<double> z(0.05, 5.0);
  std::uniform_real_distribution<double> logc(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> cand(3), null(17);
    for (auto& x : cand) x = z(rng);
    for (auto& x : null) x = z(rng);
    const double r = anomaly_score(cand, null);
    for (int k = 0; k < 10; ++k) {
      const double c = std::exp(logc(rng));
      auto scaled = [c](std::vector<double> v) {
        for (auto& x : v) x *= c;
        return v;
      };
      CHECK(anomaly_score(scaled(cand), scaled(null)) == doctest::Approx(r).epsilon(1e-9));
    }
  }
}

TEST_CASE("normal quantile") {
  CHECK(std_normal_quantile(0.5) == 0.0);
  CHECK(std::abs(std_normal_quantile(0.975) - 1.959964) < 1e-6);
  CHECK(std::abs(std_normal_quantile(0.975) - bisection_quantile(0.975)) < 1e-9);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng);
    CHECK(std::abs(std_normal_quantile(p) + std_normal_quantile(1.0 - p)) < 1e-9);
    CHECK(std::abs(std_normal_quantile(p) - bisection_quantile(p)) < 1e-9);
  }
  for (double p : {1e-12, 1e-9, 0.02425, 0.024, 0.9999999})
    CHECK(std::abs(std_normal_cdf(std_normal_quantile(p)) - p) < 1e-9 * std::max(p, 1e-3));
  CHECK_THROWS_AS(std_normal_quantile(0.0), InputError);
  CHECK_THROWS_AS(std_normal_quantile(1.0), InputError);
  CHECK_THROWS_AS(std_normal_quantile(std::nan("")), InputError);
}

TEST_CASE("series CDF oracle agrees with erfc") {
  for (double x = -6.0; x <= 6.0; x += 0.25) CHECK(std::abs(series_normal_cdf(x) - std_normal_cdf(x)) < 1e-12);
}

TEST_CASE("detection threshold") {
  CHECK(std::abs(threshold(0.025, 1) - 1.960) < 1e-3);
  CHECK(threshold(0.05, 1) == doctest::Approx(1.6449).epsilon(1e-4));
  CHECK(std::abs(threshold(0.05, 1) - bisection_quantile(0.95)) < 1e-9);
  CHECK(threshold(0.05, 90) > threshold(0.05, 1));
  for (std::size_t n : {2u, 5u, 18u, 20u, 90u})
    CHECK(std::abs(threshold(0.05, n) - bisection_quantile(std::pow(0.95, 1.0 / static_cast<double>(n)))) < 1e-8);
  CHECK_THROWS_AS(threshold(0.0, 5), InputError);
  CHECK_THROWS_AS(threshold(1.0, 5), InputError);
  CHECK_THROWS_AS(threshold(0.05, 0), InputError);
}

TEST_CASE("assess ties the verdict to the threshold") {
  SizeMap z = sizes_of({0.1, 0.1, 1.0, 0.5, 1.0 / 3.0});
  const auto r = assess(z, {{0, 1}, {0, 2}}, 0.05);
  CHECK(r.n_null == 3);
  CHECK(r.mad == doctest::Approx(1.0));
  CHECK(r.threshold == threshold(0.05, 3));
  CHECK(r.attacked == (r.score > r.threshold));
  CHECK(r.attacked);
  const auto calm = assess(sizes_of({0.6, 0.4, 1.0, 0.5, 1.0 / 3.0}), {{0, 1}, {0, 2}}, 0.05);
  CHECK_FALSE(calm.attacked);
}
