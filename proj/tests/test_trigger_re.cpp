#include <doctest.h>

#include "support.hpp"

using namespace umd;
using namespace umd::testing;

TEST_CASE("mode defaults") {
  const ReConfig pert = ReConfig::defaults(ReMode::perturbation);
  const ReConfig patch = ReConfig::defaults(ReMode::patch);
  CHECK(pert.images_per_class == 10);
  CHECK(patch.images_per_class == 20);
  CHECK(patch.restarts == 5);
  CHECK(pert.pi == 0.9);
  CHECK(pert.max_steps == 1000);
  CHECK(pert.check_every == 10);
  CHECK(patch.lambda_init == 1e-3);
  CHECK(parse_re_mode("patch") == ReMode::patch);
  CHECK(to_string(ReMode::intermediate) == "intermediate");
  CHECK_THROWS_AS(parse_re_mode("nope"), InputError);
  ReConfig bad = pert;
  bad.pi = 0.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad.pi = 1.0;
  CHECK_NOTHROW(bad.validate());
  bad.max_steps = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("perturbation surrogate gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Network net = random_network({12, 10, 6, 4}, 10 + seed);
    // Inputs and shifts kept away from the clip boundaries so the surrogate
    // is smooth around the probe point.
    const Matrix rows = random_rows(8, 12, 0.2, 0.8, 20 + seed);
    const Vector v = random_vector(12, -0.1, 0.1, 30 + seed);
    const int t = static_cast<int>(seed % 4);
    auto f = [&](const Vector& w) { return perturbation_surrogate(net, rows, t, w).value; };
    const auto s = perturbation_surrogate(net, rows, t, v);
    CHECK(s.value == doctest::Approx(f(v)));
    CHECK(max_relative_error(s.gradient, central_difference(f, v)) < 1e-3);
  }
}

TEST_CASE("perturbation surrogate ignores coordinates pinned by clipping") {
  const Network net = random_network({4, 5, 3}, 1);
  const Matrix rows = Matrix::Constant(3, 4, 0.5);
  Vector v = Vector::Zero(4);
  v(1) = 0.8;  // x + v = 1.3, clipped to 1
  const auto s = perturbation_surrogate(net, rows, 2, v);
  CHECK(s.gradient(1) == 0.0);
  CHECK(s.gradient(0) != 0.0);
}

TEST_CASE("intermediate surrogate gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Network net = random_network({10, 8, 6, 3}, 40 + seed);
    const auto [prefix, suffix] = net.split_at(2);
    const Matrix features = prefix.outputs(random_rows(7, 10, 0, 1, 50 + seed));
    const Vector w = random_vector(6, -0.5, 0.5, 60 + seed);
    const int t = static_cast<int>(seed % 3);
    auto f = [&](const Vector& x) { return intermediate_surrogate(suffix, features, t, x).value; };
    CHECK(max_relative_error(intermediate_surrogate(suffix, features, t, w).gradient,
                             central_difference(f, w)) < 1e-3);
  }
}

TEST_CASE("patch surrogate gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Network net = random_network({9, 7, 4}, 70 + seed);
    const Matrix rows = random_rows(6, 9, 0, 1, 80 + seed);
    const Vector u = random_vector(9, 0.05, 0.95, 90 + seed);
    const Vector m = random_vector(9, 0.05, 0.95, 110 + seed);
    const double lambda = 0.01 * static_cast<double>(seed % 3);
    const int t = static_cast<int>(seed % 4);
    const auto s = patch_surrogate(net, rows, t, u, m, lambda);
    auto fu = [&](const Vector& x) { return patch_surrogate(net, rows, t, x, m, lambda).value; };
    auto fm = [&](const Vector& x) { return patch_surrogate(net, rows, t, u, x, lambda).value; };
    CHECK(max_relative_error(s.grad_pattern, central_difference(fu, u)) < 1e-3);
    CHECK(max_relative_error(s.grad_mask, central_difference(fm, m)) < 1e-3);
  }
}

namespace {

// One linear layer over 2-d inputs: class 0 fires on x0, class 1 on x1.
Network two_way(double gain = 10.0) {
  DenseLayer l{Matrix::Zero(2, 2), Vector::Zero(2), Activation::identity};
  l.weights << gain, 0.0, 0.0, gain;
  return Network({l});
}

}  // namespace

TEST_CASE("perturbation search returns zero when the constraint already holds") {
  const Network net = two_way();
  Matrix rows(3, 2);
  rows << 0.1, 0.9, 0.2, 0.8, 0.3, 0.7;  // all classified as 1 already
  const auto est = reverse_engineer_perturbation(net, rows, ClassPair(0, 1), ReConfig{});
  CHECK(est.converged);
  CHECK(est.size == 0.0);
  CHECK(est.steps_used == 0);
  CHECK(est.trigger.pattern.isZero());
}

TEST_CASE("perturbation search converges on an easy pair") {
  const Network net = two_way();
  Matrix rows(4, 2);
  rows << 0.6, 0.4, 0.7, 0.5, 0.55, 0.45, 0.65, 0.35;
  ReConfig cfg;
  cfg.learning_rate = 0.005;
  const auto est = reverse_engineer_perturbation(net, rows, ClassPair(0, 1), cfg);
  CHECK(est.converged);
  CHECK(est.achieved_fraction >= 0.9);
  CHECK(est.size == doctest::Approx(est.trigger.pattern.norm()));
  // Moving along (-1, 1) the largest margin is 0.3, i.e. a shift of norm
  // 0.3 / sqrt(2) ~ 0.212; the search lands close to it.
  CHECK(est.size < 0.3);
  const auto pred = net.predict(embed_rows(rows, est.trigger));
  CHECK(std::count(pred.begin(), pred.end(), 1) == 4);
}

TEST_CASE("perturbation search reports failure on an unreachable pair") {
  // Class 1 logit is constant and below class 0: no shift can reach it.
  DenseLayer l{Matrix::Zero(2, 2), Vector::Zero(2), Activation::identity};
  l.bias << 5.0, 0.0;
  const Network net({l});
  const Matrix rows = Matrix::Constant(3, 2, 0.5);
  ReConfig cfg;
  cfg.max_steps = 50;
  const auto est = reverse_engineer_perturbation(net, rows, ClassPair(0, 1), cfg);
  CHECK_FALSE(est.converged);
  CHECK(std::isfinite(est.size));
}

TEST_CASE("intermediate search on a linear suffix") {
  DenseLayer head{Matrix::Identity(3, 3), Vector::Zero(3), Activation::relu};
  DenseLayer tail{Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity};
  const Network net({head, tail});
  const auto [prefix, suffix] = net.split_at(1);
  Matrix rows(2, 3);
  rows << 0.9, 0.1, 0.2, 0.8, 0.2, 0.1;
  ReConfig cfg;
  cfg.learning_rate = 0.05;
  const auto est = reverse_engineer_intermediate(prefix, suffix, rows, ClassPair(0, 2), cfg);
  CHECK(est.converged);
  CHECK(est.steps_used <= 50);
  CHECK(est.size == doctest::Approx(est.feature_shift.norm()));
  CHECK(est.mode == ReMode::intermediate);

  Matrix done(2, 3);
  done << 0.1, 0.1, 0.9, 0.2, 0.0, 0.7;
  const auto zero = reverse_engineer_intermediate(prefix, suffix, done, ClassPair(0, 2), cfg);
  CHECK(zero.converged);
  CHECK(zero.size == 0.0);
}

TEST_CASE("patch search keeps the box constraint and a monotone best size") {
  const Network net = random_network({16, 8, 3}, 5);
  const Matrix rows = random_rows(6, 16, 0, 1, 6);
  ReConfig cfg = ReConfig::defaults(ReMode::patch);
  cfg.max_steps = 200;
  cfg.restarts = 2;
  cfg.seed = 3;
  const auto est = reverse_engineer_patch(net, rows, ClassPair(0, 1), cfg);
  CHECK((est.trigger.mask.array() >= 0.0).all());
  CHECK((est.trigger.mask.array() <= 1.0).all());
  CHECK((est.trigger.pattern.array() >= 0.0).all());
  CHECK((est.trigger.pattern.array() <= 1.0).all());
  CHECK(est.size == doctest::Approx(est.trigger.mask.sum()));
  for (std::size_t i = 1; i < est.best_size_history.size(); ++i)
    CHECK(est.best_size_history[i] <= est.best_size_history[i - 1]);
  const auto again = reverse_engineer_patch(net, rows, ClassPair(0, 1), cfg);
  CHECK(again.size == est.size);
  CHECK(again.trigger.mask == est.trigger.mask);
}

TEST_CASE("all-pairs search covers every ordered pair and is worker-invariant") {
  const BlobGenerator gen(4, 16, 1.6, 2);
  const auto data = gen.sample(80, 1);
  const std::vector<std::size_t> widths{16, 12, 4};
  const Network net = train(Network::glorot(widths, 1), data, TrainConfig{20, 1e-3, 32, 2});
  const auto clean = gen.sample(15, 3);
  ReConfig cfg;
  cfg.max_steps = 300;
  cfg.seed = 7;
  const auto one = reverse_engineer_all_pairs(net, clean, ReMode::perturbation, cfg, 1);
  const auto many = reverse_engineer_all_pairs(net, clean, ReMode::perturbation, cfg, 8);
  CHECK(one.size() == 12);
  for (const auto& [pair, est] : one) {
    CHECK(est.pair == pair);
    CHECK(many.at(pair).size == est.size);
    CHECK(many.at(pair).trigger.pattern == est.trigger.pattern);
  }
  cfg.images_per_class = 1000;
  CHECK_THROWS_WITH_AS(reverse_engineer_all_pairs(net, clean, ReMode::perturbation, cfg),
                       doctest::Contains("class 0"), InputError);
}

TEST_CASE("five classes give twenty estimates") {
  const BlobGenerator gen(5, 16, 1.6, 4);
  const std::vector<std::size_t> widths{16, 12, 5};
  const Network net = train(Network::glorot(widths, 1), gen.sample(60, 1), TrainConfig{20, 1e-3, 32, 2});
  ReConfig cfg;
  cfg.max_steps = 20;
  cfg.images_per_class = 5;
  CHECK(reverse_engineer_all_pairs(net, gen.sample(20, 2), ReMode::perturbation, cfg).size() == 20);
}

TEST_CASE("clean image pools skip misclassified samples") {
  const Network net = two_way();
  Matrix x(5, 2);
  x << 0.9, 0.1, 0.1, 0.9, 0.2, 0.8, 0.8, 0.3, 0.3, 0.7;
  const LabeledDataset data(2, x, {0, 0, 1, 0, 1});  // row 1 is misclassified
  const auto pools = clean_images_per_class(net, data, 1);
  CHECK(pools[0].row(0) == x.row(0));
  CHECK(pools[1].row(0) == x.row(2));
  const auto two = clean_images_per_class(net, data, 2);
  CHECK(two[0].row(1) == x.row(3));
  CHECK(two[1].row(1) == x.row(4));
  CHECK_THROWS_AS(clean_images_per_class(net, data, 3), InputError);
}
