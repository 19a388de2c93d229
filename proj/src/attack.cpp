#include "umd/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "umd/nn.hpp"

namespace umd {

ClassPair::ClassPair(int source_class, int target_class)
    : source(source_class), target(target_class) {
  if (source < 0 || target < 0) throw InputError("class labels must be non-negative");
  if (source == target)
    throw InputError("class pair (" + std::to_string(source) + "," + std::to_string(target) +
                     ") has source equal to target");
}

std::string to_string(const ClassPair& pair) {
  return "(" + std::to_string(pair.source) + "," + std::to_string(pair.target) + ")";
}

// ---------------------------------------------------------------------------
// LabeledDataset

LabeledDataset::LabeledDataset(std::size_t num_classes, std::size_t input_dim)
    : num_classes_(num_classes),
      input_dim_(input_dim),
      inputs_(0, static_cast<Eigen::Index>(input_dim)) {
  if (num_classes == 0) throw InputError("dataset needs at least one class");
}

LabeledDataset::LabeledDataset(std::size_t num_classes, Matrix inputs, std::vector<int> labels)
    : num_classes_(num_classes),
      input_dim_(static_cast<std::size_t>(inputs.cols())),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)) {
  if (num_classes == 0) throw InputError("dataset needs at least one class");
  if (static_cast<std::size_t>(inputs_.rows()) != labels_.size())
    throw InputError("dataset has " + std::to_string(inputs_.rows()) + " rows but " +
                     std::to_string(labels_.size()) + " labels");
  for (int y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes_)
      throw InputError("label " + std::to_string(y) + " outside [0, K)");
  }
}

std::size_t LabeledDataset::class_count(int label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

Matrix LabeledDataset::class_rows(int label) const {
  Matrix out(static_cast<Eigen::Index>(class_count(label)), static_cast<Eigen::Index>(input_dim_));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.row(r++) = inputs_.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

void LabeledDataset::append(const Matrix& rows, int label) {
  if (static_cast<std::size_t>(rows.cols()) != input_dim_)
    throw InputError("appended rows have the wrong dimension");
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_)
    throw InputError("label " + std::to_string(label) + " outside [0, K)");
  const Eigen::Index old = inputs_.rows();
  inputs_.conservativeResize(old + rows.rows(), Eigen::NoChange);
  inputs_.bottomRows(rows.rows()) = rows;
  labels_.insert(labels_.end(), static_cast<std::size_t>(rows.rows()), label);
}

void LabeledDataset::append(const LabeledDataset& other) {
  if (other.num_classes_ != num_classes_ || other.input_dim_ != input_dim_)
    throw InputError("cannot append a dataset with a different shape");
  const Eigen::Index old = inputs_.rows();
  inputs_.conservativeResize(old + other.inputs_.rows(), Eigen::NoChange);
  inputs_.bottomRows(other.inputs_.rows()) = other.inputs_;
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
  return num_classes_ == other.num_classes_ && input_dim_ == other.input_dim_ &&
         labels_ == other.labels_ && inputs_.rows() == other.inputs_.rows() &&
         inputs_ == other.inputs_;
}

// ---------------------------------------------------------------------------
// Synthetic data

BlobGenerator::BlobGenerator(std::size_t num_classes, std::size_t input_dim, double separation,
                             std::uint64_t seed)
    : num_classes_(num_classes), input_dim_(input_dim) {
  if (num_classes < 2) throw InputError("synthetic data needs K >= 2");
  if (input_dim < 4) throw InputError("synthetic data needs d >= 4");
  if (!(separation > 0.0)) throw InputError("separation must be positive");
  noise_stddev_ = 0.25 / separation;
  std::mt19937_64 rng(derive_seed(seed, 0xb10b));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  centroids_.resize(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(input_dim));
  for (Eigen::Index k = 0; k < centroids_.rows(); ++k)
    for (Eigen::Index j = 0; j < centroids_.cols(); ++j) centroids_(k, j) = unit(rng);
}

LabeledDataset BlobGenerator::sample(std::size_t per_class, std::uint64_t sample_seed) const {
  if (per_class == 0) throw InputError("per_class must be at least 1");
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, noise_stddev_);
  const auto n = static_cast<Eigen::Index>(per_class * num_classes_);
  Matrix rows(n, static_cast<Eigen::Index>(input_dim_));
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < num_classes_; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        const double v = centroids_(static_cast<Eigen::Index>(k), j) + noise(rng);
        rows(r, j) = std::clamp(v, 0.0, 1.0);
      }
      labels.push_back(static_cast<int>(k));
    }
  }
  return LabeledDataset(num_classes_, std::move(rows), std::move(labels));
}

LabeledDataset make_synthetic_dataset(std::size_t num_classes, std::size_t input_dim,
                                      std::size_t per_class, double separation,
                                      std::uint64_t seed) {
  return BlobGenerator(num_classes, input_dim, separation, seed)
      .sample(per_class, derive_seed(seed, 1));
}

// ---------------------------------------------------------------------------
// Triggers

TriggerSpec TriggerSpec::perturbation(Vector v) {
  if (!v.allFinite()) throw InputError("perturbation trigger must be finite");
  TriggerSpec t;
  t.kind = TriggerKind::perturbation;
  t.pattern = std::move(v);
  return t;
}

TriggerSpec TriggerSpec::patch(Vector u, Vector m) {
  if (u.size() != m.size()) throw InputError("patch and mask lengths differ");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (m(i) != 0.0 && m(i) != 1.0) throw InputError("patch mask must be {0,1}-valued");
  }
  TriggerSpec t;
  t.kind = TriggerKind::patch;
  t.pattern = std::move(u);
  t.mask = std::move(m);
  return t;
}

namespace {

// Masks handed to this helper may be relaxed to [0,1] during reverse
// engineering; embed only requires equal lengths.
void check_embed_dims(std::size_t d, const TriggerSpec& t) {
  if (t.dim() != d) throw InputError("trigger dimension does not match input dimension");
  if (t.kind == TriggerKind::patch && static_cast<std::size_t>(t.mask.size()) != d)
    throw InputError("patch mask dimension does not match input dimension");
}

}  // namespace

Vector embed(const Vector& x, const TriggerSpec& trigger) {
  check_embed_dims(static_cast<std::size_t>(x.size()), trigger);
  if (trigger.kind == TriggerKind::perturbation)
    return (x + trigger.pattern).cwiseMax(0.0).cwiseMin(1.0);
  return ((1.0 - trigger.mask.array()) * x.array() + trigger.mask.array() * trigger.pattern.array())
      .matrix();
}

Matrix embed_rows(const Matrix& rows, const TriggerSpec& trigger) {
  check_embed_dims(static_cast<std::size_t>(rows.cols()), trigger);
  Matrix out = rows;
  if (trigger.kind == TriggerKind::perturbation) {
    out.rowwise() += trigger.pattern.transpose();
    return out.cwiseMax(0.0).cwiseMin(1.0);
  }
  const Eigen::RowVectorXd keep = (1.0 - trigger.mask.array()).matrix().transpose();
  const Eigen::RowVectorXd stamp =
      (trigger.mask.array() * trigger.pattern.array()).matrix().transpose();
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r) = out.row(r).cwiseProduct(keep) + stamp;
  return out;
}

TriggerSpec x_diagonal_trigger(std::size_t side, double magnitude) {
  if (side < 2) throw InputError("trigger layout side must be at least 2");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(side * side));
  for (std::size_t i = 0; i < side; ++i) {
    v(static_cast<Eigen::Index>(i * side + i)) = magnitude;
    v(static_cast<Eigen::Index>(i * side + (side - 1 - i))) = magnitude;
  }
  return TriggerSpec::perturbation(std::move(v));
}

TriggerSpec random_patch_trigger(std::size_t side, std::size_t patch, std::uint64_t seed) {
  if (patch == 0 || patch > side) throw InputError("patch must fit inside the layout");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pos(0, side - patch);
  std::uniform_real_distribution<double> color(0.0, 1.0);
  const std::size_t row0 = pos(rng);
  const std::size_t col0 = pos(rng);
  const auto d = static_cast<Eigen::Index>(side * side);
  Vector u = Vector::Zero(d);
  Vector m = Vector::Zero(d);
  for (std::size_t r = row0; r < row0 + patch; ++r) {
    for (std::size_t c = col0; c < col0 + patch; ++c) {
      const auto idx = static_cast<Eigen::Index>(r * side + c);
      m(idx) = 1.0;
      u(idx) = color(rng);
    }
  }
  return TriggerSpec::patch(std::move(u), std::move(m));
}

// ---------------------------------------------------------------------------
// Attack specifications

void validate_pair_set(const std::vector<ClassPair>& pairs) {
  std::set<int> sources;
  std::set<ClassPair> seen;
  for (const auto& p : pairs) {
    if (p.source == p.target) throw InputError("pair " + to_string(p) + " has source == target");
    if (!seen.insert(p).second) continue;
    if (!sources.insert(p.source).second)
      throw InputError("two backdoor pairs share source class " + std::to_string(p.source));
  }
}

void AttackSpec::validate(std::size_t num_classes, std::size_t input_dim) const {
  if (pairs.empty()) throw InputError("attack has no class pairs");
  for (const auto& p : pairs) {
    if (static_cast<std::size_t>(p.source) >= num_classes ||
        static_cast<std::size_t>(p.target) >= num_classes)
      throw InputError("pair " + to_string(p) + " uses a label outside [0, K)");
  }
  validate_pair_set(pairs);
  if (trigger.dim() != input_dim) throw InputError("trigger dimension does not match data");
  if (trigger.kind == TriggerKind::patch && static_cast<std::size_t>(trigger.mask.size()) != input_dim)
    throw InputError("trigger mask dimension does not match data");
}

std::string to_string(AttackSetting setting) {
  switch (setting) {
    case AttackSetting::a2o: return "a2o";
    case AttackSetting::o2o: return "o2o";
    case AttackSetting::x2x: return "x2x";
    case AttackSetting::a2ar: return "a2ar";
  }
  return "unknown";
}

AttackSetting parse_attack_setting(const std::string& text) {
  if (text == "a2o") return AttackSetting::a2o;
  if (text == "o2o") return AttackSetting::o2o;
  if (text == "x2x") return AttackSetting::x2x;
  if (text == "a2ar") return AttackSetting::a2ar;
  throw InputError("unknown attack setting '" + text + "'");
}

std::vector<ClassPair> a2o_pairs(std::size_t num_classes, int target) {
  if (num_classes < 2) throw InputError("A2O needs K >= 2");
  if (target < 0 || static_cast<std::size_t>(target) >= num_classes)
    throw InputError("A2O target outside [0, K)");
  std::vector<ClassPair> pairs;
  for (int s = 0; s < static_cast<int>(num_classes); ++s) {
    if (s != target) pairs.emplace_back(s, target);
  }
  return pairs;
}

AttackSpec build_attack_spec(AttackSetting setting, std::size_t num_classes, TriggerSpec trigger,
                             std::uint64_t seed, std::size_t num_pairs,
                             std::size_t poison_per_source) {
  if (num_classes < 2) throw InputError("an attack needs at least two classes");
  std::mt19937_64 rng(seed);
  const int K = static_cast<int>(num_classes);
  auto draw = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  // Uniform over labels other than `s`.
  auto draw_other = [&](int s) {
    const int t = draw(0, K - 2);
    return t >= s ? t + 1 : t;
  };

  AttackSpec spec;
  spec.trigger = std::move(trigger);
  spec.poison_per_source = poison_per_source;
  switch (setting) {
    case AttackSetting::a2o:
      spec.pairs = a2o_pairs(num_classes, draw(0, K - 1));
      break;
    case AttackSetting::o2o: {
      const int s = draw(0, K - 1);
      spec.pairs.emplace_back(s, draw_other(s));
      break;
    }
    case AttackSetting::x2x: {
      if (num_pairs == 0 || num_pairs > num_classes)
        throw InputError("X2X needs 1 <= n <= K pairs, got n=" + std::to_string(num_pairs));
      std::vector<int> sources(num_classes);
      std::iota(sources.begin(), sources.end(), 0);
      std::shuffle(sources.begin(), sources.end(), rng);
      sources.resize(num_pairs);
      std::sort(sources.begin(), sources.end());
      for (int s : sources) spec.pairs.emplace_back(s, draw_other(s));
      break;
    }
    case AttackSetting::a2ar: {
      std::vector<int> perm(num_classes);
      std::iota(perm.begin(), perm.end(), 0);
      for (;;) {
        std::shuffle(perm.begin(), perm.end(), rng);
        bool fixed_point = false;
        for (int s = 0; s < K; ++s) fixed_point |= (perm[static_cast<std::size_t>(s)] == s);
        if (!fixed_point) break;
      }
      for (int s = 0; s < K; ++s) spec.pairs.emplace_back(s, perm[static_cast<std::size_t>(s)]);
      break;
    }
  }
  validate_pair_set(spec.pairs);
  return spec;
}

LabeledDataset poison(const LabeledDataset& data, const AttackSpec& attack, std::uint64_t seed) {
  attack.validate(data.num_classes(), data.input_dim());
  LabeledDataset out = data;
  if (attack.poison_per_source == 0) return out;
  std::mt19937_64 rng(seed);
  for (const auto& pair : attack.pairs) {
    const Matrix source = data.class_rows(pair.source);
    if (source.rows() == 0)
      throw InputError("source class " + std::to_string(pair.source) + " has no samples to poison");
    std::uniform_int_distribution<Eigen::Index> pick(0, source.rows() - 1);
    Matrix copies(static_cast<Eigen::Index>(attack.poison_per_source), source.cols());
    for (Eigen::Index r = 0; r < copies.rows(); ++r) copies.row(r) = source.row(pick(rng));
    out.append(embed_rows(copies, attack.trigger), pair.target);
  }
  return out;
}

AttackSuccess attack_success_rate(const Network& net, const LabeledDataset& clean_test,
                                  const AttackSpec& attack) {
  attack.validate(clean_test.num_classes(), clean_test.input_dim());
  AttackSuccess result;
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& pair : attack.pairs) {
    const Matrix rows = clean_test.class_rows(pair.source);
    if (rows.rows() == 0)
      throw InputError("no test samples for source class " + std::to_string(pair.source));
    const auto pred = net.predict(embed_rows(rows, attack.trigger));
    const auto pair_hits =
        static_cast<std::size_t>(std::count(pred.begin(), pred.end(), pair.target));
    result.per_pair[pair] = static_cast<double>(pair_hits) / static_cast<double>(pred.size());
    hits += pair_hits;
    total += pred.size();
  }
  result.overall = static_cast<double>(hits) / static_cast<double>(total);
  return result;
}

}  // namespace umd
