#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "umd/common.hpp"

namespace umd {

class Network;

/// Ordered (source, target) pair of class labels with source != target.
struct ClassPair {
  int source;
  int target;

  ClassPair(int source_class, int target_class);

  auto operator<=>(const ClassPair&) const = default;
};

std::string to_string(const ClassPair& pair);

/// Samples stored as rows of an input matrix with one label per row.
class LabeledDataset {
 public:
  LabeledDataset() = default;  // K = d = 0, only useful as a placeholder
  LabeledDataset(std::size_t num_classes, std::size_t input_dim);
  LabeledDataset(std::size_t num_classes, Matrix inputs, std::vector<int> labels);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  const Matrix& inputs() const { return inputs_; }
  const std::vector<int>& labels() const { return labels_; }

  /// Rows of a single class, in dataset order.
  Matrix class_rows(int label) const;
  std::size_t class_count(int label) const;

  void append(const Matrix& rows, int label);
  void append(const LabeledDataset& other);

  bool operator==(const LabeledDataset& other) const;

 private:
  std::size_t num_classes_ = 0;
  std::size_t input_dim_ = 0;
  Matrix inputs_;
  std::vector<int> labels_;
};

/// Class-conditional Gaussian blobs. Centroids are fixed by the generator
/// seed; each `sample` call draws fresh points around them.
class BlobGenerator {
 public:
  BlobGenerator(std::size_t num_classes, std::size_t input_dim, double separation,
                std::uint64_t seed);

  LabeledDataset sample(std::size_t per_class, std::uint64_t sample_seed) const;
  const Matrix& centroids() const { return centroids_; }
  double noise_stddev() const { return noise_stddev_; }

 private:
  std::size_t num_classes_;
  std::size_t input_dim_;
  double noise_stddev_;
  Matrix centroids_;
};

LabeledDataset make_synthetic_dataset(std::size_t num_classes, std::size_t input_dim,
                                      std::size_t per_class, double separation,
                                      std::uint64_t seed);

enum class TriggerKind : std::uint8_t { perturbation = 0, patch = 1 };

/// Additive perturbation v, or patch u with binary mask m.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::perturbation;
  Vector pattern;  // v for perturbation, u for patch
  Vector mask;     // empty for perturbation

  static TriggerSpec perturbation(Vector v);
  static TriggerSpec patch(Vector u, Vector m);

  std::size_t dim() const { return static_cast<std::size_t>(pattern.size()); }
};

/// Perturbation: clip(x + v) into [0,1]. Patch: (1 - m) * x + m * u.
Vector embed(const Vector& x, const TriggerSpec& trigger);
Matrix embed_rows(const Matrix& rows, const TriggerSpec& trigger);

/// Both image diagonals of a side x side layout raised by `magnitude`.
TriggerSpec x_diagonal_trigger(std::size_t side, double magnitude);

/// A patch x patch block at a random position with random colors.
TriggerSpec random_patch_trigger(std::size_t side, std::size_t patch, std::uint64_t seed);

struct AttackSpec {
  std::vector<ClassPair> pairs;
  TriggerSpec trigger;
  std::size_t poison_per_source = 300;

  /// Throws InputError unless the pairs form a valid X2X attack for K classes
  /// and the trigger matches input_dim.
  void validate(std::size_t num_classes, std::size_t input_dim) const;
};

/// Throws InputError if two distinct pairs share a source class.
void validate_pair_set(const std::vector<ClassPair>& pairs);

enum class AttackSetting { a2o, o2o, x2x, a2ar };

std::string to_string(AttackSetting setting);
AttackSetting parse_attack_setting(const std::string& text);

std::vector<ClassPair> a2o_pairs(std::size_t num_classes, int target);

/// `num_pairs` is only read for the X2X setting.
AttackSpec build_attack_spec(AttackSetting setting, std::size_t num_classes,
                             TriggerSpec trigger, std::uint64_t seed,
                             std::size_t num_pairs = 0, std::size_t poison_per_source = 300);

/// Appends poison_per_source triggered copies of class-s samples (drawn with
/// replacement) labeled t for every (s, t). Clean samples are left untouched.
LabeledDataset poison(const LabeledDataset& data, const AttackSpec& attack,
                      std::uint64_t seed);

struct AttackSuccess {
  double overall = 0.0;
  std::map<ClassPair, double> per_pair;
};

AttackSuccess attack_success_rate(const Network& net, const LabeledDataset& clean_test,
                                  const AttackSpec& attack);

}  // namespace umd
