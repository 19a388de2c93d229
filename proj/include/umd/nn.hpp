#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "umd/common.hpp"

namespace umd {

class LabeledDataset;

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Fully-connected feed-forward network. The output of the last layer is the
/// logit vector; `forward` turns it into a posterior with a softmax.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  // widths = {input, hidden..., output}. Hidden layers use ReLU, the last
  // layer is linear.
  static Network zeros(std::span<const std::size_t> widths);
  static Network glorot(std::span<const std::size_t> widths, std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  /// Raw output of the final layer for each row of `inputs`.
  Matrix outputs(const Matrix& inputs) const;
  Vector outputs(const Vector& x) const;

  /// Softmax posteriors, one row per input row.
  Matrix forward(const Matrix& inputs) const;
  Vector forward(const Vector& x) const;

  std::vector<int> predict(const Matrix& inputs) const;
  int predict(const Vector& x) const;

  /// Vector-Jacobian product: given dObjective/dOutput per row, returns
  /// dObjective/dInput per row.
  Matrix backprop_input(const Matrix& inputs, const Matrix& output_grad) const;

  /// Parameter gradients for the same vector-Jacobian product, summed over rows.
  std::vector<DenseLayer> backprop_params(const Matrix& inputs,
                                          const Matrix& output_grad) const;

  /// Splits into (layers [0, index), layers [index, end)).
  std::pair<Network, Network> split_at(std::size_t layer_index) const;

  bool operator==(const Network& other) const;

 private:
  void check_input(std::size_t cols) const;

  std::vector<DenseLayer> layers_;
};

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

enum class PosteriorObjective {
  constant,            // always 0
  neg_posterior,       // -p(t|x)
  neg_log_posterior,   // -log p(t|x)
};

/// Gradient of an objective of the posterior with respect to the input.
Vector input_gradient(const Network& net, const Vector& x, PosteriorObjective objective,
                      int target);

/// d(objective)/d(logits) for each row, given the row posteriors.
Matrix objective_logit_grad(const Matrix& posteriors, PosteriorObjective objective,
                            int target);

enum class Optimizer { plain_gradient, adaptive_moment };

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adaptive_moment;

  void validate() const;
};

/// Minimizes mean cross-entropy over `data`. Pure function of its arguments.
Network train(const Network& initial, const LabeledDataset& data, const TrainConfig& cfg);

double accuracy(const Network& net, const LabeledDataset& data);

}  // namespace umd
