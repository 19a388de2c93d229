#include "umd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "umd/attack.hpp"

namespace umd {

namespace {

void apply_activation(Matrix& z, Activation act) {
  if (act == Activation::relu) z = z.cwiseMax(0.0);
}

std::vector<std::size_t> checked_widths(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw InputError("network needs at least an input and output width");
  for (auto w : widths) {
    if (w == 0) throw InputError("network widths must be positive");
  }
  return {widths.begin(), widths.end()};
}

// Forward pass that keeps every pre-activation for backprop.
struct Trace {
  std::vector<Matrix> activations;      // activations[0] = input
  std::vector<Matrix> pre_activations;  // one per layer
};

Trace run_trace(const std::vector<DenseLayer>& layers, const Matrix& inputs) {
  Trace tr;
  tr.activations.reserve(layers.size() + 1);
  tr.pre_activations.reserve(layers.size());
  tr.activations.push_back(inputs);
  for (const auto& layer : layers) {
    Matrix z = tr.activations.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    tr.pre_activations.push_back(z);
    apply_activation(z, layer.activation);
    tr.activations.push_back(std::move(z));
  }
  return tr;
}

void gate(Matrix& grad, const Matrix& pre, Activation act) {
  if (act == Activation::relu) {
    grad = grad.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  }
}

}  // namespace

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InputError("network must have at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0)
      throw InputError("layer " + std::to_string(i) + " has an empty weight matrix");
    if (l.bias.size() != l.weights.rows())
      throw InputError("layer " + std::to_string(i) + " bias length does not match rows");
    if (i > 0 && l.inputs() != layers_[i - 1].outputs())
      throw InputError("layer " + std::to_string(i) + " input width does not chain");
  }
}

Network Network::zeros(std::span<const std::size_t> widths) {
  const auto w = checked_widths(widths);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    DenseLayer l;
    l.weights = Matrix::Zero(static_cast<Eigen::Index>(w[i + 1]), static_cast<Eigen::Index>(w[i]));
    l.bias = Vector::Zero(static_cast<Eigen::Index>(w[i + 1]));
    l.activation = (i + 2 == w.size()) ? Activation::identity : Activation::relu;
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

Network Network::glorot(std::span<const std::size_t> widths, std::uint64_t seed) {
  Network net = zeros(widths);
  std::mt19937_64 rng(seed);
  for (auto& l : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.inputs() + l.outputs()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = dist(rng);
  }
  return net;
}

std::size_t Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
std::size_t Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

void Network::check_input(std::size_t cols) const {
  if (layers_.empty()) throw InputError("network has no layers");
  if (cols != input_dim())
    throw InputError("input has dimension " + std::to_string(cols) + ", network expects " +
                     std::to_string(input_dim()));
}

Matrix Network::outputs(const Matrix& inputs) const {
  check_input(static_cast<std::size_t>(inputs.cols()));
  Matrix a = inputs;
  for (const auto& layer : layers_) {
    Matrix z = a * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    apply_activation(z, layer.activation);
    a = std::move(z);
  }
  return a;
}

Vector Network::outputs(const Vector& x) const {
  Matrix row = x.transpose();
  return outputs(row).row(0).transpose();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(r, c) = std::exp(logits(r, c) - m);
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  return p;
}

Matrix Network::forward(const Matrix& inputs) const { return softmax_rows(outputs(inputs)); }

Vector Network::forward(const Vector& x) const {
  Matrix row = x.transpose();
  return forward(row).row(0).transpose();
}

std::vector<int> Network::predict(const Matrix& inputs) const {
  const Matrix out = outputs(inputs);
  std::vector<int> labels(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::Index best = 0;
    out.row(r).maxCoeff(&best);
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

int Network::predict(const Vector& x) const {
  Matrix row = x.transpose();
  return predict(row).front();
}

Matrix Network::backprop_input(const Matrix& inputs, const Matrix& output_grad) const {
  check_input(static_cast<std::size_t>(inputs.cols()));
  const Trace tr = run_trace(layers_, inputs);
  Matrix g = output_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    gate(g, tr.pre_activations[i], layers_[i].activation);
    g = g * layers_[i].weights;
  }
  return g;
}

std::vector<DenseLayer> Network::backprop_params(const Matrix& inputs,
                                                 const Matrix& output_grad) const {
  check_input(static_cast<std::size_t>(inputs.cols()));
  const Trace tr = run_trace(layers_, inputs);
  std::vector<DenseLayer> grads(layers_.size());
  Matrix g = output_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    gate(g, tr.pre_activations[i], layers_[i].activation);
    grads[i].weights = g.transpose() * tr.activations[i];
    grads[i].bias = g.colwise().sum().transpose();
    grads[i].activation = layers_[i].activation;
    if (i > 0) g = g * layers_[i].weights;
  }
  return grads;
}

std::pair<Network, Network> Network::split_at(std::size_t layer_index) const {
  if (layer_index == 0 || layer_index >= layers_.size())
    throw InputError("split index " + std::to_string(layer_index) + " must lie in (0, " +
                     std::to_string(layers_.size()) + ")");
  std::vector<DenseLayer> prefix(layers_.begin(), layers_.begin() + static_cast<std::ptrdiff_t>(layer_index));
  std::vector<DenseLayer> suffix(layers_.begin() + static_cast<std::ptrdiff_t>(layer_index), layers_.end());
  return {Network(std::move(prefix)), Network(std::move(suffix))};
}

bool Network::operator==(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
        a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias)
      return false;
  }
  return true;
}

Matrix objective_logit_grad(const Matrix& posteriors, PosteriorObjective objective, int target) {
  Matrix g = Matrix::Zero(posteriors.rows(), posteriors.cols());
  if (objective == PosteriorObjective::constant) return g;
  if (target < 0 || target >= posteriors.cols()) throw InputError("objective target out of range");
  const auto t = static_cast<Eigen::Index>(target);
  for (Eigen::Index r = 0; r < posteriors.rows(); ++r) {
    for (Eigen::Index k = 0; k < posteriors.cols(); ++k) {
      const double delta = (k == t) ? 1.0 : 0.0;
      if (objective == PosteriorObjective::neg_posterior) {
        g(r, k) = -posteriors(r, t) * (delta - posteriors(r, k));
      } else {
        g(r, k) = posteriors(r, k) - delta;
      }
    }
  }
  return g;
}

Vector input_gradient(const Network& net, const Vector& x, PosteriorObjective objective,
                      int target) {
  Matrix row = x.transpose();
  const Matrix p = net.forward(row);
  const Matrix g = objective_logit_grad(p, objective, target);
  return net.backprop_input(row, g).row(0).transpose();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (batch_size == 0) throw InputError("batch_size must be at least 1");
}

namespace {

struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::size_t step = 0;
};

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out[i].weights = Matrix::Zero(layers[i].weights.rows(), layers[i].weights.cols());
    out[i].bias = Vector::Zero(layers[i].bias.size());
    out[i].activation = layers[i].activation;
  }
  return out;
}

}  // namespace

Network train(const Network& initial, const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputError("cannot train on an empty dataset");
  if (data.input_dim() != initial.input_dim())
    throw InputError("dataset dimension does not match network input");
  if (data.num_classes() != initial.output_dim())
    throw InputError("dataset class count does not match network output");

  Network net = initial;
  if (cfg.epochs == 0) return net;

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  auto& layers = net.mutable_layers();
  AdamState adam{zeros_like(layers), zeros_like(layers), 0};

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto d = static_cast<Eigen::Index>(data.input_dim());
  const auto K = static_cast<Eigen::Index>(data.num_classes());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto n = static_cast<Eigen::Index>(end - start);
      Matrix batch(n, d);
      Matrix onehot = Matrix::Zero(n, K);
      for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t idx = order[start + static_cast<std::size_t>(r)];
        batch.row(r) = data.inputs().row(static_cast<Eigen::Index>(idx));
        onehot(r, data.labels()[idx]) = 1.0;
      }
      const Matrix p = net.forward(batch);
      const Matrix grad_logits = (p - onehot) / static_cast<double>(n);
      const auto grads = net.backprop_params(batch, grad_logits);

      if (cfg.optimizer == Optimizer::plain_gradient) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
          layers[i].weights -= cfg.learning_rate * grads[i].weights;
          layers[i].bias -= cfg.learning_rate * grads[i].bias;
        }
        continue;
      }
      ++adam.step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
          m = beta1 * m + (1.0 - beta1) * g;
          v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
          param.array() -= cfg.learning_rate * (m.array() / c1) /
                           ((v.array() / c2).sqrt() + eps);
        };
        update(layers[i].weights, adam.m[i].weights, adam.v[i].weights, grads[i].weights);
        update(layers[i].bias, adam.m[i].bias, adam.v[i].bias, grads[i].bias);
      }
    }
  }
  return net;
}

double accuracy(const Network& net, const LabeledDataset& data) {
  if (data.empty()) throw InputError("accuracy of an empty dataset is undefined");
  const auto pred = net.predict(data.inputs());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += (pred[i] == data.labels()[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace umd
