#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vmdetect {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { relu, tanh, softmax, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  Eigen::Index inputs() const { return weights.cols(); }
  Eigen::Index outputs() const { return weights.rows(); }
};

// The full (deterministic) network. Immutable once built; validate() enforces
// matching dimensions, finite weights, and a softmax on the final layer only.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  Eigen::Index input_dim() const;
  Eigen::Index num_classes() const;

  // Set to false to skip the final-softmax rule (used for intermediate
  // sub-networks and tests of bare affine stacks).
  void validate(bool require_softmax_head = true) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct ActivationTrace {
  std::vector<Vector> pre;   // per layer, W x + b
  std::vector<Vector> post;  // per layer, activation(pre)

  const Vector& output() const { return post.back(); }
};

template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& u) {
  const double shift = u.maxCoeff();
  Vector e = (u.derived().template cast<double>().array() - shift).exp().matrix();
  return e / e.sum();
}

Vector apply_activation(Activation a, const Vector& pre);

ActivationTrace forward_full(const Network& net, const Vector& x);

// Runs layers [first, depth) starting from the post-activation `h` of layer
// first-1 (or from the raw input when first == 0).
Vector forward_from(const Network& net, std::size_t first, const Vector& h);

// Cross-entropy (natural log) of the network output against `label`.
double cross_entropy(const Network& net, const Vector& x, Eigen::Index label);

// d CE(net(x), label) / dx by backpropagation. ReLU subgradient at 0 is 0.
Vector grad_input(const Network& net, const Vector& x, Eigen::Index label);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  Activation hidden_activation = Activation::relu;
};

struct LabeledData {
  std::vector<Vector> inputs;
  std::vector<Eigen::Index> labels;
};

// Minibatch SGD on mean cross-entropy. `arch` lists layer widths including
// input and class count, e.g. {2, 32, 32, 2}. Deterministic for a given seed.
Network train_sgd(const LabeledData& data, const std::vector<Eigen::Index>& arch,
                  const TrainConfig& cfg);

Eigen::Index predict(const Network& net, const Vector& x);
double accuracy(const Network& net, const LabeledData& data);

// Versioned JSON text: {"format": "vmdetect-network", "version": 1, "layers":
// [{"inputs", "outputs", "activation", "weights" (row-major), "bias"}]}.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

}  // namespace vmdetect
