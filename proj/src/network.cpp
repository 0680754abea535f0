#include "vmdetect/network.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "vmdetect/error.hpp"

namespace vmdetect {

namespace {

constexpr int kNetworkFormatVersion = 1;

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softmax") return Activation::softmax;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

Eigen::Index Network::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().inputs();
}

Eigen::Index Network::num_classes() const {
  return layers_.empty() ? 0 : layers_.back().outputs();
}

void Network::validate(bool require_softmax_head) const {
  if (layers_.empty()) throw ShapeError("network has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.outputs())
      throw ShapeError("layer " + std::to_string(l) + ": bias size " +
                       std::to_string(layer.bias.size()) + " != rows " +
                       std::to_string(layer.outputs()));
    if (l > 0 && layer.inputs() != layers_[l - 1].outputs())
      throw ShapeError("layer " + std::to_string(l) + ": weights " +
                       dims(layer.outputs(), layer.inputs()) +
                       " do not accept previous output of size " +
                       std::to_string(layers_[l - 1].outputs()));
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
    const bool last = l + 1 == layers_.size();
    if (require_softmax_head) {
      if (last && layer.activation != Activation::softmax)
        throw ShapeError("final layer must use softmax");
      if (!last && layer.activation == Activation::softmax)
        throw ShapeError("softmax is only allowed on the final layer");
    }
  }
}

Vector apply_activation(Activation a, const Vector& pre) {
  switch (a) {
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::softmax: return softmax(pre);
    case Activation::identity: return pre;
  }
  return pre;
}

ActivationTrace forward_full(const Network& net, const Vector& x) {
  if (net.depth() == 0) throw ShapeError("network has no layers");
  if (x.size() != net.input_dim())
    throw ShapeError("input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  ActivationTrace trace;
  trace.pre.reserve(net.depth());
  trace.post.reserve(net.depth());
  const Vector* h = &x;
  for (const auto& layer : net.layers()) {
    trace.pre.push_back(layer.weights * *h + layer.bias);
    trace.post.push_back(apply_activation(layer.activation, trace.pre.back()));
    h = &trace.post.back();
  }
  return trace;
}

Vector forward_from(const Network& net, std::size_t first, const Vector& h) {
  Vector cur = h;
  for (std::size_t l = first; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    if (cur.size() != layer.inputs())
      throw ShapeError("layer " + std::to_string(l) + " expects " +
                       std::to_string(layer.inputs()) + " inputs, got " +
                       std::to_string(cur.size()));
    cur = apply_activation(layer.activation, layer.weights * cur + layer.bias);
  }
  return cur;
}

double cross_entropy(const Network& net, const Vector& x, Eigen::Index label) {
  if (label < 0 || label >= net.num_classes())
    throw ShapeError("label " + std::to_string(label) + " out of range");
  const auto trace = forward_full(net, x);
  // Recompute log-softmax from the logits for accuracy near saturation.
  const Vector& z = trace.pre.back();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return lse - z(label);
}

namespace {

// Backpropagates dLoss/d(pre of last layer) down to the input, accumulating
// parameter gradients when grads != nullptr.
Vector backprop(const Network& net, const Vector& x, const ActivationTrace& trace,
                Vector delta, std::vector<DenseLayer>* grads) {
  for (std::size_t l = net.depth(); l-- > 0;) {
    const auto& layer = net.layers()[l];
    const Vector& input = l == 0 ? x : trace.post[l - 1];
    if (grads) {
      (*grads)[l].weights.noalias() += delta * input.transpose();
      (*grads)[l].bias += delta;
    }
    Vector upstream = layer.weights.transpose() * delta;
    if (l == 0) return upstream;
    const auto& below = net.layers()[l - 1];
    switch (below.activation) {
      case Activation::relu:
        upstream = (trace.pre[l - 1].array() > 0.0).select(upstream, 0.0);
        break;
      case Activation::tanh:
        upstream.array() *= 1.0 - trace.post[l - 1].array().square();
        break;
      case Activation::identity:
        break;
      case Activation::softmax:
        throw ShapeError("softmax is only supported on the final layer");
    }
    delta = std::move(upstream);
  }
  return delta;
}

Vector output_delta(const Network& net, const ActivationTrace& trace, Eigen::Index label) {
  const auto& head = net.layers().back();
  Vector delta = trace.output();
  switch (head.activation) {
    case Activation::softmax:
      delta(label) -= 1.0;
      return delta;
    default:
      throw ShapeError("cross-entropy gradient requires a softmax head");
  }
}

}  // namespace

Vector grad_input(const Network& net, const Vector& x, Eigen::Index label) {
  if (label < 0 || label >= net.num_classes())
    throw ShapeError("label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(net.num_classes()) + ")");
  const auto trace = forward_full(net, x);
  return backprop(net, x, trace, output_delta(net, trace, label), nullptr);
}

Eigen::Index predict(const Network& net, const Vector& x) {
  Eigen::Index k = 0;
  forward_full(net, x).output().maxCoeff(&k);
  return k;
}

double accuracy(const Network& net, const LabeledData& data) {
  if (data.inputs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i)
    hits += predict(net, data.inputs[i]) == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.inputs.size());
}

Network train_sgd(const LabeledData& data, const std::vector<Eigen::Index>& arch,
                  const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch-size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning-rate must be > 0");
  if (arch.size() < 2) throw ConfigError("architecture needs at least input and output widths");
  if (data.inputs.empty()) throw DataError("training set is empty");
  if (data.inputs.size() != data.labels.size())
    throw DataError("inputs and labels differ in length");
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    if (data.inputs[i].size() != arch.front())
      throw ShapeError("training input " + std::to_string(i) + " has wrong dimension");
    if (data.labels[i] < 0 || data.labels[i] >= arch.back())
      throw DataError("training label " + std::to_string(i) + " out of range");
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    const Eigen::Index fan_in = arch[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    DenseLayer layer;
    layer.weights = Matrix::NullaryExpr(arch[l + 1], fan_in, [&] { return init(rng); });
    layer.bias = Vector::Zero(arch[l + 1]);
    layer.activation = l + 2 == arch.size() ? Activation::softmax : cfg.hidden_activation;
    layers.push_back(std::move(layer));
  }
  Network net(std::move(layers));
  net.validate();

  std::vector<std::size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<DenseLayer> grads = net.layers();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& g : grads) {
        g.weights.setZero();
        g.bias.setZero();
      }
      double loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& x = data.inputs[order[b]];
        const auto label = data.labels[order[b]];
        const auto trace = forward_full(net, x);
        loss -= std::log(std::max(trace.output()(label), 1e-300));
        backprop(net, x, trace, output_delta(net, trace, label), &grads);
      }
      if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch));
      const double scale = cfg.learning_rate / static_cast<double>(stop - start);
      std::vector<DenseLayer> updated = net.layers();
      for (std::size_t l = 0; l < updated.size(); ++l) {
        updated[l].weights -= scale * grads[l].weights;
        updated[l].bias -= scale * grads[l].bias;
      }
      net = Network(std::move(updated));
    }
  }
  for (const auto& layer : net.layers())
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw NumericError("training diverged: non-finite weights");
  return net;
}

std::string network_to_json(const Network& net) {
  nlohmann::json doc;
  doc["format"] = "vmdetect-network";
  doc["version"] = kNetworkFormatVersion;
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::json j;
    j["inputs"] = layer.inputs();
    j["outputs"] = layer.outputs();
    j["activation"] = to_string(layer.activation);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.outputs(); ++r)
      for (Eigen::Index c = 0; c < layer.inputs(); ++c) w.push_back(layer.weights(r, c));
    j["weights"] = std::move(w);
    j["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    doc["layers"].push_back(std::move(j));
  }
  return doc.dump(1);
}

Network network_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("network file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "vmdetect-network")
      throw DataError("not a vmdetect network file");
    if (doc.at("version").get<int>() != kNetworkFormatVersion)
      throw DataError("unsupported network file version " + doc.at("version").dump());
    std::vector<DenseLayer> layers;
    for (const auto& j : doc.at("layers")) {
      const auto in = j.at("inputs").get<Eigen::Index>();
      const auto out = j.at("outputs").get<Eigen::Index>();
      const auto w = j.at("weights").get<std::vector<double>>();
      const auto b = j.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out ||
          static_cast<Eigen::Index>(b.size()) != out)
        throw ShapeError("layer arrays do not match declared sizes");
      DenseLayer layer;
      layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                     Eigen::RowMajor>>(w.data(), out, in);
      layer.bias = Eigen::Map<const Vector>(b.data(), out);
      layer.activation = activation_from_string(j.at("activation").get<std::string>());
      layers.push_back(std::move(layer));
    }
    Network net(std::move(layers));
    net.validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed network file: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << network_to_json(net) << '\n';
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return network_from_json(buf.str());
}

}  // namespace vmdetect
