#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_support.hpp"
#include "vmdetect/error.hpp"
#include "vmdetect/network.hpp"

using namespace vmdetect;
using testing_support::fd_gradient;
using testing_support::random_net;
using testing_support::random_vector;

namespace {

Network hand_net() {
  DenseLayer a;
  a.weights.resize(2, 2);
  a.weights << 1, 2, -1, 1;
  a.bias = Vector(2);
  a.bias << 0, 0.5;
  a.activation = Activation::relu;
  DenseLayer b;
  b.weights.resize(2, 2);
  b.weights << 1, -1, 0.5, 2;
  b.bias = Vector(2);
  b.bias << 0.1, 0;
  b.activation = Activation::softmax;
  return Network({a, b});
}

LabeledData separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledData d;
  while (d.inputs.size() < n) {
    Vector x(2);
    x << u(rng), u(rng);
    const double margin = x(0) - x(1);
    if (std::abs(margin) < 0.1) continue;
    d.inputs.push_back(x);
    d.labels.push_back(margin > 0 ? 1 : 0);
  }
  return d;
}

}  // namespace

TEST_CASE("identity layer passes the input through") {
  DenseLayer l;
  l.weights = Matrix::Identity(2, 2);
  l.bias = Vector::Zero(2);
  l.activation = Activation::identity;
  Network net({l});
  net.validate(false);
  Vector x(2);
  x << 1, 2;
  const auto trace = forward_full(net, x);
  REQUIRE(trace.post.size() == 1);
  CHECK(trace.post[0](0) == 1.0);
  CHECK(trace.post[0](1) == 2.0);
}

TEST_CASE("softmax") {
  Vector u(2);
  u << 0, 0;
  CHECK(softmax(u)(0) == doctest::Approx(0.5));
  u << 1000, 1000;
  const Vector big = softmax(u);
  CHECK(big.allFinite());
  CHECK(big(1) == doctest::Approx(0.5));
  u << std::log(1.0), std::log(3.0);
  CHECK(softmax(u)(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(softmax(u)(1) == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Vector v = random_vector(rng, 5, 10.0);
    const Vector s = softmax(v);
    CHECK(std::abs(s.sum() - 1.0) < 1e-12);
    CHECK((s - softmax((v.array() + 37.5).matrix())).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hand-computed two-layer net") {
  const auto net = hand_net();
  net.validate();
  Vector x(2);
  x << 1, 0;
  const auto trace = forward_full(net, x);
  CHECK(trace.post[0](0) == doctest::Approx(1.0));
  CHECK(trace.post[0](1) == 0.0);
  CHECK(trace.pre[1](0) == doctest::Approx(1.1));
  CHECK(trace.pre[1](1) == doctest::Approx(0.5));
  CHECK(trace.output()(0) == doctest::Approx(0.64565631).epsilon(1e-8));
  CHECK(trace.output()(1) == doctest::Approx(0.35434369).epsilon(1e-8));
  CHECK(std::abs(trace.output().sum() - 1.0) < 1e-12);

  const auto again = forward_full(net, x);
  CHECK(again.output() == trace.output());
  CHECK(forward_from(net, 1, trace.post[0]) == trace.output());
}

TEST_CASE("forward rejects wrong input size") {
  Vector x(3);
  x.setZero();
  CHECK_THROWS_AS(forward_full(hand_net(), x), ShapeError);
}

TEST_CASE("input gradient matches finite differences") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto act = t % 2 ? Activation::tanh : Activation::relu;
    const auto net = random_net(rng, {4, 6, 5, 3}, act);
    const Vector x = random_vector(rng, 4);
    const Eigen::Index label = t % 3;
    const Vector g = grad_input(net, x, label);
    const Vector fd = fd_gradient(net, x, label);
    const double rel = (g - fd).cwiseAbs().maxCoeff() / std::max(fd.cwiseAbs().maxCoeff(), 1e-8);
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("zero first layer gives a zero input gradient") {
  std::mt19937_64 rng(5);
  auto net = random_net(rng, {3, 4, 2}, Activation::tanh);
  auto layers = net.layers();
  layers[0].weights.setZero();
  const Network zeroed(layers);
  const Vector g = grad_input(zeroed, random_vector(rng, 3), 1);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax-linear gradient is W^T (y - onehot)") {
  std::mt19937_64 rng(8);
  const auto net = random_net(rng, {5, 3}, Activation::identity);
  const Vector x = random_vector(rng, 5);
  const Vector y = forward_full(net, x).output();
  Vector onehot = Vector::Zero(3);
  onehot(2) = 1.0;
  const Vector expected = net.layers()[0].weights.transpose() * (y - onehot);
  CHECK((grad_input(net, x, 2) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(grad_input(net, x, 3), ShapeError);
}

TEST_CASE("training") {
  const auto data = separable(200, 2);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 4;
  const auto net = train_sgd(data, {2, 8, 2}, cfg);
  CHECK(accuracy(net, data) >= 0.95);

  const auto twin = train_sgd(data, {2, 8, 2}, cfg);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    CHECK(net.layers()[l].weights == twin.layers()[l].weights);
    CHECK(net.layers()[l].bias == twin.layers()[l].bias);
  }

  cfg.epochs = 0;
  CHECK_THROWS_AS(train_sgd(data, {2, 8, 2}, cfg), ConfigError);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_sgd(LabeledData{}, {2, 8, 2}, cfg), DataError);
  auto bad = data;
  bad.labels[0] = 5;
  CHECK_THROWS_AS(train_sgd(bad, {2, 8, 2}, cfg), DataError);
}

TEST_CASE("network JSON round trip") {
  std::mt19937_64 rng(21);
  const auto net = random_net(rng, {3, 4, 4, 2}, Activation::tanh);
  const auto back = network_from_json(network_to_json(net));
  REQUIRE(back.depth() == net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    CHECK(back.layers()[l].weights == net.layers()[l].weights);
    CHECK(back.layers()[l].bias == net.layers()[l].bias);
    CHECK(back.layers()[l].activation == net.layers()[l].activation);
  }

  const auto path = std::filesystem::temp_directory_path() / "vmdetect_test_net.json";
  save_network(net, path);
  CHECK(load_network(path).layers()[1].weights == net.layers()[1].weights);
  std::filesystem::remove(path);

  auto text = network_to_json(net);
  const auto pos = text.find("\"version\"");
  REQUIRE(pos != std::string::npos);
  text.replace(text.find('1', pos), 1, "9");
  CHECK_THROWS_AS(network_from_json(text), DataError);
  CHECK_THROWS_AS(network_from_json("{not json"), DataError);
}

TEST_CASE("validate enforces the softmax head") {
  DenseLayer l;
  l.weights = Matrix::Identity(2, 2);
  l.bias = Vector::Zero(2);
  l.activation = Activation::relu;
  CHECK_THROWS_AS(Network({l}).validate(), ShapeError);
  l.bias = Vector::Zero(3);
  CHECK_THROWS_AS(Network({l}).validate(false), ShapeError);
}
