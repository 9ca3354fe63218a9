#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dapperfl/errors.hpp"
#include "dapperfl/local_trainer.hpp"
#include "dapperfl/masking.hpp"
#include "dapperfl/network.hpp"
#include "dapperfl/optimizer.hpp"
#include "oracles.hpp"

using namespace dapperfl;

namespace {

std::vector<LayerSpec> small_conv_specs() {
  return {{LayerKind::conv2d, 2, 3, Activation::relu, true, 3},
          {LayerKind::conv2d, 3, 2, Activation::relu, true, 1},
          {LayerKind::dense, 2, 4, Activation::relu, true, 1},
          {LayerKind::dense, 4, 3, Activation::none, false, 1}};
}

Network scalar_net(double w) {
  const std::vector<LayerSpec> specs{{LayerKind::dense, 1, 1, Activation::none, false, 1}};
  Network net = init_network(specs, 1);
  net.params[0].weight.data = {w};
  net.params[0].bias.data = {0.0};
  return net;
}

Params scalar_grad(double g) {
  Params p{{Tensor({1, 1}, {g}), Tensor({1}, {0.0})}};
  return p;
}

}  // namespace

TEST_CASE("init_network is deterministic with zero biases") {
  const std::size_t hidden[] = {8};
  const auto specs = dense_chain(5, hidden, 3);
  const Network a = init_network(specs, 42);
  const Network b = init_network(specs, 42);
  const Network c = init_network(specs, 43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (const auto& p : a.params) {
    for (double v : p.bias.data) CHECK(v == 0.0);
  }
  // He-uniform bound
  for (double v : a.params[0].weight.data) CHECK(std::abs(v) <= std::sqrt(6.0 / 5.0));
  CHECK(a.encoder_len == 1);
}

TEST_CASE("init_network golden checksum for a 2-layer dense net, seed 7") {
  const std::size_t hidden[] = {3};
  const Network net = init_network(dense_chain(4, hidden, 2), 7);
  double sum = 0.0, weighted = 0.0;
  const auto flat = oracle::flatten(net);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    sum += flat[i];
    weighted += static_cast<double>(i + 1) * flat[i];
  }
  // Regression pin for libstdc++'s mt19937_64 + uniform_real_distribution.
  CHECK(sum == doctest::Approx(4.7256480916417773).epsilon(1e-12));
  CHECK(weighted == doctest::Approx(66.045168956777445).epsilon(1e-12));
}

TEST_CASE("init_network rejects broken chains") {
  std::vector<LayerSpec> specs{{LayerKind::dense, 4, 3, Activation::relu, true, 1},
                               {LayerKind::dense, 5, 2, Activation::none, false, 1}};
  CHECK_THROWS_AS(init_network(specs, 1), ConfigError);
  specs[1].in_channels = 3;
  specs[1].prunable = true;
  CHECK_THROWS_AS(init_network(specs, 1), ConfigError);
  specs[1].prunable = false;
  specs[1].activation = Activation::relu;
  CHECK_THROWS_AS(init_network(specs, 1), ConfigError);
  std::vector<LayerSpec> bad_conv{{LayerKind::conv2d, 1, 2, Activation::relu, true, 2},
                                  {LayerKind::dense, 2, 2, Activation::none, false, 1}};
  CHECK_THROWS_AS(init_network(bad_conv, 1, {4, 4}), ConfigError);
}

TEST_CASE("forward with zero weights gives zero logits") {
  const std::size_t hidden[] = {6};
  Network net = init_network(dense_chain(4, hidden, 3), 3);
  for (auto& p : net.params) std::fill(p.weight.data.begin(), p.weight.data.end(), 0.0);
  std::mt19937_64 rng(1);
  const auto out = forward(net, oracle::random_tensor({5, 4}, rng));
  for (double v : out.logits.data) CHECK(v == 0.0);
  CHECK(cross_entropy(out.logits, std::vector<int>{0, 1, 2, 0, 1}) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("identity single-layer net returns its input") {
  const std::vector<LayerSpec> specs{{LayerKind::dense, 3, 3, Activation::none, false, 1}};
  Network net = init_network(specs, 1);
  net.params[0].weight.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const Tensor x({2, 3}, {0.5, -1.0, 2.0, 3.0, 0.0, -4.0});
  const auto out = forward(net, x);
  CHECK(out.representation == x);
  CHECK(out.logits.data == x.data);
}

TEST_CASE("2-2-2 dense net matches a hand-computed matrix product") {
  const std::size_t hidden[] = {2};
  Network net = init_network(dense_chain(2, hidden, 2), 1);
  net.params[0].weight.data = {1.0, -2.0, 0.5, 0.25};
  net.params[0].bias.data = {0.1, -0.2};
  net.params[1].weight.data = {2.0, 1.0, -1.0, 3.0};
  net.params[1].bias.data = {0.0, 0.5};
  const Tensor x({1, 2}, {3.0, 1.0});
  // hidden pre = [3 - 2 + 0.1, 1.5 + 0.25 - 0.2] = [1.1, 1.55], both positive
  // logits = [2*1.1 + 1.55, -1.1 + 3*1.55 + 0.5] = [3.75, 4.05]
  const auto out = forward(net, x);
  CHECK(out.representation.data[0] == doctest::Approx(1.1));
  CHECK(out.representation.data[1] == doctest::Approx(1.55));
  CHECK(out.logits.data[0] == doctest::Approx(3.75));
  CHECK(out.logits.data[1] == doctest::Approx(4.05));
}

TEST_CASE("forward rejects mismatched batches") {
  const std::size_t hidden[] = {2};
  const Network net = init_network(dense_chain(3, hidden, 2), 1);
  CHECK_THROWS_AS(forward(net, Tensor({2, 4})), InputError);
  const Network conv = init_network(small_conv_specs(), 1, {4, 4});
  CHECK_THROWS_AS(forward(conv, Tensor({2, 2, 4, 5})), InputError);
  CHECK_NOTHROW(forward(conv, Tensor({2, 2, 4, 4})));
}

TEST_CASE("constant objective has zero gradient") {
  const Network net = init_network(small_conv_specs(), 5, {4, 4});
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({3, 2, 4, 4}, rng);
  const ForwardCache cache = forward_cached(net, x);
  const Params g = backward(net, cache, {Tensor(cache.logits.shape), Tensor()});
  for (const auto& p : g) {
    for (double v : p.weight.data) CHECK(v == 0.0);
    for (double v : p.bias.data) CHECK(v == 0.0);
  }
}

TEST_CASE("analytic gradients match central differences for dense and conv nets") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const std::size_t hidden[] = {5, 4};
    Network dense = init_network(dense_chain(3, hidden, 3), seed);
    oracle::randomize(dense, rng);
    const Tensor xd = oracle::random_tensor({4, 3}, rng);
    const auto yd = oracle::random_labels(4, 3, rng);
    for (double gamma : {0.0, 0.01, 0.5}) {
      const auto eval = objective_gradients(dense, xd, yd, gamma);
      CHECK(oracle::max_relative_error(eval.grads, oracle::numeric_gradient(dense, xd, yd, gamma)) < 1e-4);
    }

    Network conv = init_network(small_conv_specs(), seed, {4, 4});
    oracle::randomize(conv, rng, 0.8);
    const Tensor xc = oracle::random_tensor({2, 2, 4, 4}, rng);
    const auto yc = oracle::random_labels(2, 3, rng);
    const auto eval = objective_gradients(conv, xc, yc, 0.05);
    CHECK(oracle::max_relative_error(eval.grads, oracle::numeric_gradient(conv, xc, yc, 0.05)) < 1e-4);
  }
}

TEST_CASE("masked gradients are exactly zero") {
  std::mt19937_64 rng(11);
  Network net = init_network(small_conv_specs(), 11, {4, 4});
  oracle::randomize(net, rng);
  const ChannelMask mask = build_mask(net, channel_l1_scores(net), 0.4);
  const Tensor x = oracle::random_tensor({3, 2, 4, 4}, rng);
  const auto y = oracle::random_labels(3, 3, rng);
  const auto eval = objective_gradients(net, x, y, 0.1, &mask.params);
  for (std::size_t k = 0; k < net.params.size(); ++k) {
    for (std::size_t i = 0; i < mask.params[k].weight.size(); ++i) {
      if (!mask.params[k].weight[i]) CHECK(eval.grads[k].weight.data[i] == 0.0);
    }
    for (std::size_t i = 0; i < mask.params[k].bias.size(); ++i) {
      if (!mask.params[k].bias[i]) CHECK(eval.grads[k].bias.data[i] == 0.0);
    }
  }
}

TEST_CASE("sgd_step arithmetic") {
  SUBCASE("plain step") {
    Network net = scalar_net(1.0);
    OptimizerState opt(0.1, 0.0, 0.0);
    sgd_step(net, scalar_grad(2.0), opt);
    CHECK(net.params[0].weight.data[0] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("momentum recurrence") {
    Network net = scalar_net(0.0);
    OptimizerState opt(0.1, 0.9, 0.0);
    sgd_step(net, scalar_grad(1.0), opt);
    CHECK(net.params[0].weight.data[0] == doctest::Approx(-0.1).epsilon(1e-15));
    sgd_step(net, scalar_grad(1.0), opt);
    CHECK(opt.velocity[0].weight.data[0] == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(net.params[0].weight.data[0] == doctest::Approx(-0.29).epsilon(1e-15));
  }
  SUBCASE("weight decay adds lambda * w") {
    Network net = scalar_net(2.0);
    OptimizerState opt(0.5, 0.0, 0.1);
    sgd_step(net, scalar_grad(0.0), opt);
    CHECK(net.params[0].weight.data[0] == doctest::Approx(2.0 - 0.5 * 0.2));
  }
  SUBCASE("non-finite gradient aborts the step") {
    Network net = scalar_net(1.0);
    OptimizerState opt(0.1, 0.9, 0.0);
    CHECK_THROWS_AS(sgd_step(net, scalar_grad(std::numeric_limits<double>::quiet_NaN()), opt), NumericError);
    CHECK(net.params[0].weight.data[0] == 1.0);
    CHECK(opt.velocity.empty());
  }
  SUBCASE("masked position stays zero") {
    Network net = scalar_net(0.0);
    ParamMask mask{{{0}, {0}}};
    OptimizerState opt(0.1, 0.9, 0.1);
    for (int i = 0; i < 5; ++i) sgd_step(net, scalar_grad(3.0), opt, &mask);
    CHECK(net.params[0].weight.data[0] == 0.0);
    CHECK(opt.velocity[0].weight.data[0] == 0.0);
  }
}

TEST_CASE("mask preservation and shape closure over many steps") {
  std::mt19937_64 rng(21);
  const std::size_t hidden[] = {8, 6};
  Network net = init_network(dense_chain(4, hidden, 3), 21);
  const ChannelMask mask = build_mask(net, channel_l1_scores(net), 0.5);
  net = apply_mask(net, mask);
  const auto shapes_before = net.params;
  OptimizerState opt(0.05, 0.9, 1e-3);
  for (int step = 0; step < 50; ++step) {
    const Tensor x = oracle::random_tensor({6, 4}, rng);
    const auto y = oracle::random_labels(6, 3, rng);
    // deliberately unmasked gradients: the optimizer must still hold the mask
    const auto eval = objective_gradients(net, x, y, 0.01);
    sgd_step(net, eval.grads, opt, &mask.params);
  }
  CHECK(satisfies_mask(net, mask.params));
  for (std::size_t k = 0; k < net.params.size(); ++k) {
    CHECK(net.params[k].weight.shape == shapes_before[k].weight.shape);
    CHECK(net.params[k].bias.shape == shapes_before[k].bias.shape);
  }
}

TEST_CASE("training is bit-deterministic") {
  std::mt19937_64 rng(4);
  DomainDataset data;
  data.features = oracle::random_tensor({40, 5}, rng);
  data.labels = oracle::random_labels(40, 3, rng);
  data.source_index.resize(40);
  std::iota(data.source_index.begin(), data.source_index.end(), 0);
  const std::size_t hidden[] = {7};
  const Network start = init_network(dense_chain(5, hidden, 3), 4);
  HyperParams hp;
  hp.batch_size = 8;
  const Network a = train_epochs(start, data, hp, 3, 0.01, nullptr, 99);
  const Network b = train_epochs(start, data, hp, 3, 0.01, nullptr, 99);
  CHECK(a == b);
  CHECK_FALSE(a == start);
}

TEST_CASE("evaluate") {
  SUBCASE("perfect classifier") {
    const std::vector<LayerSpec> specs{{LayerKind::dense, 3, 3, Activation::none, false, 1}};
    Network net = init_network(specs, 1);
    net.params[0].weight.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    DomainDataset data;
    data.labels = {2, 0, 1, 1};
    data.features = Tensor({4, 3}, {0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0});
    data.source_index = {0, 1, 2, 3};
    CHECK(evaluate(net, data) == 1.0);
  }
  SUBCASE("zero net breaks ties toward class 0") {
    const std::size_t hidden[] = {4};
    Network net = init_network(dense_chain(2, hidden, 2), 1);
    for (auto& p : net.params) std::fill(p.weight.data.begin(), p.weight.data.end(), 0.0);
    std::mt19937_64 rng(3);
    DomainDataset data;
    data.features = oracle::random_tensor({10, 2}, rng);
    data.labels = {0, 1, 0, 1, 1, 0, 1, 1, 0, 1};
    data.source_index.resize(10);
    CHECK(evaluate(net, data) == doctest::Approx(0.4));
  }
  SUBCASE("agrees with a per-sample loop") {
    std::mt19937_64 rng(8);
    const std::size_t hidden[] = {6};
    Network net = init_network(dense_chain(4, hidden, 3), 8);
    oracle::randomize(net, rng);
    DomainDataset data;
    data.features = oracle::random_tensor({20, 4}, rng);
    data.labels = oracle::random_labels(20, 3, rng);
    data.source_index.resize(20);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      const Tensor one({1, 4}, std::vector<double>(data.features.row(i).begin(), data.features.row(i).end()));
      const auto logits = forward(net, one).logits.data;
      const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == data.labels[i]) ++correct;
    }
    CHECK(evaluate(net, data) == static_cast<double>(correct) / 20.0);
  }
  SUBCASE("empty dataset") {
    const std::size_t hidden[] = {2};
    const Network net = init_network(dense_chain(2, hidden, 2), 1);
    CHECK_THROWS_AS(evaluate(net, DomainDataset{}), InputError);
  }
}
