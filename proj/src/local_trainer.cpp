#include "dapperfl/local_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dapperfl/errors.hpp"
#include "dapperfl/optimizer.hpp"

namespace dapperfl {
namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw InputError("logits must be (batch, classes)");
  if (labels.size() != logits.shape[0]) throw InputError("label count does not match batch size");
  const auto classes = static_cast<int>(logits.shape[1]);
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Softmax probabilities of one row, max-shifted; returns log-sum-exp too.
double softmax_row(const double* row, std::size_t classes, double* probs) {
  const double peak = *std::max_element(row, row + classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    probs[c] = std::exp(row[c] - peak);
    sum += probs[c];
  }
  for (std::size_t c = 0; c < classes; ++c) probs[c] /= sum;
  return peak + std::log(sum);
}

}  // namespace

double dar_regularizer(const Tensor& representation) {
  if (representation.rank() == 0 || representation.shape[0] == 0) return 0.0;
  const std::size_t n = representation.shape[0];
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    double sq = 0.0;
    for (double v : representation.row(b)) sq += v * v;
    total += sq;
  }
  return total / static_cast<double>(n);
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.shape[0], classes = logits.shape[1];
  std::vector<double> probs(classes);
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = logits.data.data() + b * classes;
    const double lse = softmax_row(row, classes, probs.data());
    total += lse - row[labels[b]];
  }
  return total / static_cast<double>(n);
}

LossBreakdown local_objective(const Network& net, const ChannelMask& mask, const Tensor& batch,
                              std::span<const int> labels, double gamma) {
  if (!satisfies_mask(net, mask.params)) throw InputError("network does not satisfy its mask");
  const ForwardResult out = forward(net, batch);
  LossBreakdown loss;
  loss.gamma = gamma;
  loss.ce = cross_entropy(out.logits, labels);
  loss.dar = dar_regularizer(out.representation);
  loss.total = loss.ce + gamma * loss.dar;
  return loss;
}

ObjectiveEval objective_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                                  double gamma, const ParamMask* mask) {
  const ForwardCache cache = forward_cached(net, batch);
  check_labels(cache.logits, labels);
  const std::size_t n = cache.logits.shape[0], classes = cache.logits.shape[1];
  const double inv_n = 1.0 / static_cast<double>(n);

  ObjectiveEval eval;
  eval.loss.gamma = gamma;
  OutputGrads up{Tensor(cache.logits.shape), Tensor()};
  double ce = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = cache.logits.data.data() + b * classes;
    double* g = up.d_logits.data.data() + b * classes;
    const double lse = softmax_row(row, classes, g);
    ce += lse - row[labels[b]];
    g[labels[b]] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) g[c] *= inv_n;
  }
  eval.loss.ce = ce * inv_n;
  eval.loss.dar = dar_regularizer(cache.representation);
  eval.loss.total = eval.loss.ce + gamma * eval.loss.dar;
  if (gamma != 0.0) {
    up.d_representation = cache.representation;
    const double scale = 2.0 * gamma * inv_n;
    for (double& v : up.d_representation.data) v *= scale;
  }
  eval.grads = backward(net, cache, up, mask);
  return eval;
}

Network train_epochs(const Network& start, const DomainDataset& data, const HyperParams& cfg,
                     int epochs, double gamma, const ParamMask* mask, std::uint64_t seed) {
  if (data.empty()) throw InputError("cannot train on an empty dataset");
  Network net = start;
  OptimizerState opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::vector<std::size_t> rows;
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start_row = 0; start_row < order.size(); start_row += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start_row + cfg.batch_size);
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start_row),
                  order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Tensor batch = data.gather(rows);
      const std::vector<int> labels = data.gather_labels(rows);
      const ObjectiveEval eval = objective_gradients(net, batch, labels, gamma, mask);
      sgd_step(net, eval.grads, opt, mask);
    }
  }
  return net;
}

Network train_local(const Network& pruned, const ChannelMask& mask, const DomainDataset& data,
                    const HyperParams& cfg, std::uint64_t seed) {
  if (data.empty()) throw InputError("cannot train on an empty dataset");
  return train_epochs(pruned, data, cfg, cfg.local_epochs - 1, cfg.gamma, &mask.params, seed);
}

double mean_representation_norm(const Network& net, const DomainDataset& data) {
  if (data.empty()) throw InputError("empty dataset");
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return dar_regularizer(forward(net, data.gather(rows)).representation);
}

}  // namespace dapperfl
