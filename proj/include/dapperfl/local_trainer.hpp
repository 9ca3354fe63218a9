#pragma once

#include <cstdint>
#include <span>

#include "dapperfl/dataset.hpp"
#include "dapperfl/hyperparams.hpp"
#include "dapperfl/masking.hpp"
#include "dapperfl/network.hpp"

namespace dapperfl {

struct LossBreakdown {
  double ce = 0.0;
  double dar = 0.0;
  double total = 0.0;
  double gamma = 0.0;
};

/// Batch mean of the squared l2 norm of each sample's representation.
double dar_regularizer(const Tensor& representation);

/// Batch mean of -log softmax(logits)[label] (max-shifted).
/// Throws InputError on a label outside [0, classes).
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// One forward pass: ce + gamma * dar.
LossBreakdown local_objective(const Network& net, const ChannelMask& mask, const Tensor& batch,
                              std::span<const int> labels, double gamma);

struct ObjectiveEval {
  LossBreakdown loss;
  Params grads;
};

/// Loss and parameter gradients of ce + gamma * dar for one batch.
ObjectiveEval objective_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                                  double gamma, const ParamMask* mask = nullptr);

/// Runs `epochs` passes of shuffled mini-batch SGD on ce + gamma * dar from a
/// fresh optimizer. Shuffling is seeded by `seed`; the last batch of an epoch
/// may be short.
Network train_epochs(const Network& start, const DomainDataset& data, const HyperParams& cfg,
                     int epochs, double gamma, const ParamMask* mask, std::uint64_t seed);

/// Epochs 2..E of a round on the pruned model, gradients masked.
Network train_local(const Network& pruned, const ChannelMask& mask, const DomainDataset& data,
                    const HyperParams& cfg, std::uint64_t seed);

/// Mean squared representation norm over a dataset.
double mean_representation_norm(const Network& net, const DomainDataset& data);

}  // namespace dapperfl
