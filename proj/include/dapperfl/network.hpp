#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dapperfl/dataset.hpp"
#include "dapperfl/tensor.hpp"

namespace dapperfl {

enum class LayerKind { dense, conv2d };
enum class Activation { relu, none };

/// One layer of the chain. Conv layers are stride-1 with same padding, so
/// every conv layer sees the network's input height and width; a dense layer
/// following a conv layer reads the conv output through global average pooling.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Activation activation = Activation::relu;
  bool prunable = true;
  std::size_t kernel = 1;  // conv only, odd

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Spatial size of the input. Dense-only networks use 1x1.
struct InputGeometry {
  std::size_t height = 1;
  std::size_t width = 1;

  friend bool operator==(const InputGeometry&, const InputGeometry&) = default;
};

struct LayerParams {
  Tensor weight;  // dense: (out, in); conv: (out, in, k, k)
  Tensor bias;    // (out)

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Per-layer parameter tensors. Also the gradient type.
using Params = std::vector<LayerParams>;

/// Binary keep-bits mirroring a Params layout (1 = retained).
struct LayerMask {
  std::vector<std::uint8_t> weight;
  std::vector<std::uint8_t> bias;

  friend bool operator==(const LayerMask&, const LayerMask&) = default;
};
using ParamMask = std::vector<LayerMask>;

/// A chain of layers; all layers but the last form the encoder, the last
/// dense layer is the predictor.
struct Network {
  std::vector<LayerSpec> layers;
  Params params;
  std::size_t encoder_len = 0;
  InputGeometry input;

  [[nodiscard]] std::size_t num_classes() const { return layers.back().out_channels; }
  [[nodiscard]] std::size_t input_size() const;
  [[nodiscard]] std::size_t parameter_count() const;

  friend bool operator==(const Network&, const Network&) = default;
};

/// Throws ConfigError when the specs do not form a valid chain.
void validate_specs(std::span<const LayerSpec> specs, const InputGeometry& input);

/// Throws InputError unless both networks have identical layer structure.
void require_same_structure(const Network& a, const Network& b, const char* what);
[[nodiscard]] bool same_structure(const Network& a, const Network& b);

/// He-uniform weights, zero biases, deterministic in `seed`.
Network init_network(std::span<const LayerSpec> specs, std::uint64_t seed,
                     InputGeometry input = {});

/// Convenience: dense chain in -> hidden... -> classes with ReLU encoder layers.
std::vector<LayerSpec> dense_chain(std::size_t inputs, std::span<const std::size_t> hidden,
                                   std::size_t classes);

/// Params with the same shapes as `net` and every entry zero.
Params zeros_like(const Params& params);
ParamMask full_mask(const Network& net);

struct ForwardResult {
  Tensor representation;  // (batch, encoder output width)
  Tensor logits;          // (batch, classes)
};

/// Intermediate values retained for backpropagation.
struct ForwardCache {
  std::vector<Tensor> inputs;   // what each layer consumed
  std::vector<Tensor> pre;      // pre-activation outputs
  std::vector<Tensor> outputs;  // post-activation outputs
  Tensor representation;
  Tensor logits;
};

ForwardResult forward(const Network& net, const Tensor& batch);
ForwardCache forward_cached(const Network& net, const Tensor& batch);

/// Upstream gradients of a scalar objective with respect to the two network
/// outputs. An empty `d_representation` means the objective does not read it.
struct OutputGrads {
  Tensor d_logits;
  Tensor d_representation;
};

/// Parameter gradients for the objective described by `upstream`. When `mask`
/// is given, gradients at masked positions are exactly zero.
Params backward(const Network& net, const ForwardCache& cache, const OutputGrads& upstream,
                const ParamMask* mask = nullptr);

/// Index of the largest logit per row; ties go to the lowest index.
std::vector<int> predict(const Network& net, const Tensor& batch);

/// Top-1 accuracy over the whole dataset.
double evaluate(const Network& net, const DomainDataset& data);

}  // namespace dapperfl
