#include "dapperfl/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dapperfl/errors.hpp"

namespace dapperfl {
namespace {

std::vector<std::size_t> weight_shape(const LayerSpec& s) {
  if (s.kind == LayerKind::dense) return {s.out_channels, s.in_channels};
  return {s.out_channels, s.in_channels, s.kernel, s.kernel};
}

double activate(Activation a, double v) {
  return a == Activation::relu ? (v > 0.0 ? v : 0.0) : v;
}

// Flattens the batch for dense-first networks and checks the trailing shape.
Tensor prepare_input(const Network& net, const Tensor& batch) {
  const LayerSpec& first = net.layers.front();
  if (batch.rank() < 2 || batch.shape[0] == 0) {
    throw InputError("batch must have a nonzero leading dimension, got " +
                     shape_string(batch.shape));
  }
  const std::size_t n = batch.shape[0];
  if (first.kind == LayerKind::dense) {
    if (batch.row_size() != first.in_channels) {
      throw InputError("batch " + shape_string(batch.shape) + " does not match input width " +
                       std::to_string(first.in_channels));
    }
    return Tensor({n, first.in_channels}, batch.data);
  }
  const std::vector<std::size_t> want{n, first.in_channels, net.input.height, net.input.width};
  if (batch.shape != want) {
    throw InputError("batch " + shape_string(batch.shape) + " does not match expected " +
                     shape_string(want));
  }
  return batch;
}

Tensor dense_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
  const std::size_t n = x.shape[0];
  Tensor out({n, s.out_channels});
  for (std::size_t b = 0; b < n; ++b) {
    const double* xi = x.data.data() + b * s.in_channels;
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const double* w = p.weight.data.data() + o * s.in_channels;
      double acc = p.bias.data[o];
      for (std::size_t i = 0; i < s.in_channels; ++i) acc += w[i] * xi[i];
      out.data[b * s.out_channels + o] = acc;
    }
  }
  return out;
}

Tensor conv_forward(const LayerSpec& s, const LayerParams& p, const Tensor& x) {
  const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
  const std::size_t k = s.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({n, s.out_channels, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      double* dst = out.data.data() + (b * s.out_channels + o) * h * w;
      std::fill(dst, dst + h * w, p.bias.data[o]);
      for (std::size_t c = 0; c < s.in_channels; ++c) {
        const double* src = x.data.data() + (b * s.in_channels + c) * h * w;
        const double* ker = p.weight.data.data() + (o * s.in_channels + c) * k * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = ker[ky * k + kx];
            const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
            for (std::size_t y = 0; y < h; ++y) {
              const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t xx = 0; xx < w; ++xx) {
                const auto sx = static_cast<std::ptrdiff_t>(xx) + dx;
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                dst[y * w + xx] += wv * src[sy * static_cast<std::ptrdiff_t>(w) + sx];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor global_average_pool(const Tensor& x) {
  const std::size_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* src = x.data.data() + i * hw;
    out.data[i] = std::accumulate(src, src + hw, 0.0) / static_cast<double>(hw);
  }
  return out;
}

// Input for layer `k` given the previous layer's post-activation output.
Tensor layer_input(const Network& net, std::size_t k, const Tensor& prev_out) {
  if (net.layers[k].kind == LayerKind::dense && prev_out.rank() == 4) {
    return global_average_pool(prev_out);
  }
  return prev_out;
}

void apply_bits(std::vector<double>& grad, const std::vector<std::uint8_t>& bits) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!bits[i]) grad[i] = 0.0;
  }
}

}  // namespace

std::size_t Network::input_size() const {
  const LayerSpec& first = layers.front();
  if (first.kind == LayerKind::dense) return first.in_channels;
  return first.in_channels * input.height * input.width;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params) total += p.weight.size() + p.bias.size();
  return total;
}

void validate_specs(std::span<const LayerSpec> specs, const InputGeometry& input) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  if (input.height == 0 || input.width == 0) throw ConfigError("input geometry must be positive");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const LayerSpec& s = specs[k];
    const std::string where = "layer " + std::to_string(k) + ": ";
    if (s.in_channels == 0 || s.out_channels == 0) throw ConfigError(where + "channel counts must be positive");
    if (s.kind == LayerKind::conv2d) {
      if (s.kernel == 0 || s.kernel % 2 == 0) throw ConfigError(where + "conv kernel must be odd");
      if (k > 0 && specs[k - 1].kind == LayerKind::dense) {
        throw ConfigError(where + "conv layer cannot follow a dense layer");
      }
    } else if (s.kernel != 1) {
      throw ConfigError(where + "dense layers have kernel 1");
    }
    if (k > 0 && s.in_channels != specs[k - 1].out_channels) {
      throw ConfigError(where + "in_channels " + std::to_string(s.in_channels) +
                        " does not match previous out_channels " +
                        std::to_string(specs[k - 1].out_channels));
    }
  }
  const LayerSpec& last = specs.back();
  if (last.kind != LayerKind::dense || last.prunable || last.activation != Activation::none) {
    throw ConfigError("final layer must be a non-prunable dense layer without activation");
  }
}

bool same_structure(const Network& a, const Network& b) {
  return a.layers == b.layers && a.input == b.input && a.encoder_len == b.encoder_len;
}

void require_same_structure(const Network& a, const Network& b, const char* what) {
  if (!same_structure(a, b)) throw InputError(std::string(what) + ": network structures differ");
}

Network init_network(std::span<const LayerSpec> specs, std::uint64_t seed, InputGeometry input) {
  validate_specs(specs, input);
  Network net;
  net.layers.assign(specs.begin(), specs.end());
  net.encoder_len = specs.size() - 1;
  net.input = input;
  std::mt19937_64 rng(seed);
  for (const LayerSpec& s : specs) {
    LayerParams p{Tensor(weight_shape(s)), Tensor({s.out_channels})};
    const double fan_in = static_cast<double>(s.in_channels * s.kernel * s.kernel);
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.weight.data) v = dist(rng);
    net.params.push_back(std::move(p));
  }
  return net;
}

std::vector<LayerSpec> dense_chain(std::size_t inputs, std::span<const std::size_t> hidden,
                                   std::size_t classes) {
  std::vector<LayerSpec> specs;
  std::size_t prev = inputs;
  for (std::size_t h : hidden) {
    specs.push_back({LayerKind::dense, prev, h, Activation::relu, true, 1});
    prev = h;
  }
  specs.push_back({LayerKind::dense, prev, classes, Activation::none, false, 1});
  return specs;
}

Params zeros_like(const Params& params) {
  Params out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({Tensor(p.weight.shape), Tensor(p.bias.shape)});
  return out;
}

ParamMask full_mask(const Network& net) {
  ParamMask m;
  for (const auto& p : net.params) {
    m.push_back({std::vector<std::uint8_t>(p.weight.size(), 1),
                 std::vector<std::uint8_t>(p.bias.size(), 1)});
  }
  return m;
}

ForwardCache forward_cached(const Network& net, const Tensor& batch) {
  ForwardCache cache;
  const std::size_t depth = net.layers.size();
  cache.inputs.reserve(depth);
  cache.pre.reserve(depth);
  cache.outputs.reserve(depth);
  Tensor x = prepare_input(net, batch);
  for (std::size_t k = 0; k < depth; ++k) {
    if (k > 0) x = layer_input(net, k, cache.outputs.back());
    const LayerSpec& s = net.layers[k];
    if (k == net.encoder_len) cache.representation = x;
    Tensor z = s.kind == LayerKind::dense ? dense_forward(s, net.params[k], x)
                                          : conv_forward(s, net.params[k], x);
    Tensor a = z;
    if (s.activation != Activation::none) {
      for (double& v : a.data) v = activate(s.activation, v);
    }
    cache.inputs.push_back(std::move(x));
    cache.pre.push_back(std::move(z));
    cache.outputs.push_back(std::move(a));
  }
  cache.logits = cache.outputs.back();
  return cache;
}

ForwardResult forward(const Network& net, const Tensor& batch) {
  ForwardCache cache = forward_cached(net, batch);
  return {std::move(cache.representation), std::move(cache.logits)};
}

Params backward(const Network& net, const ForwardCache& cache, const OutputGrads& upstream,
                const ParamMask* mask) {
  const std::size_t depth = net.layers.size();
  if (upstream.d_logits.shape != cache.logits.shape) {
    throw InputError("logit gradient shape " + shape_string(upstream.d_logits.shape) +
                     " does not match logits " + shape_string(cache.logits.shape));
  }
  if (!upstream.d_representation.data.empty() &&
      upstream.d_representation.shape != cache.representation.shape) {
    throw InputError("representation gradient shape mismatch");
  }
  Params grads = zeros_like(net.params);
  Tensor d_out = upstream.d_logits;  // gradient w.r.t. outputs[k]
  for (std::size_t kk = depth; kk-- > 0;) {
    const LayerSpec& s = net.layers[kk];
    const LayerParams& p = net.params[kk];
    const Tensor& x = cache.inputs[kk];
    const Tensor& z = cache.pre[kk];
    Tensor dz = std::move(d_out);
    if (s.activation == Activation::relu) {
      for (std::size_t i = 0; i < dz.size(); ++i) {
        if (!(z.data[i] > 0.0)) dz.data[i] = 0.0;
      }
    }
    Tensor dx(x.shape);
    const std::size_t n = x.shape[0];
    auto& gw = grads[kk].weight.data;
    auto& gb = grads[kk].bias.data;
    if (s.kind == LayerKind::dense) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* xi = x.data.data() + b * s.in_channels;
        double* dxi = dx.data.data() + b * s.in_channels;
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          const double g = dz.data[b * s.out_channels + o];
          if (g == 0.0) continue;
          gb[o] += g;
          double* gwo = gw.data() + o * s.in_channels;
          const double* wo = p.weight.data.data() + o * s.in_channels;
          for (std::size_t i = 0; i < s.in_channels; ++i) {
            gwo[i] += g * xi[i];
            dxi[i] += g * wo[i];
          }
        }
      }
    } else {
      const std::size_t h = x.shape[2], w = x.shape[3], k = s.kernel;
      const auto pad = static_cast<std::ptrdiff_t>(k / 2);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          const double* g = dz.data.data() + (b * s.out_channels + o) * h * w;
          gb[o] += std::accumulate(g, g + h * w, 0.0);
          for (std::size_t c = 0; c < s.in_channels; ++c) {
            const double* src = x.data.data() + (b * s.in_channels + c) * h * w;
            double* dsrc = dx.data.data() + (b * s.in_channels + c) * h * w;
            const std::size_t ker_off = (o * s.in_channels + c) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const double wv = p.weight.data[ker_off + ky * k + kx];
                const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const auto dxo = static_cast<std::ptrdiff_t>(kx) - pad;
                double acc = 0.0;
                for (std::size_t y = 0; y < h; ++y) {
                  const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
                  if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t xx = 0; xx < w; ++xx) {
                    const auto sx = static_cast<std::ptrdiff_t>(xx) + dxo;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t si = static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx);
                    acc += g[y * w + xx] * src[si];
                    dsrc[si] += g[y * w + xx] * wv;
                  }
                }
                gw[ker_off + ky * k + kx] += acc;
              }
            }
          }
        }
      }
    }
    if (mask) {
      apply_bits(gw, (*mask)[kk].weight);
      apply_bits(gb, (*mask)[kk].bias);
    }
    if (kk == 0) break;
    // dx is the gradient w.r.t. this layer's input; add the representation
    // term at the predictor input, then undo pooling if the previous layer is conv.
    if (kk == net.encoder_len && !upstream.d_representation.data.empty()) {
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += upstream.d_representation.data[i];
    }
    const Tensor& prev = cache.outputs[kk - 1];
    if (prev.rank() == 4 && dx.rank() == 2) {
      Tensor unpooled(prev.shape);
      const std::size_t hw = prev.shape[2] * prev.shape[3];
      const double inv = 1.0 / static_cast<double>(hw);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        std::fill_n(unpooled.data.begin() + static_cast<std::ptrdiff_t>(i * hw), hw, dx.data[i] * inv);
      }
      d_out = std::move(unpooled);
    } else {
      d_out = std::move(dx);
    }
  }
  return grads;
}

std::vector<int> predict(const Network& net, const Tensor& batch) {
  const Tensor logits = forward(net, batch).logits;
  const std::size_t n = logits.shape[0], classes = logits.shape[1];
  std::vector<int> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = logits.data.data() + b * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const Network& net, const DomainDataset& data) {
  if (data.empty()) throw InputError("cannot evaluate on an empty dataset");
  constexpr std::size_t chunk = 256;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t stop = std::min(data.size(), start + chunk);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    const std::vector<int> pred = predict(net, data.gather(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (pred[i] == data.labels[rows[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace dapperfl
