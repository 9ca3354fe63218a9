#include "dapperfl/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dapperfl/errors.hpp"

namespace dapperfl {
namespace {

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw ConfigError("pruning ratio must lie in [0, 1), got " + std::to_string(rho));
  }
}

void check_mask_shape(const Network& net, const ParamMask& mask) {
  if (mask.size() != net.params.size()) throw InputError("mask layer count does not match network");
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k].weight.size() != net.params[k].weight.size() ||
        mask[k].bias.size() != net.params[k].bias.size()) {
      throw InputError("mask shape does not match network at layer " + std::to_string(k));
    }
  }
}

// Weights per (output channel, input channel) pair.
std::size_t kernel_area(const LayerSpec& s) { return s.kernel * s.kernel; }

}  // namespace

std::size_t ChannelMask::kept(std::size_t layer) const {
  const auto& v = keep.at(layer);
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), std::uint8_t{1}));
}

ChannelScores channel_l1_scores(const Network& net) {
  ChannelScores scores;
  scores.reserve(net.layers.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& s = net.layers[k];
    const std::size_t fan = s.in_channels * kernel_area(s);
    std::vector<double> layer(s.out_channels, 0.0);
    for (std::size_t c = 0; c < s.out_channels; ++c) {
      const double* w = net.params[k].weight.data.data() + c * fan;
      for (std::size_t i = 0; i < fan; ++i) layer[c] += std::abs(w[i]);
    }
    scores.push_back(std::move(layer));
  }
  return scores;
}

std::size_t dropped_count(std::size_t channels, double rho) {
  check_rho(rho);
  // The epsilon keeps exact halves such as 0.7 * 5 on the rounding-up side.
  const auto dropped = static_cast<std::size_t>(std::floor(rho * static_cast<double>(channels) + 0.5 + 1e-9));
  return std::min(dropped, channels - 1);
}

ChannelMask mask_from_keep(const Network& net, std::vector<std::vector<std::uint8_t>> keep) {
  if (keep.size() != net.layers.size()) throw InputError("keep-vector count does not match network");
  ChannelMask mask;
  mask.params = full_mask(net);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& s = net.layers[k];
    if (keep[k].size() != s.out_channels) {
      throw InputError("keep-vector length mismatch at layer " + std::to_string(k));
    }
    if (!s.prunable && std::find(keep[k].begin(), keep[k].end(), 0) != keep[k].end()) {
      throw InputError("layer " + std::to_string(k) + " is not prunable");
    }
    const std::size_t fan = s.in_channels * kernel_area(s);
    for (std::size_t c = 0; c < s.out_channels; ++c) {
      if (keep[k][c]) continue;
      auto& w = mask.params[k].weight;
      std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(c * fan), fan, std::uint8_t{0});
      mask.params[k].bias[c] = 0;
      if (k + 1 < net.layers.size()) {
        const LayerSpec& next = net.layers[k + 1];
        const std::size_t area = kernel_area(next);
        auto& nw = mask.params[k + 1].weight;
        for (std::size_t o = 0; o < next.out_channels; ++o) {
          std::fill_n(nw.begin() + static_cast<std::ptrdiff_t>((o * next.in_channels + c) * area), area,
                      std::uint8_t{0});
        }
      }
    }
  }
  mask.keep = std::move(keep);
  return mask;
}

ChannelMask all_ones_mask(const Network& net) {
  std::vector<std::vector<std::uint8_t>> keep;
  for (const auto& s : net.layers) keep.emplace_back(s.out_channels, 1);
  return mask_from_keep(net, std::move(keep));
}

ChannelMask build_mask(const Network& net, const ChannelScores& scores, double rho) {
  check_rho(rho);
  if (scores.size() != net.layers.size()) throw InputError("score vector count does not match network");
  std::vector<std::vector<std::uint8_t>> keep;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& s = net.layers[k];
    const auto& sc = scores[k];
    if (sc.size() != s.out_channels) throw InputError("score length mismatch at layer " + std::to_string(k));
    std::vector<std::uint8_t> layer(s.out_channels, 1);
    if (s.prunable) {
      std::vector<std::size_t> order(s.out_channels);
      std::iota(order.begin(), order.end(), 0);
      // Ascending score; among equal scores the higher index comes first so it is dropped first.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sc[a] != sc[b]) return sc[a] < sc[b];
        return a > b;
      });
      const std::size_t drop = dropped_count(s.out_channels, rho);
      for (std::size_t i = 0; i < drop; ++i) layer[order[i]] = 0;
    }
    keep.push_back(std::move(layer));
  }
  return mask_from_keep(net, std::move(keep));
}

ChannelMask random_mask(const Network& net, double rho, std::uint64_t seed) {
  check_rho(rho);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::uint8_t>> keep;
  for (const auto& s : net.layers) {
    std::vector<std::uint8_t> layer(s.out_channels, 1);
    if (s.prunable) {
      std::vector<std::size_t> order(s.out_channels);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t drop = dropped_count(s.out_channels, rho);
      for (std::size_t i = 0; i < drop; ++i) layer[order[i]] = 0;
    }
    keep.push_back(std::move(layer));
  }
  return mask_from_keep(net, std::move(keep));
}

ParamMask complement(const ParamMask& mask) {
  ParamMask out = mask;
  for (auto& layer : out) {
    for (auto& b : layer.weight) b = b ? 0 : 1;
    for (auto& b : layer.bias) b = b ? 0 : 1;
  }
  return out;
}

Network apply_mask(const Network& net, const ParamMask& mask) {
  check_mask_shape(net, mask);
  Network out = net;
  for (std::size_t k = 0; k < out.params.size(); ++k) {
    auto& w = out.params[k].weight.data;
    auto& b = out.params[k].bias.data;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask[k].weight[i] ? w[i] : 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = mask[k].bias[i] ? b[i] : 0.0;
  }
  return out;
}

Network apply_mask(const Network& net, const ChannelMask& mask) { return apply_mask(net, mask.params); }

Network recover(const Network& pruned, const ParamMask& mask, const Network& global_model) {
  require_same_structure(pruned, global_model, "recover");
  check_mask_shape(pruned, mask);
  Network out = pruned;
  for (std::size_t k = 0; k < out.params.size(); ++k) {
    auto& w = out.params[k].weight.data;
    auto& b = out.params[k].bias.data;
    const auto& gw = global_model.params[k].weight.data;
    const auto& gb = global_model.params[k].bias.data;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask[k].weight[i] ? w[i] : gw[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = mask[k].bias[i] ? b[i] : gb[i];
  }
  return out;
}

Network recover(const Network& pruned, const ChannelMask& mask, const Network& global_model) {
  return recover(pruned, mask.params, global_model);
}

bool satisfies_mask(const Network& net, const ParamMask& mask) {
  check_mask_shape(net, mask);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    for (std::size_t i = 0; i < mask[k].weight.size(); ++i) {
      if (!mask[k].weight[i] && net.params[k].weight.data[i] != 0.0) return false;
    }
    for (std::size_t i = 0; i < mask[k].bias.size(); ++i) {
      if (!mask[k].bias[i] && net.params[k].bias.data[i] != 0.0) return false;
    }
  }
  return true;
}

Footprint count_footprint(const Network& net, const ChannelMask* mask) {
  if (mask) check_mask_shape(net, mask->params);
  Footprint fp;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const LayerSpec& s = net.layers[k];
    std::uint64_t weights = net.params[k].weight.size();
    std::uint64_t biases = net.params[k].bias.size();
    if (mask) {
      const auto& m = mask->params[k];
      weights = static_cast<std::uint64_t>(std::count(m.weight.begin(), m.weight.end(), std::uint8_t{1}));
      biases = static_cast<std::uint64_t>(std::count(m.bias.begin(), m.bias.end(), std::uint8_t{1}));
    }
    fp.param_count += weights + biases;
    const std::uint64_t positions = s.kind == LayerKind::conv2d ? net.input.height * net.input.width : 1;
    fp.flops += 2 * weights * positions;
  }
  return fp;
}

}  // namespace dapperfl
