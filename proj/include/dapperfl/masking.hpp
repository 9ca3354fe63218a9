#pragma once

#include <cstdint>
#include <vector>

#include "dapperfl/network.hpp"

namespace dapperfl {

/// Per-layer score (or keep) vectors over output channels.
using ChannelScores = std::vector<std::vector<double>>;

/// Channel-level pruning decision plus its parameter-level expansion.
/// `keep[k][c] == 0` drops output channel c of layer k: its weight row, its
/// bias entry, and the matching input columns of layer k + 1 are masked.
/// Non-prunable layers keep every channel.
struct ChannelMask {
  std::vector<std::vector<std::uint8_t>> keep;
  ParamMask params;

  [[nodiscard]] std::size_t kept(std::size_t layer) const;
  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;
};

struct Footprint {
  std::uint64_t param_count = 0;
  std::uint64_t flops = 0;  // 2 per multiply-accumulate, per sample

  friend bool operator==(const Footprint&, const Footprint&) = default;
};

/// Sum of |w| over every weight feeding each output channel (bias excluded).
ChannelScores channel_l1_scores(const Network& net);

/// Number of channels dropped out of `channels` at ratio `rho`:
/// round-half-up of rho * channels, leaving at least one channel.
std::size_t dropped_count(std::size_t channels, double rho);

/// Drops the dropped_count lowest-scoring channels of every prunable layer.
/// Equal scores keep the lower channel index. Throws ConfigError unless 0 <= rho < 1.
ChannelMask build_mask(const Network& net, const ChannelScores& scores, double rho);

/// Same drop counts as build_mask, channels chosen uniformly at random.
ChannelMask random_mask(const Network& net, double rho, std::uint64_t seed);

/// Expands keep-vectors into the parameter-level view.
ChannelMask mask_from_keep(const Network& net, std::vector<std::vector<std::uint8_t>> keep);
ChannelMask all_ones_mask(const Network& net);

ParamMask complement(const ParamMask& mask);

/// w ⊙ M: masked entries become exactly 0, the rest are copied.
Network apply_mask(const Network& net, const ParamMask& mask);
Network apply_mask(const Network& net, const ChannelMask& mask);

/// pruned ⊙ M + global ⊙ (NOT M), as an elementwise select.
Network recover(const Network& pruned, const ParamMask& mask, const Network& global_model);
Network recover(const Network& pruned, const ChannelMask& mask, const Network& global_model);

/// True when every masked entry of `net` is exactly zero.
bool satisfies_mask(const Network& net, const ParamMask& mask);

Footprint count_footprint(const Network& net, const ChannelMask* mask = nullptr);

}  // namespace dapperfl
