#pragma once

#include <cstdint>

#include "dapperfl/dataset.hpp"
#include "dapperfl/hyperparams.hpp"
#include "dapperfl/masking.hpp"
#include "dapperfl/network.hpp"

namespace dapperfl {

/// Fusion factor for 1-indexed round t. Throws InputError for t < 1.
double alpha_at(const FusionSchedule& sched, int t);

/// alpha * global + (1 - alpha) * local, parameter by parameter.
Network fuse(const Network& global_model, const Network& local_model, double alpha);

struct PruneResult {
  Network pruned;
  ChannelMask mask;
  Network finetuned;  // the one-epoch local model before fusion
  double alpha = 0.0;
};

/// Which model the l1 channel scores (and pruned weights) come from.
enum class FusionMode {
  fused,     // fuse global into the fine-tuned model with alpha_at(t)
  local_only // prune the fine-tuned model directly
};

/// Model fusion pruning for one client: one epoch of plain cross-entropy SGD
/// from the global model, fusion, l1 channel scoring, masking. `global_model`
/// is not modified.
PruneResult model_fusion_pruning(const Network& global_model, const DomainDataset& data, double rho,
                                 const FusionSchedule& sched, int t, const HyperParams& cfg,
                                 std::uint64_t seed, FusionMode mode = FusionMode::fused);

}  // namespace dapperfl
