#include "dapperfl/mfp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dapperfl/errors.hpp"
#include "dapperfl/local_trainer.hpp"

namespace dapperfl {

double alpha_at(const FusionSchedule& sched, int t) {
  if (t < 1) throw InputError("round index must be >= 1, got " + std::to_string(t));
  const double decayed = std::pow(1.0 - sched.epsilon, t - 1) * sched.alpha0;
  return std::max(decayed, sched.alpha_min);
}

Network fuse(const Network& global_model, const Network& local_model, double alpha) {
  require_same_structure(global_model, local_model, "fuse");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("fusion factor must lie in [0, 1]");
  Network out = global_model;
  const double beta = 1.0 - alpha;
  for (std::size_t k = 0; k < out.params.size(); ++k) {
    auto blend = [&](std::vector<double>& dst, const std::vector<double>& loc) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = alpha * dst[i] + beta * loc[i];
    };
    blend(out.params[k].weight.data, local_model.params[k].weight.data);
    blend(out.params[k].bias.data, local_model.params[k].bias.data);
  }
  return out;
}

PruneResult model_fusion_pruning(const Network& global_model, const DomainDataset& data, double rho,
                                 const FusionSchedule& sched, int t, const HyperParams& cfg,
                                 std::uint64_t seed, FusionMode mode) {
  if (data.empty()) throw InputError("model fusion pruning needs local data");
  dropped_count(1, rho);  // validates rho before any training
  PruneResult r;
  r.finetuned = train_epochs(global_model, data, cfg, 1, 0.0, nullptr, seed);
  Network fused;
  if (mode == FusionMode::fused) {
    r.alpha = alpha_at(sched, t);
    fused = fuse(global_model, r.finetuned, r.alpha);
  } else {
    fused = r.finetuned;
  }
  r.mask = build_mask(fused, channel_l1_scores(fused), rho);
  r.pruned = apply_mask(fused, r.mask);
  return r;
}

}  // namespace dapperfl
