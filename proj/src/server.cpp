#include "dapperfl/server.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>

#include "dapperfl/errors.hpp"
#include "dapperfl/local_trainer.hpp"
#include "dapperfl/mfp.hpp"
#include "dapperfl/parallel.hpp"
#include "dapperfl/seeding.hpp"

namespace dapperfl {

void assign_ratios(std::vector<ClientProfile>& clients, const LevelTable& table) {
  for (auto& c : clients) {
    if (c.level < 1 || c.level > static_cast<int>(table.size())) {
      throw ConfigError("client " + std::to_string(c.id) + " has capability level " + std::to_string(c.level) +
                        ", expected 1..5");
    }
    c.rho = table[static_cast<std::size_t>(c.level - 1)];
  }
}

ClientUpdate client_update(const Network& global_prev, const ClientProfile& client, int t,
                           const RoundConfig& cfg) {
  if (!client.dataset || client.dataset->empty()) {
    throw InputError("client " + std::to_string(client.id) + " has no data");
  }
  const DomainDataset& data = *client.dataset;
  const auto round = static_cast<std::uint64_t>(t);
  const std::uint64_t local_seed = derive_seed(client.seed, {round, phase_id(Phase::local)});
  ClientUpdate up;
  if (cfg.strategy == LocalStrategy::random_pruning) {
    up.mask = random_mask(global_prev, client.rho, derive_seed(client.seed, {round, phase_id(Phase::mask)}));
    const Network pruned = apply_mask(global_prev, up.mask);
    up.local = train_epochs(pruned, data, cfg.hp, cfg.hp.local_epochs, cfg.hp.gamma, &up.mask.params, local_seed);
  } else {
    const FusionMode mode =
        cfg.strategy == LocalStrategy::fusion_pruning ? FusionMode::fused : FusionMode::local_only;
    PruneResult pr = model_fusion_pruning(global_prev, data, client.rho, cfg.hp.fusion, t, cfg.hp,
                                          derive_seed(client.seed, {round, phase_id(Phase::finetune)}), mode);
    up.alpha = pr.alpha;
    up.local = train_local(pr.pruned, pr.mask, data, cfg.hp, local_seed);
    up.mask = std::move(pr.mask);
  }
  up.footprint = count_footprint(up.local, &up.mask);
  return up;
}

std::vector<Network> recover_all(std::span<const ClientUpdate> updates, const Network& global_prev) {
  std::vector<Network> out;
  out.reserve(updates.size());
  for (const auto& u : updates) out.push_back(recover(u.local, u.mask, global_prev));
  return out;
}

Network aggregate(std::span<const Network> models, std::span<const std::size_t> sample_counts) {
  if (models.empty()) throw InputError("aggregate needs at least one model");
  if (models.size() != sample_counts.size()) throw InputError("one sample count per model required");
  double total = 0.0;
  for (std::size_t n : sample_counts) {
    if (n == 0) throw InputError("sample counts must be positive");
    total += static_cast<double>(n);
  }
  for (const auto& m : models) require_same_structure(models.front(), m, "aggregate");

  Network out = models.front();
  for (std::size_t k = 0; k < out.params.size(); ++k) {
    auto combine = [&](std::vector<double>& dst, auto member) {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        double acc = 0.0;
        double lo = (models.front().params[k].*member).data[i];
        double hi = lo;
        for (std::size_t c = 0; c < models.size(); ++c) {
          const double v = (models[c].params[k].*member).data[i];
          acc += (static_cast<double>(sample_counts[c]) / total) * v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        // rounding can push a convex combination a few ulps outside the hull
        dst[i] = std::clamp(acc, lo, hi);
      }
    };
    combine(out.params[k].weight.data, &LayerParams::weight);
    combine(out.params[k].bias.data, &LayerParams::bias);
  }
  return out;
}

RoundResult run_round(const Network& global_prev, std::span<const ClientProfile> clients, int t,
                      const RoundConfig& cfg, std::span<const DomainDataset> test_sets) {
  if (t < 1) throw InputError("round index must be >= 1");
  if (clients.empty()) throw InputError("a round needs at least one client");
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return clients[a].id < clients[b].id; });

  std::vector<ClientUpdate> updates(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t slot) {
    updates[slot] = client_update(global_prev, clients[order[slot]], t, cfg);
  });

  const std::vector<Network> recovered = recover_all(updates, global_prev);
  std::vector<std::size_t> counts;
  counts.reserve(clients.size());
  for (std::size_t slot : order) counts.push_back(clients[slot].sample_count);

  RoundResult result;
  result.global_model = aggregate(recovered, counts);
  RoundRecord& rec = result.record;
  rec.round = t;
  rec.alpha = updates.front().alpha;
  for (const auto& u : updates) rec.footprints.push_back(u.footprint);
  for (const auto& test : test_sets) rec.domain_accuracy.push_back(evaluate(result.global_model, test));
  if (!rec.domain_accuracy.empty()) {
    rec.global_accuracy = std::accumulate(rec.domain_accuracy.begin(), rec.domain_accuracy.end(), 0.0) /
                          static_cast<double>(rec.domain_accuracy.size());
  }
  if (cfg.record_wall_time) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  }
  return result;
}

TrainingResult run_training(const Network& initial, std::span<const ClientProfile> clients,
                            const RoundConfig& cfg, std::span<const DomainDataset> test_sets) {
  cfg.hp.validate();
  TrainingResult result;
  result.final_model = initial;
  for (int t = 1; t <= cfg.hp.rounds; ++t) {
    RoundResult r = run_round(result.final_model, clients, t, cfg, test_sets);
    result.final_model = std::move(r.global_model);
    result.records.push_back(std::move(r.record));
  }
  return result;
}

}  // namespace dapperfl
