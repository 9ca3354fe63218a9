#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dapperfl/dataset.hpp"
#include "dapperfl/hyperparams.hpp"
#include "dapperfl/masking.hpp"
#include "dapperfl/network.hpp"

namespace dapperfl {

/// Pruning ratio per capability level 1..5.
using LevelTable = std::array<double, 5>;
inline constexpr LevelTable kDefaultLevelTable{0.0, 0.2, 0.4, 0.6, 0.8};

struct ClientProfile {
  int id = 0;
  int level = 1;
  double rho = 0.0;
  std::shared_ptr<const DomainDataset> dataset;
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
};

/// How a client turns the broadcast global model into its local update.
enum class LocalStrategy {
  fusion_pruning,  // fine-tune, fuse, l1-prune, train epochs 2..E
  local_pruning,   // fine-tune, l1-prune the fine-tuned model, train epochs 2..E
  random_pruning   // random channel mask on the global model, train E epochs
};

struct RoundConfig {
  HyperParams hp;
  LocalStrategy strategy = LocalStrategy::fusion_pruning;
  std::size_t threads = 1;
  bool record_wall_time = true;
};

struct RoundRecord {
  int round = 0;
  double alpha = 0.0;  // fusion factor used this round, 0 without fusion
  std::vector<Footprint> footprints;  // per client, in id order
  std::vector<double> domain_accuracy;
  double global_accuracy = 0.0;
  double wall_ms = 0.0;
};

struct ClientUpdate {
  Network local;
  ChannelMask mask;
  Footprint footprint;
  double alpha = 0.0;
};

/// Sets rho from each client's level. Throws ConfigError for levels outside 1..5.
void assign_ratios(std::vector<ClientProfile>& clients, const LevelTable& table = kDefaultLevelTable);

/// One client's local work for round t.
ClientUpdate client_update(const Network& global_prev, const ClientProfile& client, int t,
                           const RoundConfig& cfg);

/// local ⊙ M + global_prev ⊙ (NOT M) for every client.
std::vector<Network> recover_all(std::span<const ClientUpdate> updates, const Network& global_prev);

/// Sample-weighted mean of the models, accumulated in list order.
Network aggregate(std::span<const Network> models, std::span<const std::size_t> sample_counts);

struct RoundResult {
  Network global_model;
  RoundRecord record;
};

/// Broadcast, local updates (possibly concurrent), recovery, aggregation,
/// evaluation of the new global model on every test split.
RoundResult run_round(const Network& global_prev, std::span<const ClientProfile> clients, int t,
                      const RoundConfig& cfg, std::span<const DomainDataset> test_sets);

struct TrainingResult {
  std::vector<RoundRecord> records;
  Network final_model;
};

/// Rounds 1..hp.rounds starting from `initial`.
TrainingResult run_training(const Network& initial, std::span<const ClientProfile> clients,
                            const RoundConfig& cfg, std::span<const DomainDataset> test_sets);

}  // namespace dapperfl
