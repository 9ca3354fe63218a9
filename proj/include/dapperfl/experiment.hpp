#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dapperfl/datagen.hpp"
#include "dapperfl/hyperparams.hpp"
#include "dapperfl/network.hpp"
#include "dapperfl/server.hpp"

namespace dapperfl {

enum class Framework { dapperfl, fedavg, feddrop, dapperfl_no_mfp, dapperfl_no_dar, dapperfl_no_mfp_dar };

std::string_view framework_name(Framework f);
/// Throws ConfigError for unknown names.
Framework parse_framework(std::string_view name);

struct IdxDomain {
  std::filesystem::path images;
  std::filesystem::path labels;
};

enum class ShiftPreset { benchmark, identity };

struct DatasetConfig {
  enum class Kind { synthetic, idx } kind = Kind::synthetic;
  SynthSpec synth;
  ShiftPreset shift = ShiftPreset::benchmark;
  std::vector<IdxDomain> idx_domains;
  double test_fraction = 0.2;  // idx only; synthetic uses synth.test_fraction
  double proportion = 0.2;     // share of a domain's train pool given to each client
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64};
  std::vector<std::size_t> conv_channels;  // idx data only
  std::size_t kernel = 3;
};

struct ExperimentConfig {
  Framework framework = Framework::dapperfl;
  HyperParams hp;
  std::size_t clients = 10;
  LevelTable level_rho = kDefaultLevelTable;
  std::vector<int> levels;            // per client; empty = client i gets level i % 5 + 1
  std::optional<double> uniform_rho;  // every client prunes at this ratio
  DatasetConfig dataset;
  ModelConfig model;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output;
  std::size_t threads = 0;  // 0 = DAPPERFL_THREADS or hardware threads
  bool record_wall_time = true;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Strict JSON config: unknown keys rejected, missing keys keep defaults.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(std::string_view json_text);

struct MetricsRow {
  std::string framework;
  std::uint64_t seed = 0;
  int round = 0;
  double alpha = 0.0;
  std::vector<double> domain_accuracy;
  double global_accuracy = 0.0;
  std::vector<std::uint64_t> params;  // per client
  std::vector<std::uint64_t> flops;   // per client
  double wall_ms = 0.0;               // cumulative within the run
};

struct SeedRun {
  std::uint64_t seed = 0;
  Network initial_model;
  Network final_model;
  std::vector<ClientProfile> clients;
  std::vector<DomainDataset> test_sets;
  /// Mean over domains of the mean squared representation norm of the final
  /// model on each test split.
  double representation_norm = 0.0;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<SeedRun> runs;
};

/// Builds the data, clients and initial model that seed `seed` implies.
SeedRun prepare_run(const ExperimentConfig& cfg, std::uint64_t seed);

/// Model layers implied by the config for inputs shaped like `sample`.
std::vector<LayerSpec> model_specs(const ExperimentConfig& cfg, const DomainDataset& sample, std::size_t classes,
                                   InputGeometry& geometry);

/// Round configuration (strategy, gamma, ratios) implied by the framework.
RoundConfig round_config(const ExperimentConfig& cfg);
double framework_rho(const ExperimentConfig& cfg, int level);

/// Runs every seed and writes the CSV when cfg.output is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string csv_header(std::size_t domains, std::size_t clients);
void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::string format_number(double v);

enum class SweepParam { alpha0, alpha_min, epsilon, gamma, rho };
SweepParam parse_sweep_param(std::string_view name);
std::string_view sweep_param_name(SweepParam p);
ExperimentConfig with_override(ExperimentConfig cfg, SweepParam p, double value);

struct SweepPoint {
  double value = 0.0;
  ExperimentResult result;
};

/// One experiment per value; CSV rows are prefixed by `param,value`.
std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values);
void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepPoint>& points);

}  // namespace dapperfl
