#include "dapperfl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <ostream>

#include "dapperfl/errors.hpp"
#include "dapperfl/local_trainer.hpp"
#include "dapperfl/parallel.hpp"
#include "dapperfl/seeding.hpp"

namespace dapperfl {
namespace {

constexpr std::pair<Framework, std::string_view> kFrameworks[] = {
    {Framework::dapperfl, "dapperfl"},
    {Framework::fedavg, "fedavg"},
    {Framework::feddrop, "feddrop"},
    {Framework::dapperfl_no_mfp, "dapperfl_no_mfp"},
    {Framework::dapperfl_no_dar, "dapperfl_no_dar"},
    {Framework::dapperfl_no_mfp_dar, "dapperfl_no_mfp_dar"},
};

constexpr std::pair<SweepParam, std::string_view> kSweepParams[] = {
    {SweepParam::alpha0, "alpha0"}, {SweepParam::alpha_min, "alpha_min"}, {SweepParam::epsilon, "epsilon"},
    {SweepParam::gamma, "gamma"},   {SweepParam::rho, "rho"},
};

bool uses_dar(Framework f) { return f == Framework::dapperfl || f == Framework::dapperfl_no_mfp; }

int default_level(std::size_t client) { return static_cast<int>(client % 5) + 1; }

struct LoadedData {
  std::vector<DomainDataset> train;
  std::vector<DomainDataset> test;
};

LoadedData load_domains(const ExperimentConfig& cfg, std::uint64_t seed) {
  const DatasetConfig& ds = cfg.dataset;
  if (ds.kind == DatasetConfig::Kind::synthetic) {
    const ShiftSpec shift = ds.shift == ShiftPreset::identity
                                ? ShiftSpec::identity(ds.synth.num_domains)
                                : ShiftSpec::benchmark(ds.synth.num_domains, ds.synth.dims);
    DomainSplits splits = synth_domains(ds.synth, shift, seed);
    return {std::move(splits.train), std::move(splits.test)};
  }
  LoadedData out;
  for (std::size_t d = 0; d < ds.idx_domains.size(); ++d) {
    const DomainDataset pool = load_idx(ds.idx_domains[d].images, ds.idx_domains[d].labels, static_cast<int>(d));
    DomainSplits split = split_pool(pool, ds.test_fraction, derive_seed(seed, {phase_id(Phase::data), 1000 + d}));
    out.train.push_back(std::move(split.train.front()));
    out.test.push_back(std::move(split.test.front()));
  }
  return out;
}

std::string format_count(std::uint64_t v) { return std::to_string(v); }

}  // namespace

std::string_view framework_name(Framework f) {
  for (const auto& [value, name] : kFrameworks) {
    if (value == f) return name;
  }
  return "unknown";
}

Framework parse_framework(std::string_view name) {
  for (const auto& [value, n] : kFrameworks) {
    if (n == name) return value;
  }
  throw ConfigError("unknown framework '" + std::string(name) + "'");
}

SweepParam parse_sweep_param(std::string_view name) {
  for (const auto& [value, n] : kSweepParams) {
    if (n == name) return value;
  }
  throw ConfigError("unknown sweep parameter '" + std::string(name) + "'");
}

std::string_view sweep_param_name(SweepParam p) {
  for (const auto& [value, n] : kSweepParams) {
    if (value == p) return n;
  }
  return "unknown";
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double framework_rho(const ExperimentConfig& cfg, int level) {
  if (cfg.framework == Framework::fedavg) return 0.0;
  if (cfg.uniform_rho) return *cfg.uniform_rho;
  if (cfg.framework == Framework::feddrop) {
    return *std::max_element(cfg.level_rho.begin(), cfg.level_rho.end());
  }
  return cfg.level_rho.at(static_cast<std::size_t>(level - 1));
}

RoundConfig round_config(const ExperimentConfig& cfg) {
  RoundConfig rc;
  rc.hp = cfg.hp;
  rc.threads = resolve_thread_count(cfg.threads);
  rc.record_wall_time = cfg.record_wall_time;
  switch (cfg.framework) {
    case Framework::feddrop:
      rc.strategy = LocalStrategy::random_pruning;
      break;
    case Framework::dapperfl:
    case Framework::dapperfl_no_dar:
      rc.strategy = LocalStrategy::fusion_pruning;
      break;
    default:
      rc.strategy = LocalStrategy::local_pruning;
      break;
  }
  if (!uses_dar(cfg.framework)) rc.hp.gamma = 0.0;
  return rc;
}

std::vector<LayerSpec> model_specs(const ExperimentConfig& cfg, const DomainDataset& sample, std::size_t classes,
                                   InputGeometry& geometry) {
  const Tensor& f = sample.features;
  if (cfg.model.conv_channels.empty()) {
    geometry = {};
    return dense_chain(f.row_size(), cfg.model.hidden, classes);
  }
  if (f.rank() != 4) throw ConfigError("config key 'model.conv_channels': conv models need image data");
  geometry = {f.shape[2], f.shape[3]};
  std::vector<LayerSpec> specs;
  std::size_t prev = f.shape[1];
  for (std::size_t c : cfg.model.conv_channels) {
    specs.push_back({LayerKind::conv2d, prev, c, Activation::relu, true, cfg.model.kernel});
    prev = c;
  }
  std::vector<LayerSpec> tail = dense_chain(prev, cfg.model.hidden, classes);
  specs.insert(specs.end(), tail.begin(), tail.end());
  return specs;
}

SeedRun prepare_run(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  LoadedData data = load_domains(cfg, seed);
  Partition part = partition_clients(data.train, cfg.clients, cfg.dataset.proportion, seed);

  SeedRun run;
  run.seed = seed;
  run.test_sets = std::move(data.test);
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientProfile c;
    c.id = static_cast<int>(i);
    c.level = cfg.levels.empty() ? default_level(i) : cfg.levels[i];
    c.dataset = std::make_shared<const DomainDataset>(std::move(part.clients[i]));
    c.sample_count = c.dataset->size();
    c.seed = derive_seed(seed, {0x636C69656E74ULL, i});
    run.clients.push_back(std::move(c));
  }
  assign_ratios(run.clients, cfg.level_rho);
  for (auto& c : run.clients) c.rho = framework_rho(cfg, c.level);

  int max_label = 0;
  for (const auto& pool : data.train) {
    for (int y : pool.labels) max_label = std::max(max_label, y);
  }
  InputGeometry geometry;
  const std::vector<LayerSpec> specs =
      model_specs(cfg, data.train.front(), static_cast<std::size_t>(max_label) + 1, geometry);
  run.initial_model = init_network(specs, derive_seed(seed, {phase_id(Phase::init)}), geometry);
  return run;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const RoundConfig rc = round_config(cfg);
  ExperimentResult result;
  const std::string name(framework_name(cfg.framework));
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run = prepare_run(cfg, seed);
    TrainingResult tr = run_training(run.initial_model, run.clients, rc, run.test_sets);
    double elapsed = 0.0;
    for (const RoundRecord& rec : tr.records) {
      MetricsRow row;
      row.framework = name;
      row.seed = seed;
      row.round = rec.round;
      row.alpha = rec.alpha;
      row.domain_accuracy = rec.domain_accuracy;
      row.global_accuracy = rec.global_accuracy;
      for (const Footprint& fp : rec.footprints) {
        row.params.push_back(fp.param_count);
        row.flops.push_back(fp.flops);
      }
      elapsed += rec.wall_ms;
      row.wall_ms = elapsed;
      result.rows.push_back(std::move(row));
    }
    run.final_model = std::move(tr.final_model);
    double norm = 0.0;
    for (const auto& test : run.test_sets) norm += mean_representation_norm(run.final_model, test);
    run.representation_norm = norm / static_cast<double>(run.test_sets.size());
    result.runs.push_back(std::move(run));
  }
  if (!cfg.output.empty()) {
    std::ofstream out(cfg.output, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file " + cfg.output.string());
    write_csv(out, result.rows);
  }
  return result;
}

std::string csv_header(std::size_t domains, std::size_t clients) {
  std::string h = "framework,seed,round,alpha";
  for (std::size_t d = 0; d < domains; ++d) h += ",acc_domain_" + std::to_string(d);
  h += ",acc_global";
  for (std::size_t c = 0; c < clients; ++c) h += ",params_client_" + std::to_string(c);
  for (std::size_t c = 0; c < clients; ++c) h += ",flops_client_" + std::to_string(c);
  return h + ",wall_ms";
}

namespace {

void write_row(std::ostream& out, const MetricsRow& row) {
  out << row.framework << ',' << row.seed << ',' << row.round << ',' << format_number(row.alpha);
  for (double a : row.domain_accuracy) out << ',' << format_number(a);
  out << ',' << format_number(row.global_accuracy);
  for (auto p : row.params) out << ',' << format_count(p);
  for (auto f : row.flops) out << ',' << format_count(f);
  char wall[32];
  std::snprintf(wall, sizeof(wall), "%.3f", row.wall_ms);
  out << ',' << wall << '\n';
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  const std::size_t domains = rows.empty() ? 0 : rows.front().domain_accuracy.size();
  const std::size_t clients = rows.empty() ? 0 : rows.front().params.size();
  out << csv_header(domains, clients) << '\n';
  for (const auto& row : rows) write_row(out, row);
}

ExperimentConfig with_override(ExperimentConfig cfg, SweepParam p, double value) {
  switch (p) {
    case SweepParam::alpha0: cfg.hp.fusion.alpha0 = value; break;
    case SweepParam::alpha_min: cfg.hp.fusion.alpha_min = value; break;
    case SweepParam::epsilon: cfg.hp.fusion.epsilon = value; break;
    case SweepParam::gamma: cfg.hp.gamma = value; break;
    case SweepParam::rho: cfg.uniform_rho = value; break;
  }
  return cfg;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepPoint> points;
  ExperimentConfig base = cfg;
  base.output.clear();
  for (double v : values) {
    const ExperimentConfig run_cfg = with_override(base, param, v);
    points.push_back({v, run_experiment(run_cfg)});
  }
  if (!cfg.output.empty()) {
    std::ofstream out(cfg.output, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file " + cfg.output.string());
    write_sweep_csv(out, param, points);
  }
  return points;
}

void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepPoint>& points) {
  const MetricsRow* first = nullptr;
  for (const auto& p : points) {
    if (!p.result.rows.empty()) {
      first = &p.result.rows.front();
      break;
    }
  }
  const std::size_t domains = first ? first->domain_accuracy.size() : 0;
  const std::size_t clients = first ? first->params.size() : 0;
  out << "param,value," << csv_header(domains, clients) << '\n';
  for (const auto& p : points) {
    for (const auto& row : p.result.rows) {
      out << sweep_param_name(param) << ',' << format_number(p.value) << ',';
      write_row(out, row);
    }
  }
}

}  // namespace dapperfl
