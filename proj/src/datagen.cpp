#include "dapperfl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "dapperfl/errors.hpp"
#include "dapperfl/seeding.hpp"

namespace dapperfl {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw FormatError(path.string() + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void validate_shift(const DomainShift& s, std::size_t dims, std::size_t index) {
  const std::string where = "domain " + std::to_string(index) + " shift: ";
  if (!s.scale.empty() && s.scale.size() != dims) throw ConfigError(where + "scale length must equal dims");
  if (!s.translation.empty() && s.translation.size() != dims) {
    throw ConfigError(where + "translation length must equal dims");
  }
  for (double v : s.scale) {
    if (v == 0.0 || !std::isfinite(v)) throw ConfigError(where + "scales must be finite and nonzero");
  }
  if (!(s.noise >= 0.0) || !(s.class_shift >= 0.0) || !std::isfinite(s.rotation)) {
    throw ConfigError(where + "noise and class_shift must be nonnegative");
  }
}

}  // namespace

ShiftSpec ShiftSpec::identity(std::size_t num_domains) {
  return ShiftSpec{std::vector<DomainShift>(num_domains)};
}

ShiftSpec ShiftSpec::benchmark(std::size_t num_domains, std::size_t dims) {
  ShiftSpec spec;
  for (std::size_t i = 0; i < num_domains; ++i) {
    const double level = static_cast<double>(i);
    DomainShift s;
    s.rotation = 0.45 * level;
    s.scale.resize(dims);
    s.translation.resize(dims);
    for (std::size_t j = 0; j < dims; ++j) {
      // alternate stretching and squashing coordinates
      s.scale[j] = j % 2 == 0 ? 1.0 + 0.25 * level : 1.0 / (1.0 + 0.25 * level);
      s.translation[j] = (j % 3 == 0 ? 0.4 : -0.2) * level;
    }
    s.class_shift = 0.5 * level;
    s.noise = 0.3 * level;
    spec.domains.push_back(std::move(s));
  }
  return spec;
}

DomainSplits split_pool(const DomainDataset& pool, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  const int classes = pool.labels.empty() ? 0 : *std::max_element(pool.labels.begin(), pool.labels.end()) + 1;
  std::vector<std::size_t> train_rows, test_rows;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool.labels[i] == c) rows.push_back(i);
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(rows.size()) + 0.5));
    const std::size_t cut = std::min(n_test, rows.size() > 0 ? rows.size() - 1 : 0);
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  DomainSplits out;
  out.train.push_back(pool.subset(train_rows));
  out.train.back().split = Split::train;
  out.test.push_back(pool.subset(test_rows));
  out.test.back().split = Split::test;
  return out;
}

DomainSplits synth_domains(const SynthSpec& spec, const ShiftSpec& shift, std::uint64_t seed) {
  if (spec.num_domains < 2) throw ConfigError("need at least two domains");
  if (spec.classes < 2) throw ConfigError("need at least two classes");
  if (spec.dims == 0) throw ConfigError("dims must be positive");
  if (spec.samples_per_domain < 2 * spec.classes) throw ConfigError("too few samples per domain");
  if (!(spec.cluster_std > 0.0) || !(spec.class_separation > 0.0)) {
    throw ConfigError("cluster_std and class_separation must be positive");
  }
  if (shift.domains.size() != spec.num_domains) throw ConfigError("shift spec must list every domain");
  for (std::size_t i = 0; i < shift.domains.size(); ++i) validate_shift(shift.domains[i], spec.dims, i);

  const std::size_t d = spec.dims, classes = spec.classes;
  std::mt19937_64 base_rng(derive_seed(seed, {phase_id(Phase::data)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(classes * d);
  for (double& m : means) m = spec.class_separation * normal(base_rng);

  DomainSplits out;
  for (std::size_t dom = 0; dom < spec.num_domains; ++dom) {
    const DomainShift& s = shift.domains[dom];
    std::mt19937_64 rng(derive_seed(seed, {phase_id(Phase::data), dom + 1}));
    std::vector<double> offsets(classes * d, 0.0);
    const double offset_scale = s.class_shift / std::sqrt(static_cast<double>(d));
    for (double& o : offsets) o = offset_scale * normal(rng);

    const std::size_t n = spec.samples_per_domain;
    DomainDataset pool;
    pool.domain_id = static_cast<int>(dom);
    pool.features = Tensor({n, d});
    pool.labels.resize(n);
    pool.source_index.resize(n);
    std::iota(pool.source_index.begin(), pool.source_index.end(), 0);
    const double cr = std::cos(s.rotation), sr = std::sin(s.rotation);
    std::vector<double> x(d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = static_cast<int>(i % classes);
      pool.labels[i] = y;
      for (std::size_t j = 0; j < d; ++j) {
        x[j] = means[static_cast<std::size_t>(y) * d + j] + spec.cluster_std * normal(rng);
        if (!s.scale.empty()) x[j] *= s.scale[j];
      }
      for (std::size_t j = 0; j + 1 < d; j += 2) {
        const double a = x[j], b = x[j + 1];
        x[j] = cr * a - sr * b;
        x[j + 1] = sr * a + cr * b;
      }
      auto row = pool.features.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        double v = x[j] + offsets[static_cast<std::size_t>(y) * d + j];
        if (!s.translation.empty()) v += s.translation[j];
        if (s.noise > 0.0) v += s.noise * normal(rng);
        row[j] = v;
      }
    }
    DomainSplits split = split_pool(pool, spec.test_fraction, derive_seed(seed, {phase_id(Phase::data), 1000 + dom}));
    for (int c = 0; c < static_cast<int>(classes); ++c) {
      const auto& labels = split.train.front().labels;
      if (std::find(labels.begin(), labels.end(), c) == labels.end()) {
        throw ConfigError("class " + std::to_string(c) + " missing from domain train pool");
      }
    }
    out.train.push_back(std::move(split.train.front()));
    out.test.push_back(std::move(split.test.front()));
  }
  return out;
}

Partition partition_clients(const std::vector<DomainDataset>& domains, std::size_t num_clients,
                            double proportion, std::uint64_t seed) {
  const std::size_t num_domains = domains.size();
  if (num_domains == 0) throw ConfigError("no domains to partition");
  if (num_clients < num_domains) {
    throw ConfigError("need at least one client per domain: " + std::to_string(num_clients) + " clients, " +
                      std::to_string(num_domains) + " domains");
  }
  if (!(proportion > 0.0 && proportion <= 1.0)) throw ConfigError("proportion must lie in (0, 1]");

  std::vector<std::size_t> per_client(num_domains), capacity(num_domains);
  for (std::size_t d = 0; d < num_domains; ++d) {
    const std::size_t pool = domains[d].size();
    if (pool == 0) throw ConfigError("domain " + std::to_string(d) + " has an empty pool");
    per_client[d] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(proportion * static_cast<double>(pool) + 1e-9)));
    capacity[d] = pool / per_client[d];
  }

  std::mt19937_64 rng(derive_seed(seed, {phase_id(Phase::partition)}));
  std::vector<std::size_t> clients(num_clients);
  std::iota(clients.begin(), clients.end(), 0);
  std::shuffle(clients.begin(), clients.end(), rng);

  Partition out;
  out.client_domain.assign(num_clients, -1);
  std::vector<std::size_t> load(num_domains, 0);
  for (std::size_t i = 0; i < num_clients; ++i) {
    std::size_t dom;
    if (i < num_domains) {
      dom = i;
    } else {
      std::vector<std::size_t> open;
      for (std::size_t d = 0; d < num_domains; ++d) {
        if (load[d] < capacity[d]) open.push_back(d);
      }
      if (open.empty()) {
        throw ConfigError("proportion " + std::to_string(proportion) + " leaves too little data for " +
                          std::to_string(num_clients) + " clients");
      }
      dom = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    }
    out.client_domain[clients[i]] = static_cast<int>(dom);
    ++load[dom];
  }

  out.clients.resize(num_clients);
  for (std::size_t d = 0; d < num_domains; ++d) {
    std::vector<std::size_t> rows(domains[d].size());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    std::size_t next = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
      if (out.client_domain[c] != static_cast<int>(d)) continue;
      std::vector<std::size_t> mine(rows.begin() + static_cast<std::ptrdiff_t>(next),
                                    rows.begin() + static_cast<std::ptrdiff_t>(next + per_client[d]));
      std::sort(mine.begin(), mine.end());
      next += per_client[d];
      out.clients[c] = domains[d].subset(mine);
      out.clients[c].split = Split::train;
    }
  }
  return out;
}

DomainDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       int domain_id) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (read_be32(images, 0, images_path) != kImageMagic) throw FormatError(images_path.string() + ": bad image magic");
  if (read_be32(labels, 0, labels_path) != kLabelMagic) throw FormatError(labels_path.string() + ": bad label magic");
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                      std::to_string(label_count));
  }
  const std::size_t pixels = count * rows * cols;
  if (images.size() < 16 + pixels) throw FormatError(images_path.string() + ": truncated pixel data");
  if (labels.size() < 8 + count) throw FormatError(labels_path.string() + ": truncated label data");

  DomainDataset out;
  out.domain_id = domain_id;
  out.features = Tensor({count, 1, rows, cols});
  for (std::size_t i = 0; i < pixels; ++i) out.features.data[i] = static_cast<double>(images[16 + i]) / 255.0;
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.labels[i] = labels[8 + i];
  out.source_index.resize(count);
  std::iota(out.source_index.begin(), out.source_index.end(), 0);
  return out;
}

}  // namespace dapperfl
