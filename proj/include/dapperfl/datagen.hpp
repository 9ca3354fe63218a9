#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dapperfl/dataset.hpp"

namespace dapperfl {

/// Feature transform of one domain:
/// x' = R(rotation) (scale ⊙ x) + translation + class_offset[y] + noise * N(0, I).
/// R rotates every consecutive coordinate pair (0,1), (2,3), ... by `rotation`.
/// Empty `scale` / `translation` mean ones / zeros. Per-class offsets are drawn
/// from the domain's stream with expected norm `class_shift`.
struct DomainShift {
  double rotation = 0.0;
  std::vector<double> scale;
  std::vector<double> translation;
  double class_shift = 0.0;
  double noise = 0.0;
};

struct ShiftSpec {
  std::vector<DomainShift> domains;

  static ShiftSpec identity(std::size_t num_domains);
  /// The default desk benchmark: progressively rotated, rescaled, offset and
  /// noisier domains, so domain 0 is the easiest and the last the hardest.
  static ShiftSpec benchmark(std::size_t num_domains, std::size_t dims);
};

struct SynthSpec {
  std::size_t num_domains = 4;
  std::size_t classes = 4;
  std::size_t dims = 16;
  std::size_t samples_per_domain = 600;
  double test_fraction = 0.2;
  double class_separation = 1.0;  // std of the class-mean prior
  double cluster_std = 1.0;
};

struct DomainSplits {
  std::vector<DomainDataset> train;  // one pool per domain
  std::vector<DomainDataset> test;
};

/// Gaussian class clusters pushed through each domain's shift, split per
/// class into train/test. Pure function of (spec, shift, seed).
DomainSplits synth_domains(const SynthSpec& spec, const ShiftSpec& shift, std::uint64_t seed);

/// Splits one labelled pool into train/test per class; `source_index` is kept.
DomainSplits split_pool(const DomainDataset& pool, double test_fraction, std::uint64_t seed);

struct Partition {
  std::vector<DomainDataset> clients;
  std::vector<int> client_domain;
};

/// Assigns every client to exactly one domain (each domain gets at least one)
/// and hands each client a disjoint random `proportion` of its domain's pool.
Partition partition_clients(const std::vector<DomainDataset>& domains, std::size_t num_clients,
                            double proportion, std::uint64_t seed);

/// Reads an IDX image/label pair (magic 0x803 / 0x801, big endian) into a
/// (n, 1, rows, cols) dataset with pixels scaled to [0, 1].
DomainDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                       int domain_id = 0);

}  // namespace dapperfl
