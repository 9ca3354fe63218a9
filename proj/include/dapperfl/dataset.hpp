#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dapperfl/tensor.hpp"

namespace dapperfl {

enum class Split { train, test };

/// Labeled samples from exactly one domain. `features` has shape (n, d) or
/// (n, c, h, w); `source_index[i]` is sample i's position in its domain pool,
/// which is what disjointness checks compare.
struct DomainDataset {
  int domain_id = 0;
  Split split = Split::train;
  Tensor features;
  std::vector<int> labels;
  std::vector<std::size_t> source_index;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] bool empty() const { return labels.empty(); }

  /// Copies the selected rows into a fresh batch tensor.
  [[nodiscard]] Tensor gather(std::span<const std::size_t> rows) const;
  [[nodiscard]] std::vector<int> gather_labels(std::span<const std::size_t> rows) const;
  [[nodiscard]] DomainDataset subset(std::span<const std::size_t> rows) const;
};

}  // namespace dapperfl
