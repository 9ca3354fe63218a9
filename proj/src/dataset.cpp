#include "dapperfl/dataset.hpp"

#include <algorithm>

namespace dapperfl {

Tensor DomainDataset::gather(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> dims = features.shape;
  dims[0] = rows.size();
  Tensor out(std::move(dims));
  const std::size_t width = features.row_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return out;
}

std::vector<int> DomainDataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

DomainDataset DomainDataset::subset(std::span<const std::size_t> rows) const {
  DomainDataset out;
  out.domain_id = domain_id;
  out.split = split;
  out.features = gather(rows);
  out.labels = gather_labels(rows);
  out.source_index.reserve(rows.size());
  for (std::size_t r : rows) out.source_index.push_back(source_index[r]);
  return out;
}

}  // namespace dapperfl
