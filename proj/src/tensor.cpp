#include "dapperfl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "dapperfl/errors.hpp"

namespace dapperfl {

std::size_t shape_product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (shape_product(shape) != data.size()) {
    throw InputError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
}

std::size_t Tensor::row_size() const {
  return shape.empty() || shape[0] == 0 ? 0 : data.size() / shape[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t n = row_size();
  return {data.data() + r * n, n};
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t n = row_size();
  return {data.data() + r * n, n};
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dapperfl
