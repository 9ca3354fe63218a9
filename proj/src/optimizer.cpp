#include "dapperfl/optimizer.hpp"

#include <cmath>

#include "dapperfl/errors.hpp"

namespace dapperfl {
namespace {

void step_tensor(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v,
                 const std::vector<std::uint8_t>* bits, const OptimizerState& opt) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (bits && !(*bits)[i]) {
      w[i] = 0.0;
      v[i] = 0.0;
      continue;
    }
    v[i] = opt.momentum * v[i] + (g[i] + opt.weight_decay * w[i]);
    w[i] -= opt.lr * v[i];
  }
}

}  // namespace

void sgd_step(Network& net, const Params& grads, OptimizerState& opt, const ParamMask* mask) {
  if (grads.size() != net.params.size()) throw InputError("gradient layer count mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].weight.shape != net.params[k].weight.shape ||
        grads[k].bias.shape != net.params[k].bias.shape) {
      throw InputError("gradient shape mismatch at layer " + std::to_string(k));
    }
    if (!grads[k].weight.all_finite() || !grads[k].bias.all_finite()) {
      throw NumericError("non-finite gradient at layer " + std::to_string(k));
    }
  }
  if (mask && mask->size() != net.params.size()) throw InputError("mask layer count mismatch");
  if (opt.velocity.size() != net.params.size()) opt.velocity = zeros_like(net.params);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    step_tensor(net.params[k].weight.data, grads[k].weight.data, opt.velocity[k].weight.data,
                mask ? &(*mask)[k].weight : nullptr, opt);
    step_tensor(net.params[k].bias.data, grads[k].bias.data, opt.velocity[k].bias.data,
                mask ? &(*mask)[k].bias : nullptr, opt);
  }
}

}  // namespace dapperfl
