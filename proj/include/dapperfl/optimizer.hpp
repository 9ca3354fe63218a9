#pragma once

#include "dapperfl/network.hpp"

namespace dapperfl {

/// SGD with momentum and additive weight decay.
struct OptimizerState {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  Params velocity;  // mirrors Network::params once the first step runs

  OptimizerState() = default;
  OptimizerState(double lr_, double momentum_, double weight_decay_)
      : lr(lr_), momentum(momentum_), weight_decay(weight_decay_) {}
};

/// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
/// With a mask, masked entries of w, g and v are zero before and after the
/// update. Throws NumericError (leaving everything untouched) on non-finite g.
void sgd_step(Network& net, const Params& grads, OptimizerState& opt,
              const ParamMask* mask = nullptr);

}  // namespace dapperfl
