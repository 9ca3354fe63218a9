#pragma once

#include <cstddef>

namespace dapperfl {

/// Fusion factor schedule: alpha_t = max((1 - epsilon)^(t-1) * alpha0, alpha_min).
struct FusionSchedule {
  double alpha0 = 0.9;
  double alpha_min = 0.1;
  double epsilon = 0.2;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Local-training and federation hyperparameters. Defaults follow the
/// reference evaluation settings.
struct HyperParams {
  FusionSchedule fusion;
  double gamma = 0.01;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int local_epochs = 5;
  int rounds = 100;
  std::size_t batch_size = 64;

  void validate() const;
};

}  // namespace dapperfl
