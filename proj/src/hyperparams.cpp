#include "dapperfl/hyperparams.hpp"

#include <cmath>
#include <string>

#include "dapperfl/errors.hpp"

namespace dapperfl {

void FusionSchedule::validate() const {
  if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw ConfigError("alpha0 must lie in (0, 1]");
  if (!(alpha_min > 0.0 && alpha_min <= alpha0)) throw ConfigError("alpha_min must lie in (0, alpha0]");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
}

void HyperParams::validate() const {
  fusion.validate();
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be a nonnegative number");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a nonnegative number");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be nonnegative");
  if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
  if (rounds < 0) throw ConfigError("rounds must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

}  // namespace dapperfl
