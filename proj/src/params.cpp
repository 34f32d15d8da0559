#include "mlq/params.hpp"

#include <cmath>

#include "mlq/common.hpp"
#include "mlq/io.hpp"

namespace mlq {

double ModelParams::max_beta() const {
  return (genus - 1) / 2.0 * (4 / (gamma * gamma) - gamma * gamma / 4);
}

double ModelParams::s() const {
  return 2 * Q() / gamma * (genus - 1) - 2 * beta / (1 - gamma * gamma / 4);
}

void ModelParams::validate() const {
  if (!(gamma > 0 && gamma < std::sqrt(2.0)))
    throw ConfigError("gamma must lie in (0, sqrt 2), got " + format_double(gamma));
  if (!(beta >= 0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0, got " + format_double(beta));
  if (!(mu > 0) || !std::isfinite(mu)) throw ConfigError("mu must be > 0, got " + format_double(mu));
  if (genus < 2) throw ConfigError("genus h >= 2 required, got " + std::to_string(genus));
  if (!(beta < max_beta()))
    throw ConfigError("finite-mass bound violated: beta < (h-1)/2 (4/gamma^2 - gamma^2/4) = " +
                      format_double(max_beta()) + ", got beta = " + format_double(beta));
}

}  // namespace mlq
