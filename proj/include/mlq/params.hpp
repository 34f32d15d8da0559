#pragma once

#include <string>

namespace mlq {

// Coupling constants of the Mabuchi+Liouville theory.
struct ModelParams {
  double gamma = 0;
  double beta = 0;
  double mu = 1;
  int genus = 2;

  /// Q = gamma/2 + 2/gamma.
  double Q() const { return gamma / 2 + 2 / gamma; }
  /// c_L = 1 + 6 Q^2.
  double central_charge() const { return 1 + 6 * Q() * Q(); }
  /// Upper bound on beta for a finite total mass: (h-1)/2 (4/gamma^2 - gamma^2/4).
  double max_beta() const;
  /// s = (2Q/gamma)(h-1) - 2 beta / (1 - gamma^2/4).
  double s() const;
  /// gamma * s, the exponent convention used in the finite-mass computation.
  double s_proof() const { return gamma * s(); }

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
};

}  // namespace mlq
