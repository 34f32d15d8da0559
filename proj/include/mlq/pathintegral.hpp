#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlq/chaos.hpp"
#include "mlq/params.hpp"
#include "mlq/report.hpp"
#include "mlq/surface.hpp"

namespace mlq {

struct Susceptibility {
  double s = 0;
  double s_proof = 0;  // gamma * s
  double q = 0;
  double central_charge = 0;
  double max_beta = 0;
};

/// Validates params and evaluates s.
Susceptibility string_susceptibility(const ModelParams& p);

struct LoopRow {
  double kappa = 0;
  double gamma = 0;
  double exact = 0;       // s + 2 at gamma(kappa)
  double two_loop_minus = 0;
  double two_loop_plus = 0;
  double scaled_residual_minus = 0;  // (exact - two_loop) * kappa^2
  double scaled_residual_plus = 0;
};

struct LoopExpansion {
  std::vector<LoopRow> rows;
  double constant_term = 0;        // (19 - 7h)/6
  double constant_extrapolated = 0;  // exact - kappa^2 (h-1)/2 + 2 beta at kappa = 1e8
  std::string oracle_sign;         // "-" or "+": the sign whose scaled residual decays
  std::vector<std::string> notes;
};

/// gamma(kappa) = sqrt((3k^2-1)/6) - sqrt((3k^2-25)/6), evaluated with 50 digits.
double loop_gamma(double kappa);
/// Exact s + 2 at gamma(kappa) against the two-loop expansion with both signs
/// of the genus term at order kappa^-2. Needs kappa^2 > 25/3.
LoopExpansion loop_expansion(const std::vector<double>& kappas, double beta, int genus);

struct MLWeightRecord {
  std::uint64_t sample = 0;
  double g = 0;
  double d = 0;
  double p = 0;
  double log_w = 0;  // -beta P - s log G
  bool finite = true;
};

MLWeightRecord ml_weight(double g, double d, double p, const ModelParams& params, std::uint64_t sample = 0);
/// Record for a chaos sample on a constant-curvature torus.
MLWeightRecord ml_weight(const SurfaceModel& s, const ChaosSample& chaos, const ModelParams& params);

struct MLEstimate {
  double value = 0;
  double stderr_ = 0;
  double ess = 0;
  std::size_t used = 0;
  std::size_t excluded = 0;
  double volume_factor = 1;  // E[f(Y)], Y ~ Gamma(s, mu)
};

/// E_Gamma(s, mu)[f(Y)] by adaptive quadrature.
double gamma_expectation(const std::function<double(double)>& f, double s, double mu);

/// Self-normalized estimate of <F>/<1> for F(y, sample) = f_volume(y) * f_measure[i].
/// The volume integral is done against y^{s-1} e^{-mu y}; f_measure may be
/// empty (treated as 1). Warns when the effective sample size is below 100.
MLEstimate ml_expectation(const std::vector<MLWeightRecord>& records, const ModelParams& params,
                          const std::function<double(double)>& f_volume, const std::vector<double>& f_measure = {});

/// Draws volumes through the c-integral: c from exp(gamma s c - mu e^{gamma c} G)
/// by a tabulated inverse CDF, then y = e^{gamma c} G. Reports the KS distance
/// to Gamma(s, mu) and the first three moments against Gamma(s+k)/(Gamma(s) mu^k).
/// `masses` supplies G per draw (cycled); empty means G = 1.
FitReport volume_law_check(const ModelParams& params, std::size_t n_draws, std::uint64_t seed,
                           const std::vector<double>& masses = {});

struct WeylTerms {
  double a1 = 0, a1_green_relation = 0, a2 = 0, a3 = 0, t4 = 0;
  double lhs = 0;          // A1 + A2 + A3 + 2 gamma c/(1 - gamma^2/4)
  double action = 0;       // S_M(c + X_g, g)
  double mabuchi = 0;      // classical S_M(ghat, g)
  double rhs = 0;          // action - mabuchi
  double residual = 0;     // |lhs - rhs| / max(1, |rhs|)
};

/// A1 from the Green function of ghat (direct solve on the conformal surface),
/// A2 from K_ghat and G_ghat, A3 from D and G with the omega correction.
WeylTerms weyl_identity_check(const SurfaceModel& s, const GridField& omega, const ChaosSample& chaos, double c,
                              const ModelParams& params);

/// log det'(Delta_g) by the heat-kernel zeta method on dense lattice eigenvalues,
/// for the metric e^{w} times the surface metric. t0 splits exact eigenvalues
/// from the small-time expansion V/(4 pi t) + chi/6 - 1 + t int K^2/(240 pi).
double log_det_laplacian(const SurfaceModel& s, const GridField& w, double t0 = 0.005);

/// Polyakov check for omega_tau = tau omega, tau in +-amplitudes.
FitReport polyakov_check(const SurfaceModel& s, const GridField& omega, const std::vector<double>& amplitudes,
                         double t0 = 0.005);

}  // namespace mlq
