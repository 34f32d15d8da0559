#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlq/field.hpp"
#include "mlq/params.hpp"
#include "mlq/surface.hpp"

namespace mlq {

enum class Normalization { variance_subtraction, log_eps };
enum class CutoffKind { epsilon, scale };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

struct Cutoff {
  CutoffKind kind = CutoffKind::scale;
  double value = 0;  // eps, or t with eps = e^{-t}

  double epsilon() const;
  std::string describe() const;
};

/// eps >= 2 cell sizes (t <= log(side / (2h)) for scale cutoffs).
void validate_cutoff(const SurfaceModel& s, const Cutoff& c);

// A regularized field sample together with its pointwise variance.
struct RegularizedField {
  GridField values;
  std::vector<double> variance;
  Cutoff cutoff;
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
};

// Paired GMC masses and derivative-GMC values per cell.
//   variance_subtraction: G = e^{gX - g^2 Var/2} dmu,  D = (gX - g^2 Var) e^{gX - g^2 Var/2} dmu
//   log_eps:              G = eps^{g^2/2} e^{gX} dmu,   D = eps^{g^2/2} (gX + g^2 log eps) e^{gX} dmu
// dmu = base measure per cell (dv_g times an optional region weight).
struct ChaosSample {
  std::vector<double> gmc_cells;
  std::vector<double> dgmc_cells;
  double gamma = 0;
  Cutoff cutoff;
  Normalization normalization = Normalization::variance_subtraction;
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  double total_gmc = 0;
  double total_dgmc = 0;
};

/// GMC for gamma in (0, 2). `region` (optional) multiplies the volume form.
ChaosSample gmc(const SurfaceModel& s, const RegularizedField& x, double gamma,
                Normalization norm = Normalization::variance_subtraction,
                const std::vector<double>& region = {});
/// Derivative GMC; gamma in (0, sqrt 2), warns for gamma >= 1.
ChaosSample dgmc(const SurfaceModel& s, const RegularizedField& x, double gamma,
                 Normalization norm = Normalization::variance_subtraction,
                 const std::vector<double>& region = {});

/// Phi = -(2 / G(M)) int G_g(., y) G(dy).
GridField liouville_kahler_potential(const SurfaceModel& s, const ChaosSample& chaos);

struct ActionBreakdown {
  double t1 = 0;  // -8 pi (1-h) G^{-2} int int G_g dG dG
  double t2 = 0;  // -2 G^{-1} int int (8 pi (1-h)/V_g - K_g) G_g dv_g dG
  double t3 = 0;  // 2/(1 - g^2/4) D/G
  double t4 = 0;  // 2 g c / (1 - g^2/4)
  double value() const { return t1 + t2 + t3 + t4; }
};

/// Quantum Mabuchi action of c + X_g. params.genus must match the surface.
ActionBreakdown quantum_mabuchi_action(const SurfaceModel& s, const ChaosSample& chaos, double c,
                                       const ModelParams& params);
/// T1 + T3.
double p_gamma(const SurfaceModel& s, const ChaosSample& chaos, const ModelParams& params);

struct Estimate {
  double value = 0;
  double stderr_ = 0;
  std::size_t n = 0;
};

/// Monte Carlo estimate of E[exp(-alpha D/G)] from (D, G) pairs.
Estimate ratio_exp_moment(const std::vector<double>& d, const std::vector<double>& g, double alpha);

/// exponent of the cellwise ratio E[Ghat]/E[G] for omega = c: c from the volume
/// form plus gamma^2 c / 4 from the shrunken circle radius.
double metric_weight_exponent(double gamma, double c);

/// Builds g- and ghat-regularized chaos (log-eps normalization, circle radii
/// eps and eps e^{-omega/2}, volume forms v_g and v_ghat) from common GFF
/// samples and reports, per eps, the mean absolute residual over blocks of
///   log(Ghat(B) / int_B e^{gQ omega/2} dG)  and
///   (Dhat(B) - int_B e^{gQ omega/2} (dD + g^2/2 omega dG)) / int_B e^{gQ omega/2} dG.
FitReport metric_regularization_ratio(const SurfaceModel& s, const GridField& omega, double gamma,
                                      const std::vector<double>& eps, std::uint64_t seed, int samples,
                                      int blocks = 8);

// Cells of a disk of radius r around a cell centre, with the area fraction of
// each cell inside the disk (boundary cells subsampled).
struct BallStencil {
  std::vector<int> di, dj;
  std::vector<double> weight;
  double radius = 0;
};
BallStencil ball_stencil(const SurfaceModel& s, double r, int subsample = 16);
/// Mass of the disk around cell (i, j) under the cell measure (torus, periodic).
double ball_mass(const SurfaceModel& s, const std::vector<double>& cells, int i, int j, const BallStencil& b);

}  // namespace mlq
