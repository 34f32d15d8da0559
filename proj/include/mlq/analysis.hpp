#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mlq/field.hpp"
#include "mlq/report.hpp"
#include "mlq/surface.hpp"

namespace mlq {

struct Interval {
  double lo = 0;
  double hi = 0;
};

/// Wilson score interval for k successes out of n.
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);
/// `points` geometrically spaced values from lo to hi (both > 0).
std::vector<double> geometric_grid(double lo, double hi, int points = 12);
/// Linear-interpolated empirical quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double p);
/// sup |F_n - F|.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

/// P(D < -v) on a threshold grid (default: 12 geometric points between the
/// 0.2 and 1e-4 quantiles of -D), Wilson intervals, fit of log P against v^2,
/// and the v-linear model for comparison (values r2_linear, r2_quadratic).
/// Thresholds with fewer than min_hits exceedances are dropped with a warning.
FitReport left_tail_dgmc(const std::vector<double>& d, std::vector<double> thresholds = {},
                         std::size_t min_hits = 20);

/// P(G <= s) for the recentered ensemble on an s grid (default: 12 geometric
/// points between its 1e-4 and 0.2 quantiles), regression of log(-log P)
/// against log(1/s) over thresholds with at least min_hits hits, slope
/// compared to 4/gamma^2. `plain` (same samples without recentering, may be
/// empty) gives the contrast: value lighter_everywhere = 1 when
/// P_recentered(<= s) <= P_plain(<= s) on every retained s.
FitReport small_dev_gmc(const std::vector<double>& recentered, const std::vector<double>& plain, double gamma,
                        std::vector<double> s_grid = {}, std::size_t min_hits = 20);

// One quantity evaluated on an ensemble at one cutoff. Pairing needs the same
// seed and the same sample indices at every cutoff.
struct CutoffSeries {
  double cutoff = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;
};

/// RMS of paired differences between consecutive cutoffs (increasing), with
/// the mean square and its standard error per pair (values ms_i, ms_se_i).
/// Value decreasing = 1 when the RMS strictly decreases.
FitReport convergence_diagnostic(const std::vector<CutoffSeries>& series);

/// Zero-mean Green function of the continuum square torus of side L, from
/// the Jacobi theta function (additive constant fixed by a heat-kernel
/// quadrature at the half-period point).
class TorusGreen {
 public:
  explicit TorusGreen(double side);
  double operator()(double x, double y) const;
  /// lim_{r->0} 2 pi G(r) + log r.
  double log_constant() const { return c0_; }
  double side() const { return L_; }

 private:
  double raw(double x, double y) const;
  double L_;
  double shift_ = 0;
  double c0_ = 0;
};

/// 2 pi G(x, y) by quadrature of the heat kernel over time (slow; oracle for TorusGreen).
double torus_green_heat(double side, double x, double y);

/// E[G(A)^q] for the limiting GMC of the GFF with covariance 2 pi G on the
/// flat torus of the surface, A = [0, a L]^2 (a = 1 whole torus, else a <= 1/2).
/// q = 1 gives |A|; q = 2 is the double integral of e^{gamma^2 2 pi G},
/// computed in polar coordinates around the diagonal with the log law
/// absorbed into the substitution. q = 2 needs gamma^2 < 2.
double moment_oracle(const SurfaceModel& s, double gamma, int q, double a = 1.0);

/// K(., x) on the lattice for modal variances m (flat torus).
std::vector<double> kernel_row(const SurfaceModel& s, const std::vector<double>& m, std::size_t x = 0);

/// Lattice oracle for the paired second moment of variance-subtracted DGMC
/// over the whole torus at scale cutoffs t < t2:
///   E[(D_t - D_t2)^2] = sum_{x,y} mu_x mu_y [F(K_t2(x,y)) - F(K_t(x,y))],
///   F(c) = e^{g^2 c} g^2 c (1 + g^2 c).
double dgmc_difference_oracle(const SurfaceModel& s, const KernelFamily& k, double gamma, double t, double t2);
/// Lattice second moment of G_t(M): sum mu_x mu_y e^{g^2 K_t(x,y)}.
double gmc_second_moment_lattice(const SurfaceModel& s, const std::vector<double>& modal_variance, double gamma);

}  // namespace mlq
