#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mlq/surface.hpp"

namespace mlq {

enum class KernelKind { gaussian_bump, heat_kernel };
// decaying: Q_u(x,y) = exp(-(e^u |x-y| / 2)^2), correlation length e^{-u}.
// growing:  Q_u(x,y) = exp(-(|x-y| / (2 e^u))^2), the variant with growing
//           length; kept only to demonstrate that it is not log-correlated.
enum class LengthConvention { decaying, growing };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

// Scale decomposition E[X_t(x) X_s(y)] = int_0^{t^s} Q_u(x,y) du. The gaussian
// bump is periodized on the torus (zero mode removed) and is not defined on the
// square. The heat kernel uses Q_u = 4 pi e^{-2u} p(e^{-2u}) + 2 pi Gbar 1_{u<1}
// on the surface's own eigenbasis, so that X_infinity is the GFF.
struct KernelFamily {
  KernelKind kind = KernelKind::gaussian_bump;
  LengthConvention convention = LengthConvention::decaying;
  double t_max = 12.0;

  void validate(const SurfaceModel& s) const;
};

/// Modal variances (orthonormal eigenbasis of the flat carrier) of the GFF,
/// whose covariance is 2 pi G.
std::vector<double> gff_variance(const SurfaceModel& s);
/// Modal spectral density of Q_u.
std::vector<double> kernel_density(const SurfaceModel& s, const KernelFamily& k, double u);
/// Modal variances of int_{u_lo}^{u_hi} Q_u du (closed form per mode).
std::vector<double> band_variance(const SurfaceModel& s, const KernelFamily& k, double u_lo, double u_hi);
/// sum_c m[c] e_c(x) e_c(y) over the full spectrum: the lattice kernel with
/// modal weights m, between cells x and y.
double modal_kernel(const SurfaceModel& s, const std::vector<double>& m, std::size_t x, std::size_t y);
/// Pointwise variance sum_c m[c] e_c(x)^2 for every cell.
std::vector<double> cell_variance(const SurfaceModel& s, const std::vector<double>& m);
/// K_t(x, y) on the lattice.
double kernel_covariance(const SurfaceModel& s, const KernelFamily& k, double t, std::size_t x, std::size_t y);

struct KernelDiagnostics {
  double min_gram_eigenvalue = 0;     // over all sampled Gram matrices of Q_u
  double diagonal_at_tmax = 0;        // Q_{t_max}(x, x), tends to 1
  double max_log_deviation = 0;       // sup |K_t(x,y) - min(t, log+ 1/|x-y|)|
  double max_tail_density = 0;        // sup_{|x-y| >= side/4} |Q_{t_max}(x,y)|
};
/// Sampled check of the white-noise decomposition assumptions.
KernelDiagnostics kernel_diagnostics(const SurfaceModel& s, const KernelFamily& k, std::uint64_t seed = 1);

/// Zero-average GFF (torus, zero g-mean) or zero-boundary GFF (square).
GridField sample_gff(const SurfaceModel& s, std::uint64_t seed, std::uint64_t sample = 0);
/// Field with the given modal variances, driven by the (seed, sample, stream)
/// normal sequence. Fields sharing the key are coupled through the same noise.
GridField sample_modal(const SurfaceModel& s, const std::vector<double>& variance, std::uint64_t seed,
                       std::uint64_t sample, std::uint32_t stream);

/// Average of the bilinear interpolant of X over n_theta points of the circle
/// of radius eps around x. Requires eps >= 2 cell sizes.
double circle_average(const SurfaceModel& s, const GridField& x_field, std::array<double, 2> x, double eps,
                      int n_theta = 64);
/// Same on the circle of the metric e^omega g: radius eps * e^{-omega(x)/2}.
double metric_circle_average(const SurfaceModel& s, const GridField& x_field, const GridField& omega,
                             std::array<double, 2> x, double eps, int n_theta = 64);
/// Bilinear interpolation (periodic on the torus, zero boundary on the square).
double interpolate(const SurfaceModel& s, const GridField& f, std::array<double, 2> x);
/// Modal multiplier of the exact circle average on the torus, J0(|k| eps)
/// (translation invariant, applied to every point at once).
std::vector<double> circle_average_multiplier(const SurfaceModel& s, double eps);
/// Variance of the circle-averaged GFF at any point of the flat torus.
double circle_average_variance(const SurfaceModel& s, double eps);
/// Intercept W of Var X_eps(x) = -log eps + W, fitted over eps in [4h, side/8].
double circle_average_intercept(const SurfaceModel& s);
/// Intercept W of K_t(x,x) = t + W, fitted over t in [t_lo, t_hi].
double scale_field_intercept(const SurfaceModel& s, const KernelFamily& k, double t_lo, double t_hi);

struct ScaleFieldSample {
  std::vector<double> edges;            // 0 = u_0 < u_1 < ... < u_B = t
  std::vector<GridField> increments;    // one per band
  GridField field;                      // X_t
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  KernelFamily kernel;
};

/// X_t as a sum of independent band layers of width band_width; each band
/// uses the exact integral of Q_u over the band.
ScaleFieldSample sample_scale_field(const SurfaceModel& s, const KernelFamily& k, double t, std::uint64_t seed,
                                    std::uint64_t sample = 0, double band_width = 0.05);

// Nested fields X_{t_1}, ..., X_{t_m} from shared increments, one band per
// interval between consecutive cutoffs.
class ScaleFieldSampler {
 public:
  ScaleFieldSampler(const SurfaceModel& s, KernelFamily k, std::vector<double> cutoffs);
  std::vector<GridField> fields(std::uint64_t seed, std::uint64_t sample) const;
  const std::vector<double>& cutoffs() const { return cutoffs_; }
  /// K_t(x, x) per cell at each cutoff.
  const std::vector<std::vector<double>>& variances() const { return variances_; }
  const SurfaceModel& surface() const { return s_; }

 private:
  SurfaceModel s_;
  KernelFamily k_;
  std::vector<double> cutoffs_;
  std::vector<std::vector<double>> bands_;
  std::vector<std::vector<double>> variances_;
};

/// X - (sum w X) / (sum w). Weights must be nonnegative with positive total.
GridField recenter(const GridField& x, const GridField& weight);

/// Writes `path`.bin (float64 little endian, row-major) and `path`.json sidecar.
void export_field(const std::string& path, const GridField& f, const std::string& sidecar_json);

}  // namespace mlq
