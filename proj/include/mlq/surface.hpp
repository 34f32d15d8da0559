#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlq/common.hpp"
#include "mlq/grid.hpp"
#include "mlq/report.hpp"
#include "mlq/spectral.hpp"

namespace mlq {

std::string to_string(SurfaceKind kind);
SurfaceKind surface_kind_from_string(const std::string& s);

// Flat carrier (torus of side L or Dirichlet square) with background metric
// g = e^{omega0} g_flat and a parametric genus h that only sets the constant
// curvature Kbar = 4 pi (2 - 2h) / V. Curvature of g is
// K_g = e^{-omega0} (Kbar - Delta_flat omega0), so discrete Gauss-Bonnet holds
// exactly. Immutable after construction.
class SurfaceModel {
 public:
  SurfaceModel(SurfaceKind kind, int n, double area, int genus,
               std::vector<double> omega0 = {});

  SurfaceKind kind() const { return kind_; }
  bool is_torus() const { return kind_ == SurfaceKind::flat_torus; }
  int n() const { return n_; }
  std::size_t cells() const { return static_cast<std::size_t>(n_) * n_; }
  double area() const { return area_; }
  double side() const { return side_; }
  double spacing() const { return side_ / n_; }
  double cell_area() const { return area_ / (double(n_) * n_); }
  int genus() const { return genus_; }
  double euler_characteristic() const { return 2.0 - 2.0 * genus_; }
  double curvature_constant() const { return 4.0 * kPi * euler_characteristic() / area_; }
  std::uint64_t id() const { return id_; }

  /// V_g = sum e^{omega0} * cell area.
  double volume() const { return volume_; }
  const std::vector<double>& background() const { return omega0_; }
  /// e^{omega0} * cell area per cell.
  const std::vector<double>& cell_volume() const { return cell_volume_; }
  const GridField& curvature() const { return curvature_; }
  const Spectral& spectral() const { return *spectral_; }

  std::array<double, 2> point(std::size_t cell) const;
  std::array<double, 2> point(int i, int j) const;

  GridField make_field(std::vector<double> values, bool zero_mean = false) const;
  GridField constant(double c) const;
  void check_field(const GridField& f) const;

  /// Integral against dv_g.
  double integrate(const GridField& f) const;
  /// Mean against dv_g.
  double mean(const GridField& f) const;
  /// Laplace-Beltrami operator of g (negative semi-definite).
  GridField laplacian(const GridField& u) const;
  /// -Delta_g u = f - mean_g(f), mean_g(u) = 0 on the torus; -Delta_g u = f with
  /// zero boundary values on the square.
  GridField green_apply(const GridField& f) const;
  /// Column G_g(., x_cell) of the Green kernel (kernel w.r.t. dv_g).
  GridField green_column(std::size_t cell) const;
  /// Metric e^{omega} g.
  SurfaceModel conformal(const GridField& omega) const;

 private:
  SurfaceKind kind_;
  int n_;
  double area_;
  double side_;
  int genus_;
  std::vector<double> omega0_;
  std::vector<double> cell_volume_;
  double volume_ = 0.0;
  GridField curvature_;
  std::uint64_t id_ = 0;
  std::shared_ptr<const Spectral> spectral_;
};

SurfaceModel build_surface(SurfaceKind kind, int n, double area, int genus,
                           std::vector<double> omega0 = {});

GridField green_apply(const SurfaceModel& s, const GridField& f);

/// Green's function behaves like -(1/2pi) log d near the diagonal. Fits G
/// against log d over d in [2/N, 0.1] (in units of the side) along axis and
/// diagonal directions from a fixed source. `column` overrides the kernel under
/// test; it must have zero g-mean or the check throws.
FitReport near_diagonal_check(const SurfaceModel& s,
                              const std::function<GridField(std::size_t)>& column = {});

/// Removes spectral content above |m| = N/4 and warns when the removed energy
/// is not negligible. Returns the filtered field.
GridField bandlimit(const SurfaceModel& s, const GridField& omega, double* removed_fraction = nullptr);

/// S_L^{cl,0}(e^omega g, g) = int (|d omega|^2 + 2 K_g omega) dv_g.
double classical_liouville(const SurfaceModel& s, const GridField& omega);
/// Zero-mean Kahler potential of the measure rho (cell masses):
/// phi = -(2 / rho(M)) int G_g(., y) rho(dy). Torus only.
GridField kahler_potential(const SurfaceModel& s, const std::vector<double>& rho_cells);
/// int (phi Delta phi / 4 + phi / V_g) dv_g.
double aubin_yau(const SurfaceModel& s, const GridField& phi);
/// Mabuchi K-energy S_M^cl(e^omega g, g). Torus only.
double classical_mabuchi(const SurfaceModel& s, const GridField& omega);
/// K_{e^omega g} = e^{-omega} (K_g - Delta_g omega).
GridField curvature_conformal(const SurfaceModel& s, const GridField& omega);

/// Max-norm residual of G_ghat(x,y) - G_g(x,y) - (phi(x)+phi(y))/2 + S_AY(ghat,g)
/// over `sources` source cells and all targets, with G_ghat solved directly on
/// the conformal surface (no Kahler potential involved). Torus only.
double green_conformal_identity(const SurfaceModel& s, const GridField& omega, int sources = 6);

/// JSON descriptor {kind, N, V, h, omega0 (base64 float64 little endian)}.
std::string surface_to_json(const SurfaceModel& s);
SurfaceModel surface_from_json(const std::string& json);

}  // namespace mlq
