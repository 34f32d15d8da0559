#pragma once

#include <cstddef>
#include <memory>
#include <vector>

namespace mlq {

enum class SurfaceKind { flat_torus, dirichlet_square };

// Diagonalizing transform of the flat Laplacian on an n x n grid.
//
// flat_torus: periodic grid x_i = i*h, complex Fourier modes in FFTW half-plane
//   layout (n x (n/2+1)); coefficient c = a*(n/2+1) + b carries wave numbers
//   m = (a <= n/2 ? a : a-n, b). The Nyquist row/column is kept.
// dirichlet_square: cell-centred grid x_i = (i+1/2)*h, sine modes p, q = 1..n,
//   coefficient c = (p-1)*n + (q-1).
//
// Eigenvalues are those of -Delta on the continuum modes (k^2), so the grid
// operator is the spectral (band-limited) Laplacian. All methods are const and
// safe to call concurrently.
class Spectral {
 public:
  Spectral(SurfaceKind kind, int n, double side);
  ~Spectral();
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  /// Shared instance per (kind, n, side); plans are built once.
  static std::shared_ptr<const Spectral> get(SurfaceKind kind, int n, double side);

  SurfaceKind kind() const { return kind_; }
  int n() const { return n_; }
  double side() const { return side_; }
  std::size_t modes() const { return eig_.size(); }
  const std::vector<double>& eigenvalues() const { return eig_; }
  /// Integer wave numbers of coefficient c (torus: signed; square: p, q >= 1).
  std::pair<int, int> wavenumber(std::size_t c) const;
  /// 2 when coefficient c stands for itself and an implicit conjugate partner
  /// (torus, 0 < b < n/2), else 1.
  int weight(std::size_t c) const;
  /// Torus only: whether c is its own conjugate (real coefficient).
  bool self_conjugate(std::size_t c) const;

  /// out = sum_c m[c] * P_c(in), P_c the orthogonal projector onto mode c.
  void apply(const std::vector<double>& multiplier, const double* in, double* out) const;

  /// sum_c |<f, e_c>|^2 m[c] with e_c orthonormal for the cell-area inner
  /// product (cell area = side^2 / n^2). Equals <f, M f>.
  double quadratic(const std::vector<double>& multiplier, const double* f) const;

  /// Synthesize sum_c sqrt(var[c]) * xi_c * e_c with e_c orthonormal and xi
  /// standard normal. normals must hold normal_count() values, consumed in
  /// coefficient order (torus: two per non-self-conjugate mode).
  void synthesize(const std::vector<double>& variance, const double* normals, double* out) const;
  std::size_t normal_count() const;

 private:
  struct Plans;
  SurfaceKind kind_;
  int n_;
  double side_;
  std::vector<double> eig_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace mlq
