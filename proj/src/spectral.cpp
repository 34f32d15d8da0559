#include "mlq/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>

#include "mlq/common.hpp"

namespace mlq {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwBuffer {
  T* p;
  explicit FftwBuffer(std::size_t count) : p(static_cast<T*>(fftw_malloc(sizeof(T) * count))) {
    if (!p) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(p); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace

struct Spectral::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

Spectral::Spectral(SurfaceKind kind, int n, double side)
    : kind_(kind), n_(n), side_(side), plans_(std::make_unique<Plans>()) {
  if (n < 2 || n % 2 != 0) throw ConfigError("grid size must be even and >= 2");
  if (!(side > 0)) throw ConfigError("side length must be positive");
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (kind == SurfaceKind::flat_torus) {
    const int nb = n / 2 + 1;
    eig_.resize(static_cast<std::size_t>(n) * nb);
    const double k0 = kTwoPi / side;
    for (int a = 0; a < n; ++a) {
      const int ma = a <= n / 2 ? a : a - n;
      for (int b = 0; b < nb; ++b)
        eig_[static_cast<std::size_t>(a) * nb + b] = k0 * k0 * (double(ma) * ma + double(b) * b);
    }
    FftwBuffer<double> r(nn);
    FftwBuffer<fftw_complex> c(eig_.size());
    plans_->forward = fftw_plan_dft_r2c_2d(n, n, r.p, c.p, FFTW_ESTIMATE);
    plans_->backward = fftw_plan_dft_c2r_2d(n, n, c.p, r.p, FFTW_ESTIMATE);
  } else {
    eig_.resize(nn);
    const double k0 = kPi / side;
    for (int p = 1; p <= n; ++p)
      for (int q = 1; q <= n; ++q)
        eig_[static_cast<std::size_t>(p - 1) * n + (q - 1)] = k0 * k0 * (double(p) * p + double(q) * q);
    FftwBuffer<double> a(nn), b(nn);
    plans_->forward = fftw_plan_r2r_2d(n, n, a.p, b.p, FFTW_RODFT10, FFTW_RODFT10, FFTW_ESTIMATE);
    plans_->backward = fftw_plan_r2r_2d(n, n, a.p, b.p, FFTW_RODFT01, FFTW_RODFT01, FFTW_ESTIMATE);
  }
  if (!plans_->forward || !plans_->backward) throw NumericalError("FFTW planning failed");
}

Spectral::~Spectral() = default;

std::shared_ptr<const Spectral> Spectral::get(SurfaceKind kind, int n, double side) {
  static std::mutex cache_mutex;
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const Spectral>> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto key = std::make_tuple(static_cast<int>(kind), n, side);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto s = std::make_shared<const Spectral>(kind, n, side);
  cache.emplace(key, s);
  return s;
}

std::pair<int, int> Spectral::wavenumber(std::size_t c) const {
  if (kind_ == SurfaceKind::flat_torus) {
    const int nb = n_ / 2 + 1;
    const int a = static_cast<int>(c / nb), b = static_cast<int>(c % nb);
    return {a <= n_ / 2 ? a : a - n_, b};
  }
  return {static_cast<int>(c / n_) + 1, static_cast<int>(c % n_) + 1};
}

int Spectral::weight(std::size_t c) const {
  if (kind_ != SurfaceKind::flat_torus) return 1;
  const int b = static_cast<int>(c % (n_ / 2 + 1));
  return (b == 0 || b == n_ / 2) ? 1 : 2;
}

bool Spectral::self_conjugate(std::size_t c) const {
  if (kind_ != SurfaceKind::flat_torus) return true;
  const int nb = n_ / 2 + 1;
  const int a = static_cast<int>(c / nb), b = static_cast<int>(c % nb);
  return (b == 0 || b == n_ / 2) && (a == 0 || a == n_ / 2);
}

std::size_t Spectral::normal_count() const { return static_cast<std::size_t>(n_) * n_; }

void Spectral::apply(const std::vector<double>& m, const double* in, double* out) const {
  const std::size_t nn = static_cast<std::size_t>(n_) * n_;
  FftwBuffer<double> r(nn);
  std::copy(in, in + nn, r.p);
  if (kind_ == SurfaceKind::flat_torus) {
    FftwBuffer<fftw_complex> c(eig_.size());
    fftw_execute_dft_r2c(plans_->forward, r.p, c.p);
    const double scale = 1.0 / double(nn);
    for (std::size_t k = 0; k < eig_.size(); ++k) {
      c.p[k][0] *= m[k] * scale;
      c.p[k][1] *= m[k] * scale;
    }
    fftw_execute_dft_c2r(plans_->backward, c.p, r.p);
    std::copy(r.p, r.p + nn, out);
  } else {
    FftwBuffer<double> s(nn);
    fftw_execute_r2r(plans_->forward, r.p, s.p);
    const double scale = 1.0 / (4.0 * double(nn));
    for (std::size_t k = 0; k < nn; ++k) s.p[k] *= m[k] * scale;
    fftw_execute_r2r(plans_->backward, s.p, r.p);
    std::copy(r.p, r.p + nn, out);
  }
}

double Spectral::quadratic(const std::vector<double>& m, const double* f) const {
  const std::size_t nn = static_cast<std::size_t>(n_) * n_;
  const double h = side_ / n_;
  FftwBuffer<double> r(nn);
  std::copy(f, f + nn, r.p);
  double acc = 0.0;
  if (kind_ == SurfaceKind::flat_torus) {
    FftwBuffer<fftw_complex> c(eig_.size());
    fftw_execute_dft_r2c(plans_->forward, r.p, c.p);
    // |<f, e_m>|^2 = |F_m|^2 a^2 / V with a = h^2, V = side^2
    const double scale = h * h * h * h / (side_ * side_);
    for (std::size_t k = 0; k < eig_.size(); ++k)
      acc += weight(k) * m[k] * (c.p[k][0] * c.p[k][0] + c.p[k][1] * c.p[k][1]);
    return acc * scale;
  }
  FftwBuffer<double> s(nn);
  fftw_execute_r2r(plans_->forward, r.p, s.p);
  const double c_in = std::sqrt(2.0 / side_), c_last = std::sqrt(1.0 / side_);
  for (int p = 0; p < n_; ++p) {
    const double cp = p == n_ - 1 ? c_last : c_in;
    for (int q = 0; q < n_; ++q) {
      const double cq = q == n_ - 1 ? c_last : c_in;
      const std::size_t k = static_cast<std::size_t>(p) * n_ + q;
      const double proj = h * h * cp * cq * s.p[k] / 4.0;
      acc += m[k] * proj * proj;
    }
  }
  return acc;
}

void Spectral::synthesize(const std::vector<double>& var, const double* z, double* out) const {
  const std::size_t nn = static_cast<std::size_t>(n_) * n_;
  FftwBuffer<double> r(nn);
  if (kind_ == SurfaceKind::flat_torus) {
    const int nb = n_ / 2 + 1;
    const double inv_v = 1.0 / (side_ * side_);
    FftwBuffer<fftw_complex> c(eig_.size());
    std::size_t used = 0;
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < nb; ++b) {
        const std::size_t k = static_cast<std::size_t>(a) * nb + b;
        const double amp = std::sqrt(var[k] * inv_v);
        const bool edge = b == 0 || b == n_ / 2;
        if (!edge) {
          c.p[k][0] = amp * z[used] * M_SQRT1_2;
          c.p[k][1] = amp * z[used + 1] * M_SQRT1_2;
          used += 2;
        } else if (a == 0 || a == n_ / 2) {
          c.p[k][0] = amp * z[used++];
          c.p[k][1] = 0.0;
        } else if (a < n_ / 2) {
          c.p[k][0] = amp * z[used] * M_SQRT1_2;
          c.p[k][1] = amp * z[used + 1] * M_SQRT1_2;
          used += 2;
        }
      }
    }
    // conjugate partners inside the b = 0 and b = n/2 columns
    for (int b : {0, n_ / 2}) {
      for (int a = n_ / 2 + 1; a < n_; ++a) {
        const std::size_t k = static_cast<std::size_t>(a) * nb + b;
        const std::size_t partner = static_cast<std::size_t>(n_ - a) * nb + b;
        c.p[k][0] = c.p[partner][0];
        c.p[k][1] = -c.p[partner][1];
      }
    }
    fftw_execute_dft_c2r(plans_->backward, c.p, r.p);
    std::copy(r.p, r.p + nn, out);
    return;
  }
  FftwBuffer<double> s(nn);
  const double c_in = std::sqrt(2.0 / side_) * 0.5, c_last = std::sqrt(1.0 / side_);
  for (int p = 0; p < n_; ++p) {
    const double cp = p == n_ - 1 ? c_last : c_in;
    for (int q = 0; q < n_; ++q) {
      const double cq = q == n_ - 1 ? c_last : c_in;
      const std::size_t k = static_cast<std::size_t>(p) * n_ + q;
      s.p[k] = std::sqrt(var[k]) * z[k] * cp * cq;
    }
  }
  fftw_execute_r2r(plans_->backward, s.p, r.p);
  std::copy(r.p, r.p + nn, out);
}

}  // namespace mlq
