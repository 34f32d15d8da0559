#include "mlq/field.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <nlohmann/json.hpp>

#include "mlq/io.hpp"
#include "mlq/rng.hpp"

namespace mlq {

std::string to_string(KernelKind k) { return k == KernelKind::gaussian_bump ? "gaussian-bump" : "heat-kernel"; }

KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "gaussian-bump") return KernelKind::gaussian_bump;
  if (s == "heat-kernel" || s == "heat-kernel-disk") return KernelKind::heat_kernel;
  throw ConfigError("unknown kernel '" + s + "' (expected gaussian-bump or heat-kernel)");
}

void KernelFamily::validate(const SurfaceModel& s) const {
  if (!(t_max > 0)) throw ConfigError("kernel t_max must be positive");
  if (kind == KernelKind::gaussian_bump && !s.is_torus())
    throw ConfigError("gaussian-bump kernel is translation invariant and needs the flat torus");
  if (kind == KernelKind::heat_kernel && convention == LengthConvention::growing)
    throw ConfigError("growing-length convention applies to the gaussian bump only");
}

std::vector<double> gff_variance(const SurfaceModel& s) {
  const auto& lam = s.spectral().eigenvalues();
  std::vector<double> v(lam.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = lam[c] > 0 ? kTwoPi / lam[c] : 0.0;
  return v;
}

std::vector<double> kernel_density(const SurfaceModel& s, const KernelFamily& k, double u) {
  k.validate(s);
  const auto& lam = s.spectral().eigenvalues();
  std::vector<double> d(lam.size(), 0.0);
  for (std::size_t c = 0; c < d.size(); ++c) {
    const double l = lam[c];
    if (l <= 0) continue;
    if (k.convention == LengthConvention::growing) {
      d[c] = 4 * kPi * std::exp(2 * u) * std::exp(-l * std::exp(2 * u));
      continue;
    }
    d[c] = 4 * kPi * std::exp(-2 * u) * std::exp(-l * std::exp(-2 * u));
    if (k.kind == KernelKind::heat_kernel && u <= 1.0) d[c] += kTwoPi * std::exp(-l) / l;
  }
  return d;
}

std::vector<double> band_variance(const SurfaceModel& s, const KernelFamily& k, double a, double b) {
  k.validate(s);
  if (a < 0 || b < a) throw ConfigError("scale band must satisfy 0 <= u_lo <= u_hi");
  const auto& lam = s.spectral().eigenvalues();
  std::vector<double> v(lam.size(), 0.0);
  const double overlap = std::max(0.0, std::min(b, 1.0) - std::min(a, 1.0));
  for (std::size_t c = 0; c < v.size(); ++c) {
    const double l = lam[c];
    if (l <= 0) continue;
    // int 4 pi e^{-2u} e^{-l e^{-2u}} du = (2 pi / l) [e^{-l e^{-2u}}]
    if (k.convention == LengthConvention::growing) {
      v[c] = kTwoPi / l * (std::exp(-l * std::exp(2 * a)) - std::exp(-l * std::exp(2 * b)));
      continue;
    }
    // e^{-xb} - e^{-xa} with xa >= xb, written to avoid cancellation near 1
    const double xa = l * std::exp(-2 * a), xb = l * std::exp(-2 * b);
    v[c] = -kTwoPi / l * std::exp(-xb) * std::expm1(-(xa - xb));
    if (k.kind == KernelKind::heat_kernel) v[c] += kTwoPi * std::exp(-l) / l * overlap;
  }
  return v;
}

namespace {

double basis_product(const SurfaceModel& s, std::size_t c, std::size_t x, std::size_t y) {
  const Spectral& sp = s.spectral();
  const int n = s.n();
  auto [a, b] = sp.wavenumber(c);
  const int xi = static_cast<int>(x / n), xj = static_cast<int>(x % n);
  const int yi = static_cast<int>(y / n), yj = static_cast<int>(y % n);
  if (s.is_torus()) {
    const double phase = kTwoPi * (double(a) * (xi - yi) + double(b) * (xj - yj)) / n;
    return sp.weight(c) * std::cos(phase) / s.area();
  }
  const double L = s.side();
  auto phi = [&](int p, int i) {
    if (p == n) return std::sqrt(1.0 / L) * ((i % 2) ? -1.0 : 1.0);
    return std::sqrt(2.0 / L) * std::sin(kPi * p * (i + 0.5) / n);
  };
  return phi(a, xi) * phi(b, xj) * phi(a, yi) * phi(b, yj);
}

}  // namespace

double modal_kernel(const SurfaceModel& s, const std::vector<double>& m, std::size_t x, std::size_t y) {
  double acc = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c)
    if (m[c] != 0.0) acc += m[c] * basis_product(s, c, x, y);
  return acc;
}

std::vector<double> cell_variance(const SurfaceModel& s, const std::vector<double>& m) {
  if (s.is_torus()) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.size(); ++c) acc += s.spectral().weight(c) * m[c];
    return std::vector<double>(s.cells(), acc / s.area());
  }
  const int n = s.n();
  const double L = s.side();
  Eigen::MatrixXd phi2(n, n), mm(n, n);
  for (int i = 0; i < n; ++i)
    for (int p = 1; p <= n; ++p) {
      const double v = p == n ? 1.0 / L : 2.0 / L * std::pow(std::sin(kPi * p * (i + 0.5) / n), 2);
      phi2(i, p - 1) = v;
    }
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) mm(p, q) = m[static_cast<std::size_t>(p) * n + q];
  const Eigen::MatrixXd var = phi2 * mm * phi2.transpose();
  std::vector<double> out(s.cells());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = var(i, j);
  return out;
}

double kernel_covariance(const SurfaceModel& s, const KernelFamily& k, double t, std::size_t x, std::size_t y) {
  return modal_kernel(s, band_variance(s, k, 0.0, t), x, y);
}

KernelDiagnostics kernel_diagnostics(const SurfaceModel& s, const KernelFamily& k, std::uint64_t seed) {
  k.validate(s);
  KernelDiagnostics d;
  d.min_gram_eigenvalue = std::numeric_limits<double>::infinity();
  Philox4x32 rng(seed, 0, 0x6b65726eu);
  const int pts = 24;
  const int n = s.n();
  std::vector<std::size_t> cells(pts);
  for (double u : {0.5, 2.0, 4.0, std::min(k.t_max, 6.0)}) {
    const auto q = kernel_density(s, k, u);
    for (int rep = 0; rep < 2; ++rep) {
      for (auto& c : cells) c = static_cast<std::size_t>(rng.uniform() * s.cells()) % s.cells();
      std::sort(cells.begin(), cells.end());
      cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
      Eigen::MatrixXd gram(cells.size(), cells.size());
      for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = modal_kernel(s, q, cells[i], cells[j]);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
      d.min_gram_eigenvalue = std::min(d.min_gram_eigenvalue, es.eigenvalues().minCoeff());
      cells.resize(pts);
    }
  }
  const std::size_t origin = static_cast<std::size_t>(n / 2) * n + n / 2;
  const auto qmax = kernel_density(s, k, k.t_max);
  d.diagonal_at_tmax = modal_kernel(s, qmax, origin, origin);
  const double h = s.spacing();
  for (int step = 1; step <= n / 4; step *= 2) {
    const std::size_t y = origin + static_cast<std::size_t>(step) * n;
    const double r = step * h;
    for (double t : {1.0, 2.0, 4.0, std::min(k.t_max, 6.0)}) {
      const double kt = kernel_covariance(s, k, t, origin, y);
      d.max_log_deviation = std::max(d.max_log_deviation, std::abs(kt - std::min(t, std::max(0.0, -std::log(r)))));
    }
    if (r >= 0.25 * s.side()) d.max_tail_density = std::max(d.max_tail_density, std::abs(modal_kernel(s, qmax, origin, y)));
  }
  return d;
}

GridField sample_modal(const SurfaceModel& s, const std::vector<double>& variance, std::uint64_t seed,
                       std::uint64_t sample, std::uint32_t stream) {
  const Spectral& sp = s.spectral();
  std::vector<double> z(sp.normal_count());
  Philox4x32 rng(seed, sample, stream);
  boost::random::normal_distribution<double> nd;
  for (double& v : z) v = nd(rng);
  std::vector<double> out(s.cells());
  sp.synthesize(variance, z.data(), out.data());
  return s.make_field(std::move(out), s.is_torus());
}

GridField sample_gff(const SurfaceModel& s, std::uint64_t seed, std::uint64_t sample) {
  GridField x = sample_modal(s, gff_variance(s), seed, sample, 0);
  if (s.is_torus()) {
    // zero mean for dv_g; exact already when the background is flat
    const double m = s.mean(x);
    for (double& v : x.values) v -= m;
  }
  return x;
}

double interpolate(const SurfaceModel& s, const GridField& f, std::array<double, 2> x) {
  const int n = s.n();
  const double h = s.spacing();
  if (s.is_torus()) {
    const double L = s.side();
    double gx = std::fmod(x[0], L) / h, gy = std::fmod(x[1], L) / h;
    if (gx < 0) gx += n;
    if (gy < 0) gy += n;
    int i0 = static_cast<int>(std::floor(gx)), j0 = static_cast<int>(std::floor(gy));
    const double fx = gx - i0, fy = gy - j0;
    i0 %= n;
    j0 %= n;
    const int i1 = (i0 + 1) % n, j1 = (j0 + 1) % n;
    return (1 - fx) * (1 - fy) * f(i0, j0) + fx * (1 - fy) * f(i1, j0) + (1 - fx) * fy * f(i0, j1) +
           fx * fy * f(i1, j1);
  }
  const double L = s.side();
  if (x[0] < 0 || x[0] > L || x[1] < 0 || x[1] > L) throw ConfigError("interpolation point outside the square");
  // cell-centred values, zero on the boundary
  auto at = [&](int i, int j) { return (i < 0 || j < 0 || i >= n || j >= n) ? 0.0 : f(i, j); };
  auto coord = [&](double p, int& i0, double& fr) {
    const double g = p / h - 0.5;
    i0 = static_cast<int>(std::floor(g));
    fr = g - i0;
    if (i0 < 0) fr = (p - 0.0) / (0.5 * h);        // between wall and first centre
    if (i0 >= n - 1) fr = (p - (n - 0.5) * h) / (0.5 * h);
  };
  int i0, j0;
  double fx, fy;
  coord(x[0], i0, fx);
  coord(x[1], j0, fy);
  return (1 - fx) * (1 - fy) * at(i0, j0) + fx * (1 - fy) * at(i0 + 1, j0) + (1 - fx) * fy * at(i0, j0 + 1) +
         fx * fy * at(i0 + 1, j0 + 1);
}

double circle_average(const SurfaceModel& s, const GridField& f, std::array<double, 2> x, double eps, int n_theta) {
  s.check_field(f);
  if (!(eps >= 2.0 * s.spacing() * (1 - 1e-12)))
    throw ConfigError("circle radius below grid resolution (eps < 2 cell sizes)");
  if (n_theta < 4) throw ConfigError("n_theta must be at least 4");
  double acc = 0.0;
  for (int k = 0; k < n_theta; ++k) {
    const double th = kTwoPi * k / n_theta;
    acc += interpolate(s, f, {x[0] + eps * std::cos(th), x[1] + eps * std::sin(th)});
  }
  return acc / n_theta;
}

double metric_circle_average(const SurfaceModel& s, const GridField& f, const GridField& omega,
                             std::array<double, 2> x, double eps, int n_theta) {
  return circle_average(s, f, x, eps * std::exp(-0.5 * interpolate(s, omega, x)), n_theta);
}

std::vector<double> circle_average_multiplier(const SurfaceModel& s, double eps) {
  if (!s.is_torus()) throw ConfigError("spectral circle average needs the flat torus");
  const auto& lam = s.spectral().eigenvalues();
  std::vector<double> m(lam.size());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = std::cyl_bessel_j(0.0, std::sqrt(lam[c]) * eps);
  return m;
}

double circle_average_variance(const SurfaceModel& s, double eps) {
  auto v = gff_variance(s);
  const auto m = circle_average_multiplier(s, eps);
  for (std::size_t c = 0; c < v.size(); ++c) v[c] *= m[c] * m[c];
  return cell_variance(s, v)[0];
}

double circle_average_intercept(const SurfaceModel& s) {
  std::vector<double> x, y;
  const double lo = 4 * s.spacing(), hi = s.side() / 8;
  for (int i = 0; i <= 16; ++i) {
    const double eps = lo * std::pow(hi / lo, i / 16.0);
    x.push_back(-std::log(eps));
    y.push_back(circle_average_variance(s, eps) + std::log(eps));
  }
  double acc = 0;
  for (double v : y) acc += v;
  return acc / y.size();
}

double scale_field_intercept(const SurfaceModel& s, const KernelFamily& k, double t_lo, double t_hi) {
  double acc = 0;
  const int m = 9;
  for (int i = 0; i < m; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / (m - 1);
    acc += cell_variance(s, band_variance(s, k, 0.0, t))[0] - t;
  }
  return acc / m;
}

ScaleFieldSample sample_scale_field(const SurfaceModel& s, const KernelFamily& k, double t, std::uint64_t seed,
                                    std::uint64_t sample, double band_width) {
  k.validate(s);
  if (t < 0 || t > k.t_max) throw ConfigError("scale cutoff t outside [0, t_max]");
  if (!(band_width > 0)) throw ConfigError("band width must be positive");
  ScaleFieldSample out;
  out.seed = seed;
  out.sample = sample;
  out.kernel = k;
  out.field = s.constant(0.0);
  out.field.zero_mean = s.is_torus();
  out.edges.push_back(0.0);
  const int bands = static_cast<int>(std::ceil(t / band_width - 1e-9));
  for (int b = 1; b <= bands; ++b) out.edges.push_back(std::min(t, b * band_width));
  for (std::size_t b = 0; b + 1 < out.edges.size(); ++b) {
    const double lo = out.edges[b], hi = out.edges[b + 1];
    GridField inc = sample_modal(s, band_variance(s, k, lo, hi), seed, sample, band_stream(lo, hi));
    for (std::size_t c = 0; c < s.cells(); ++c) out.field.values[c] += inc.values[c];
    out.increments.push_back(std::move(inc));
  }
  return out;
}

ScaleFieldSampler::ScaleFieldSampler(const SurfaceModel& s, KernelFamily k, std::vector<double> cutoffs)
    : s_(s), k_(k), cutoffs_(std::move(cutoffs)) {
  k_.validate(s_);
  if (cutoffs_.empty()) throw ConfigError("at least one cutoff required");
  double prev = 0.0;
  std::vector<double> total(s_.spectral().modes(), 0.0);
  for (double t : cutoffs_) {
    if (t <= prev && !(t == 0 && prev == 0)) throw ConfigError("cutoffs must be increasing and positive");
    if (t > k_.t_max) throw ConfigError("cutoff exceeds kernel t_max");
    bands_.push_back(band_variance(s_, k_, prev, t));
    for (std::size_t c = 0; c < total.size(); ++c) total[c] += bands_.back()[c];
    variances_.push_back(cell_variance(s_, total));
    prev = t;
  }
}

std::vector<GridField> ScaleFieldSampler::fields(std::uint64_t seed, std::uint64_t sample) const {
  std::vector<GridField> out;
  GridField acc = s_.constant(0.0);
  acc.zero_mean = s_.is_torus();
  double prev = 0.0;
  for (std::size_t b = 0; b < cutoffs_.size(); ++b) {
    const GridField inc = sample_modal(s_, bands_[b], seed, sample, band_stream(prev, cutoffs_[b]));
    for (std::size_t c = 0; c < s_.cells(); ++c) acc.values[c] += inc.values[c];
    out.push_back(acc);
    prev = cutoffs_[b];
  }
  return out;
}

GridField recenter(const GridField& x, const GridField& w) {
  if (x.values.size() != w.values.size()) throw ConfigError("recenter: weight grid does not match field");
  double sw = 0, swx = 0;
  for (std::size_t c = 0; c < x.values.size(); ++c) {
    if (w.values[c] < 0 || !std::isfinite(w.values[c])) throw ConfigError("recenter: weight must be nonnegative");
    sw += w.values[c];
    swx += w.values[c] * x.values[c];
  }
  if (!(sw > 0)) throw ConfigError("recenter: weight has zero total");
  const double m = swx / sw;
  GridField out = x;
  for (double& v : out.values) v -= m;
  out.zero_mean = false;
  return out;
}

void export_field(const std::string& path, const GridField& f, const std::string& sidecar_json) {
  std::string bytes(reinterpret_cast<const char*>(f.values.data()), f.values.size() * sizeof(double));
  write_file(path + ".bin", bytes);
  nlohmann::json j = sidecar_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(sidecar_json);
  j["grid"] = f.n;
  j["dtype"] = "float64-le";
  j["layout"] = "row-major i*N+j";
  j["sha256"] = sha256_hex(bytes);
  write_file(path + ".json", j.dump(2) + "\n");
}

}  // namespace mlq
