#include "mlq/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

#include "mlq/io.hpp"

namespace mlq {

std::string to_string(SurfaceKind kind) {
  return kind == SurfaceKind::flat_torus ? "flat-torus" : "dirichlet-square";
}

SurfaceKind surface_kind_from_string(const std::string& s) {
  if (s == "flat-torus" || s == "torus") return SurfaceKind::flat_torus;
  if (s == "dirichlet-square" || s == "square") return SurfaceKind::dirichlet_square;
  throw ConfigError("unknown surface kind '" + s + "' (expected flat-torus or dirichlet-square)");
}

namespace {

std::vector<double> inverse_laplacian_multiplier(const Spectral& sp) {
  std::vector<double> m(sp.modes());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double lam = sp.eigenvalues()[k];
    m[k] = lam > 0 ? 1.0 / lam : 0.0;
  }
  return m;
}

std::vector<double> negative_eigenvalues(const Spectral& sp) {
  std::vector<double> m(sp.eigenvalues());
  for (double& v : m) v = -v;
  return m;
}

void require_torus(const SurfaceModel& s, const char* what) {
  if (!s.is_torus())
    throw ConfigError(std::string(what) + " needs a zero-mean Green function (flat-torus only)");
}

}  // namespace

SurfaceModel::SurfaceModel(SurfaceKind kind, int n, double area, int genus,
                           std::vector<double> omega0)
    : kind_(kind), n_(n), area_(area), genus_(genus), omega0_(std::move(omega0)) {
  if (n < 8 || n % 2 != 0) throw ConfigError("grid size N must be even and >= 8");
  if (!(area > 0) || !std::isfinite(area)) throw ConfigError("total area V must be positive");
  if (genus < 2) throw ConfigError("genus h >= 2 required (hyperbolic surrogate)");
  side_ = std::sqrt(area);
  const std::size_t nn = cells();
  if (omega0_.empty()) omega0_.assign(nn, 0.0);
  if (omega0_.size() != nn) throw ConfigError("background conformal factor has wrong size");
  for (double w : omega0_)
    if (!std::isfinite(w)) throw ConfigError("background conformal factor not finite");
  spectral_ = Spectral::get(kind, n, side_);

  cell_volume_.resize(nn);
  volume_ = 0.0;
  for (std::size_t k = 0; k < nn; ++k) {
    cell_volume_[k] = std::exp(omega0_[k]) * cell_area();
    volume_ += cell_volume_[k];
  }

  std::string key = to_string(kind) + ":" + std::to_string(n) + ":" + std::to_string(genus) + ":";
  key.append(reinterpret_cast<const char*>(&area_), sizeof area_);
  key.append(reinterpret_cast<const char*>(omega0_.data()), nn * sizeof(double));
  id_ = sha256_u64(key);

  curvature_.n = n;
  curvature_.surface_id = id_;
  curvature_.values.assign(nn, curvature_constant());
  const bool flat = std::all_of(omega0_.begin(), omega0_.end(), [](double w) { return w == 0.0; });
  if (!flat) {
    std::vector<double> lap(nn);
    spectral_->apply(negative_eigenvalues(*spectral_), omega0_.data(), lap.data());
    for (std::size_t k = 0; k < nn; ++k)
      curvature_.values[k] = std::exp(-omega0_[k]) * (curvature_constant() - lap[k]);
  }
}

SurfaceModel build_surface(SurfaceKind kind, int n, double area, int genus, std::vector<double> omega0) {
  return SurfaceModel(kind, n, area, genus, std::move(omega0));
}

std::array<double, 2> SurfaceModel::point(int i, int j) const {
  const double h = spacing();
  const double off = is_torus() ? 0.0 : 0.5;
  return {(i + off) * h, (j + off) * h};
}

std::array<double, 2> SurfaceModel::point(std::size_t cell) const {
  return point(static_cast<int>(cell / n_), static_cast<int>(cell % n_));
}

GridField SurfaceModel::make_field(std::vector<double> values, bool zero_mean) const {
  if (values.size() != cells()) throw ConfigError("field size does not match surface grid");
  GridField f;
  f.n = n_;
  f.surface_id = id_;
  f.zero_mean = zero_mean;
  f.values = std::move(values);
  return f;
}

GridField SurfaceModel::constant(double c) const { return make_field(std::vector<double>(cells(), c)); }

void SurfaceModel::check_field(const GridField& f) const {
  if (f.n != n_ || f.values.size() != cells()) throw ConfigError("field grid does not match surface");
}

double SurfaceModel::integrate(const GridField& f) const {
  check_field(f);
  double acc = 0.0;
  for (std::size_t k = 0; k < cells(); ++k) acc += f.values[k] * cell_volume_[k];
  return acc;
}

double SurfaceModel::mean(const GridField& f) const { return integrate(f) / volume_; }

GridField SurfaceModel::laplacian(const GridField& u) const {
  check_field(u);
  std::vector<double> out(cells());
  spectral_->apply(negative_eigenvalues(*spectral_), u.values.data(), out.data());
  for (std::size_t k = 0; k < cells(); ++k) out[k] *= std::exp(-omega0_[k]);
  return make_field(std::move(out));
}

GridField SurfaceModel::green_apply(const GridField& f) const {
  check_field(f);
  const std::size_t nn = cells();
  std::vector<double> rhs(nn), u(nn);
  const double fbar = is_torus() ? mean(f) : 0.0;
  for (std::size_t k = 0; k < nn; ++k) rhs[k] = std::exp(omega0_[k]) * (f.values[k] - fbar);
  spectral_->apply(inverse_laplacian_multiplier(*spectral_), rhs.data(), u.data());
  GridField out = make_field(std::move(u));
  if (is_torus()) {
    const double ubar = mean(out);
    for (double& v : out.values) v -= ubar;
    out.zero_mean = true;
  }
  return out;
}

GridField SurfaceModel::green_column(std::size_t cell) const {
  GridField delta = constant(0.0);
  delta.values.at(cell) = 1.0 / cell_volume_[cell];
  return green_apply(delta);
}

SurfaceModel SurfaceModel::conformal(const GridField& omega) const {
  check_field(omega);
  std::vector<double> w(cells());
  for (std::size_t k = 0; k < cells(); ++k) w[k] = omega0_[k] + omega.values[k];
  return SurfaceModel(kind_, n_, area_, genus_, std::move(w));
}

GridField green_apply(const SurfaceModel& s, const GridField& f) { return s.green_apply(f); }

FitReport near_diagonal_check(const SurfaceModel& s, const std::function<GridField(std::size_t)>& column) {
  require_torus(s, "near_diagonal_check");
  if (s.n() < 32) throw ConfigError("near_diagonal_check: grid too coarse (N < 32)");
  const GridField g = column ? column(0) : s.green_column(0);
  s.check_field(g);
  double gmax = 0.0;
  for (double v : g.values) gmax = std::max(gmax, std::abs(v));
  if (std::abs(s.integrate(g)) > 1e-10 * gmax * s.volume())
    throw ConfigError("near_diagonal_check: kernel is not zero-mean in its second argument");

  const int n = s.n();
  const double h = s.spacing(), L = s.side();
  FitReport r;
  r.name = "near_diagonal";
  r.transform = "G(x,y) vs log d(x,y)";
  std::vector<double> m;
  auto add = [&](int i, int j) {
    const double d = h * std::hypot(double(i), double(j));
    if (d < 2.0 * L / n - 1e-12 || d > 0.1 * L + 1e-12) return;
    r.x.push_back(std::log(d));
    r.y.push_back(g(i, j));
    m.push_back(g(i, j) + std::log(d) / kTwoPi);
  };
  for (int k = 1; k < n / 2; ++k) {
    add(k, 0);
    add(0, k);
    add(k, k);
  }
  r.set_fit(fit_line(r.x, r.y));
  const LinearFit mf = fit_line(r.x, m);
  r.samples = r.x.size();
  r.values["log_coefficient"] = r.fit.slope;
  r.values["log_coefficient_ratio"] = r.fit.slope / (-1.0 / kTwoPi);
  r.values["residual_slope"] = mf.slope;
  r.values["residual_mean"] = mf.intercept + mf.slope * (r.x.empty() ? 0.0 : r.x.front());
  double mmin = m.empty() ? 0 : *std::min_element(m.begin(), m.end());
  double mmax = m.empty() ? 0 : *std::max_element(m.begin(), m.end());
  r.values["residual_range"] = mmax - mmin;
  r.values["neighbor_difference"] = g(1, 0) - g(2, 0);
  r.values["neighbor_difference_ratio"] = (g(1, 0) - g(2, 0)) / (std::log(2.0) / kTwoPi);
  // one cell away the band-limited kernel is still smoothed; two cells out it follows the log law
  r.values["second_neighbor_difference_ratio"] = (g(2, 0) - g(4, 0)) / (std::log(2.0) / kTwoPi);
  return r;
}

GridField bandlimit(const SurfaceModel& s, const GridField& omega, double* removed_fraction) {
  s.check_field(omega);
  const Spectral& sp = s.spectral();
  std::vector<double> keep(sp.modes()), drop(sp.modes());
  const double cut = s.n() / 4.0;
  for (std::size_t c = 0; c < sp.modes(); ++c) {
    auto [a, b] = sp.wavenumber(c);
    keep[c] = std::hypot(double(a), double(b)) <= cut + 1e-9 ? 1.0 : 0.0;
    drop[c] = 1.0 - keep[c];
  }
  std::vector<double> ones(sp.modes(), 1.0);
  const double total = sp.quadratic(ones, omega.values.data());
  const double removed = sp.quadratic(drop, omega.values.data());
  const double frac = total > 0 ? removed / total : 0.0;
  if (removed_fraction) *removed_fraction = frac;
  if (frac <= 1e-24) return omega;
  if (frac > 1e-12)
    warn("conformal factor has " + format_double(frac) +
         " of its energy above N/4 wavenumbers; filtered");
  std::vector<double> out(s.cells());
  sp.apply(keep, omega.values.data(), out.data());
  return s.make_field(std::move(out));
}

double classical_liouville(const SurfaceModel& s, const GridField& omega_in) {
  const GridField omega = bandlimit(s, omega_in);
  const double grad = s.spectral().quadratic(s.spectral().eigenvalues(), omega.values.data());
  double curv = 0.0;
  for (std::size_t k = 0; k < s.cells(); ++k)
    curv += s.curvature().values[k] * omega.values[k] * s.cell_volume()[k];
  return grad + 2.0 * curv;
}

GridField kahler_potential(const SurfaceModel& s, const std::vector<double>& rho) {
  require_torus(s, "kahler_potential");
  if (rho.size() != s.cells()) throw ConfigError("measure size does not match surface grid");
  double mass = 0.0;
  for (double v : rho) {
    if (v < 0 || !std::isfinite(v)) throw ConfigError("kahler_potential: measure must be nonnegative");
    mass += v;
  }
  if (!(mass > 0)) throw ConfigError("kahler_potential: measure has zero total mass");
  GridField density = s.constant(0.0);
  for (std::size_t k = 0; k < s.cells(); ++k) density.values[k] = rho[k] / s.cell_volume()[k];
  GridField phi = s.green_apply(density);
  for (double& v : phi.values) v *= -2.0 / mass;
  return phi;
}

double aubin_yau(const SurfaceModel& s, const GridField& phi) {
  s.check_field(phi);
  const double dirichlet = s.spectral().quadratic(s.spectral().eigenvalues(), phi.values.data());
  return -0.25 * dirichlet + s.integrate(phi) / s.volume();
}

double classical_mabuchi(const SurfaceModel& s, const GridField& omega_in) {
  require_torus(s, "classical_mabuchi");
  const GridField omega = bandlimit(s, omega_in);
  const std::size_t nn = s.cells();
  std::vector<double> rho(nn);
  double vhat = 0.0;
  for (std::size_t k = 0; k < nn; ++k) {
    rho[k] = std::exp(omega.values[k]) * s.cell_volume()[k];
    vhat += rho[k];
  }
  const GridField phi = kahler_potential(s, rho);
  const double one_minus_h = 1.0 - s.genus();
  const double phi_lap_phi = -s.spectral().quadratic(s.spectral().eigenvalues(), phi.values.data());
  double linear = 0.0, entropy = 0.0;
  for (std::size_t k = 0; k < nn; ++k) {
    linear += (8.0 * kPi * one_minus_h / s.volume() - s.curvature().values[k]) * phi.values[k] *
              s.cell_volume()[k];
    entropy += omega.values[k] * rho[k];
  }
  return kTwoPi * one_minus_h * phi_lap_phi + linear + 2.0 / vhat * entropy;
}

GridField curvature_conformal(const SurfaceModel& s, const GridField& omega_in) {
  const GridField omega = bandlimit(s, omega_in);
  const GridField lap = s.laplacian(omega);
  GridField k = s.constant(0.0);
  for (std::size_t c = 0; c < s.cells(); ++c)
    k.values[c] = std::exp(-omega.values[c]) * (s.curvature().values[c] - lap.values[c]);
  return k;
}

double green_conformal_identity(const SurfaceModel& s, const GridField& omega_in, int sources) {
  require_torus(s, "green_conformal_identity");
  const GridField omega = bandlimit(s, omega_in);
  const SurfaceModel hat = s.conformal(omega);
  std::vector<double> rho(s.cells());
  for (std::size_t k = 0; k < s.cells(); ++k) rho[k] = std::exp(omega.values[k]) * s.cell_volume()[k];
  const GridField phi = kahler_potential(s, rho);
  const double say = aubin_yau(s, phi);
  double worst = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, s.cells() / std::max(1, sources));
  for (int j = 0; j < sources; ++j) {
    const std::size_t y = (j * stride + static_cast<std::size_t>(j) * s.n() / 3) % s.cells();
    const GridField gh = hat.green_column(y);
    const GridField g = s.green_column(y);
    for (std::size_t x = 0; x < s.cells(); ++x) {
      const double r = gh.values[x] - g.values[x] - 0.5 * (phi.values[x] + phi.values[y]) + say;
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

std::string surface_to_json(const SurfaceModel& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind());
  j["N"] = s.n();
  j["V"] = s.area();
  j["h"] = s.genus();
  // float64 little endian
  static_assert(sizeof(double) == 8);
  j["omega0"] = base64_encode(s.background().data(), s.background().size() * sizeof(double));
  return j.dump();
}

SurfaceModel surface_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("surface descriptor: ") + e.what());
  }
  for (const char* key : {"kind", "N", "V", "h"})
    if (!j.contains(key)) throw ConfigError(std::string("surface descriptor lacks '") + key + "'");
  const int n = j["N"].get<int>();
  std::vector<double> w;
  if (j.contains("omega0") && !j["omega0"].get<std::string>().empty()) {
    const auto bytes = base64_decode(j["omega0"].get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(n) * n * sizeof(double))
      throw ConfigError("surface descriptor: omega0 payload has wrong size");
    w.resize(static_cast<std::size_t>(n) * n);
    std::memcpy(w.data(), bytes.data(), bytes.size());
  }
  return SurfaceModel(surface_kind_from_string(j["kind"].get<std::string>()), n, j["V"].get<double>(),
                      j["h"].get<int>(), std::move(w));
}

}  // namespace mlq
