#include "mlq/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlq/io.hpp"

namespace mlq {

std::string to_string(Normalization n) {
  return n == Normalization::variance_subtraction ? "variance-subtraction" : "log-eps";
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "variance-subtraction") return Normalization::variance_subtraction;
  if (s == "log-eps") return Normalization::log_eps;
  throw ConfigError("unknown normalization '" + s + "' (expected variance-subtraction or log-eps)");
}

double Cutoff::epsilon() const { return kind == CutoffKind::epsilon ? value : std::exp(-value); }

std::string Cutoff::describe() const {
  return (kind == CutoffKind::epsilon ? "eps=" : "t=") + format_double(value);
}

void validate_cutoff(const SurfaceModel& s, const Cutoff& c) {
  if (!(c.value > 0) || !std::isfinite(c.value)) throw ConfigError("cutoff must be positive: " + c.describe());
  if (c.epsilon() < 2.0 * s.spacing() * (1 - 1e-12))
    throw ConfigError("cutoff " + c.describe() + " finer than the grid resolves (need eps >= 2 cell sizes, " +
                      format_double(2.0 * s.spacing()) + ")");
}

namespace {

ChaosSample build_chaos(const SurfaceModel& s, const RegularizedField& x, double gamma, Normalization norm,
                        const std::vector<double>& region) {
  s.check_field(x.values);
  validate_cutoff(s, x.cutoff);
  const std::size_t nn = s.cells();
  if (norm == Normalization::variance_subtraction && x.variance.size() != nn)
    throw ConfigError("variance-subtraction normalization needs the pointwise variance");
  if (!region.empty() && region.size() != nn) throw ConfigError("region weight does not match the grid");
  ChaosSample out;
  out.gamma = gamma;
  out.cutoff = x.cutoff;
  out.normalization = norm;
  out.seed = x.seed;
  out.sample = x.sample;
  out.gmc_cells.resize(nn);
  out.dgmc_cells.resize(nn);
  const double eps = x.cutoff.epsilon();
  const double log_eps = std::log(eps);
  const double g2 = gamma * gamma;
  for (std::size_t c = 0; c < nn; ++c) {
    const double mu = s.cell_volume()[c] * (region.empty() ? 1.0 : region[c]);
    const double gx = gamma * x.values.values[c];
    double expo, lin;
    if (norm == Normalization::variance_subtraction) {
      expo = gx - 0.5 * g2 * x.variance[c];
      lin = gx - g2 * x.variance[c];
    } else {
      expo = gx + 0.5 * g2 * log_eps;
      lin = gx + g2 * log_eps;
    }
    const double m = std::exp(expo) * mu;
    out.gmc_cells[c] = m;
    out.dgmc_cells[c] = lin * m;
  }
  double g = 0, d = 0;
  for (std::size_t c = 0; c < nn; ++c) {
    g += out.gmc_cells[c];
    d += out.dgmc_cells[c];
  }
  if (!std::isfinite(g) || !std::isfinite(d)) throw NumericalError("chaos masses overflowed");
  out.total_gmc = g;
  out.total_dgmc = d;
  return out;
}

}  // namespace

ChaosSample gmc(const SurfaceModel& s, const RegularizedField& x, double gamma, Normalization norm,
                const std::vector<double>& region) {
  if (!(gamma > 0 && gamma < 2))
    throw ConfigError("GMC needs gamma in (0, 2): the limit measure is non zero if and only if gamma in (0,2)");
  return build_chaos(s, x, gamma, norm, region);
}

ChaosSample dgmc(const SurfaceModel& s, const RegularizedField& x, double gamma, Normalization norm,
                 const std::vector<double>& region) {
  if (!(gamma > 0 && gamma < std::sqrt(2.0)))
    throw ConfigError("derivative GMC needs gamma in (0, sqrt 2) for the L2 limit");
  if (gamma >= 1.0) warn("derivative GMC at gamma >= 1: negative exponential moments are not guaranteed");
  return build_chaos(s, x, gamma, norm, region);
}

GridField liouville_kahler_potential(const SurfaceModel& s, const ChaosSample& chaos) {
  if (!(chaos.total_gmc > 0)) throw NumericalError("chaos has zero total mass");
  return kahler_potential(s, chaos.gmc_cells);
}

ActionBreakdown quantum_mabuchi_action(const SurfaceModel& s, const ChaosSample& chaos, double c,
                                       const ModelParams& params) {
  if (!s.is_torus()) throw ConfigError("quantum Mabuchi action needs the zero-mean Green function (flat-torus)");
  if (!(params.gamma > 0 && params.gamma < std::sqrt(2.0)))
    throw ConfigError("quantum Mabuchi action needs gamma in (0, sqrt 2)");
  if (params.genus != s.genus()) throw ConfigError("model genus does not match the surface genus");
  if (std::abs(params.gamma - chaos.gamma) > 1e-15) throw ConfigError("chaos gamma does not match model gamma");
  const std::size_t nn = s.cells();
  const double G = chaos.total_gmc;
  if (!(G > 0)) throw NumericalError("chaos has zero total mass");
  const double one_minus_h = 1.0 - s.genus();
  const double denom = 1.0 - params.gamma * params.gamma / 4;

  GridField density = s.constant(0.0);
  for (std::size_t k = 0; k < nn; ++k) density.values[k] = chaos.gmc_cells[k] / s.cell_volume()[k];
  const GridField u = s.green_apply(density);
  double quad = 0;
  for (std::size_t k = 0; k < nn; ++k) quad += chaos.gmc_cells[k] * u.values[k];

  GridField f = s.constant(0.0);
  bool constant_curvature = true;
  for (std::size_t k = 0; k < nn; ++k) {
    f.values[k] = 8 * kPi * one_minus_h / s.volume() - s.curvature().values[k];
    constant_curvature = constant_curvature && s.curvature().values[k] == s.curvature().values[0];
  }
  double cross = 0;
  if (!constant_curvature) {
    const GridField w = s.green_apply(f);
    for (std::size_t k = 0; k < nn; ++k) cross += chaos.gmc_cells[k] * w.values[k];
  }

  ActionBreakdown a;
  a.t1 = -8 * kPi * one_minus_h * quad / (G * G);
  a.t2 = -2.0 / G * cross;
  a.t3 = 2.0 / denom * chaos.total_dgmc / G;
  a.t4 = 2.0 * params.gamma * c / denom;
  return a;
}

double p_gamma(const SurfaceModel& s, const ChaosSample& chaos, const ModelParams& params) {
  const auto a = quantum_mabuchi_action(s, chaos, 0.0, params);
  return a.t1 + a.t3;
}

Estimate ratio_exp_moment(const std::vector<double>& d, const std::vector<double>& g, double alpha) {
  if (d.empty() || d.size() != g.size()) throw ConfigError("ratio_exp_moment: empty or mismatched ensemble");
  if (alpha < 0) throw ConfigError("ratio_exp_moment: alpha must be nonnegative");
  Estimate e;
  e.n = d.size();
  if (alpha == 0) {
    e.value = 1.0;
    return e;
  }
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = std::exp(-alpha * d[i] / g[i]);
    s1 += v;
    s2 += v * v;
  }
  const double n = double(d.size());
  e.value = s1 / n;
  e.stderr_ = n > 1 ? std::sqrt(std::max(0.0, s2 / n - e.value * e.value) / (n - 1)) : 0.0;
  if (!std::isfinite(e.value)) throw NumericalError("ratio_exp_moment: non-finite estimate");
  return e;
}

double metric_weight_exponent(double gamma, double c) { return c + gamma * gamma * c / 4; }

FitReport metric_regularization_ratio(const SurfaceModel& s, const GridField& omega_in, double gamma,
                                      const std::vector<double>& eps, std::uint64_t seed, int samples, int blocks) {
  if (!s.is_torus()) throw ConfigError("metric_regularization_ratio needs the flat torus");
  if (!(gamma > 0 && gamma < std::sqrt(2.0))) throw ConfigError("metric_regularization_ratio: gamma in (0, sqrt 2)");
  if (samples < 1 || blocks < 1 || s.n() % blocks != 0) throw ConfigError("bad sample or block count");
  const GridField omega = bandlimit(s, omega_in);
  double wmax = 0;
  for (double v : omega.values) wmax = std::max(wmax, std::abs(v));
  if (wmax > 0.5 + 1e-12) warn("metric_regularization_ratio: |omega| exceeds 0.5");
  for (double e : eps)
    if (e * std::exp(-0.5 * wmax) < 2.0 * s.spacing() * (1 - 1e-12))
      throw ConfigError("circle radius below grid resolution after e^{-omega/2} rescaling");

  const std::size_t nn = s.cells();
  const int n = s.n(), bs = n / blocks;
  const double Q = gamma / 2 + 2 / gamma, g2 = gamma * gamma;
  FitReport r;
  r.name = "metric_regularization";
  r.transform = "mean |log Ghat(B) - log int_B e^{gQ w/2} dG| vs eps";
  r.samples = static_cast<std::size_t>(samples);
  r.thresholds = eps;
  std::vector<double> res_g(eps.size(), 0.0), res_d(eps.size(), 0.0);
  for (int k = 0; k < samples; ++k) {
    const GridField x = sample_gff(s, seed, static_cast<std::uint64_t>(k));
    for (std::size_t e = 0; e < eps.size(); ++e) {
      const double pre = std::pow(eps[e], g2 / 2), le = std::log(eps[e]);
      std::vector<double> bg(blocks * blocks, 0.0), bd(blocks * blocks, 0.0), bgh(blocks * blocks, 0.0),
          bdh(blocks * blocks, 0.0), bw(blocks * blocks, 0.0);
      for (std::size_t c = 0; c < nn; ++c) {
        const auto p = s.point(c);
        const double w = omega.values[c];
        const double xe = circle_average(s, x, p, eps[e]);
        const double xh = circle_average(s, x, p, eps[e] * std::exp(-0.5 * w));
        const double a = s.cell_volume()[c];
        const double gm = pre * std::exp(gamma * xe) * a;
        const double dm = (gamma * xe + g2 * le) * gm;
        const double gh = pre * std::exp(gamma * xh) * std::exp(w) * a;
        const double dh = (gamma * xh + g2 * le) * gh;
        const double f = std::exp(gamma * Q * w / 2);
        const int b = (static_cast<int>(c) / n / bs) * blocks + (static_cast<int>(c) % n) / bs;
        bg[b] += f * gm;
        bd[b] += f * (dm + g2 / 2 * w * gm);
        bgh[b] += gh;
        bdh[b] += dh;
        bw[b] += f * gm;
      }
      for (int b = 0; b < blocks * blocks; ++b) {
        res_g[e] += std::abs(std::log(bgh[b] / bg[b]));
        res_d[e] += std::abs(bdh[b] - bd[b]) / bw[b];
      }
    }
  }
  for (std::size_t e = 0; e < eps.size(); ++e) {
    res_g[e] /= double(samples) * blocks * blocks;
    res_d[e] /= double(samples) * blocks * blocks;
    r.x.push_back(std::log(eps[e]));
    r.y.push_back(res_g[e]);
    r.values["gmc_residual_eps_" + format_double(eps[e])] = res_g[e];
    r.values["dgmc_residual_eps_" + format_double(eps[e])] = res_d[e];
  }
  r.probabilities = res_d;  // per-eps DGMC residuals in threshold order
  bool mono_g = true, mono_d = true;
  for (std::size_t e = 1; e < eps.size(); ++e) {
    // eps given in decreasing order
    mono_g = mono_g && res_g[e] < res_g[e - 1];
    mono_d = mono_d && res_d[e] < res_d[e - 1];
  }
  r.values["gmc_monotone"] = mono_g ? 1.0 : 0.0;
  r.values["dgmc_monotone"] = mono_d ? 1.0 : 0.0;
  r.set_fit(fit_line(r.x, r.y));
  return r;
}

BallStencil ball_stencil(const SurfaceModel& s, double r, int subsample) {
  BallStencil b;
  b.radius = r;
  const double h = s.spacing();
  const int reach = static_cast<int>(std::ceil(r / h)) + 1;
  if (2 * reach >= s.n()) throw ConfigError("ball radius too large for the torus");
  for (int di = -reach; di <= reach; ++di)
    for (int dj = -reach; dj <= reach; ++dj) {
      // cell [di-1/2, di+1/2] x [dj-1/2, dj+1/2] in units of h around the centre
      const double nx = std::max(0.0, std::abs(di) - 0.5) * h, ny = std::max(0.0, std::abs(dj) - 0.5) * h;
      const double fx = (std::abs(di) + 0.5) * h, fy = (std::abs(dj) + 0.5) * h;
      double w;
      if (nx * nx + ny * ny >= r * r) continue;
      if (fx * fx + fy * fy <= r * r) {
        w = 1.0;
      } else {
        int inside = 0;
        for (int a = 0; a < subsample; ++a)
          for (int c = 0; c < subsample; ++c) {
            const double px = (di - 0.5 + (a + 0.5) / subsample) * h, py = (dj - 0.5 + (c + 0.5) / subsample) * h;
            inside += px * px + py * py <= r * r;
          }
        w = double(inside) / (subsample * subsample);
      }
      if (w > 0) {
        b.di.push_back(di);
        b.dj.push_back(dj);
        b.weight.push_back(w);
      }
    }
  return b;
}

double ball_mass(const SurfaceModel& s, const std::vector<double>& cells, int i, int j, const BallStencil& b) {
  const int n = s.n();
  double acc = 0;
  for (std::size_t k = 0; k < b.weight.size(); ++k) {
    const int ii = ((i + b.di[k]) % n + n) % n, jj = ((j + b.dj[k]) % n + n) % n;
    acc += b.weight[k] * cells[static_cast<std::size_t>(ii) * n + jj];
  }
  return acc;
}

}  // namespace mlq
