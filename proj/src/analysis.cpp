#include "mlq/analysis.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>

#include "mlq/common.hpp"
#include "mlq/io.hpp"

namespace mlq {

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0 || k > n) throw ConfigError("wilson_interval: need 0 <= k <= n, n > 0");
  const double p = double(k) / double(n), nn = double(n), z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z / (1 + z2 / nn) * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::vector<double> geometric_grid(double lo, double hi, int points) {
  if (!(lo > 0) || !(hi > lo) || points < 2) throw ConfigError("geometric_grid: need 0 < lo < hi, points >= 2");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = lo * std::pow(hi / lo, double(i) / (points - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ConfigError("quantile of empty sample");
  const double pos = p * double(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (pos - double(i)) * (sorted[i + 1] - sorted[i]);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw ConfigError("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = double(sample.size());
  double d = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  return d;
}

namespace {

// count of sorted values strictly below x
std::size_t count_below(const std::vector<double>& sorted, double x) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}
std::size_t count_at_most(const std::vector<double>& sorted, double x) {
  return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}

}  // namespace

FitReport left_tail_dgmc(const std::vector<double>& d, std::vector<double> thresholds, std::size_t min_hits) {
  if (d.size() < 2) throw ConfigError("left_tail_dgmc: not enough samples");
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  FitReport r;
  r.name = "left_tail_dgmc";
  r.transform = "log P(D < -v) vs v^2";
  r.samples = n;
  if (thresholds.empty()) {
    // P(D < -v) from 0.2 down to 1e-4
    const double v_lo = -sorted_quantile(sorted, 0.2), v_hi = -sorted_quantile(sorted, 1e-4);
    if (!(v_lo > 0) || !(v_hi > v_lo)) throw NumericalError("left_tail_dgmc: degenerate quantiles");
    thresholds = geometric_grid(v_lo, v_hi, 12);
  }
  std::vector<double> xl, xq, y;
  for (double v : thresholds) {
    const std::size_t k = count_below(sorted, -v);
    if (k < min_hits) {
      r.notes.push_back("threshold v=" + format_double(v) + " dropped: " + std::to_string(k) + " hits");
      continue;
    }
    const auto ci = wilson_interval(k, n);
    r.thresholds.push_back(v);
    r.hits.push_back(k);
    r.probabilities.push_back(double(k) / n);
    r.wilson_lo.push_back(ci.lo);
    r.wilson_hi.push_back(ci.hi);
    xl.push_back(v);
    xq.push_back(v * v);
    y.push_back(std::log(double(k) / n));
  }
  if (r.thresholds.size() < thresholds.size())
    warn("left_tail_dgmc: threshold grid truncated to " + std::to_string(r.thresholds.size()) + " points");
  r.values["p_negative"] = double(count_below(sorted, 0.0)) / n;
  if (y.size() < 3) throw NumericalError("left_tail_dgmc: fewer than three resolvable thresholds");
  r.x = xq;
  r.y = y;
  r.set_fit(fit_line(xq, y));
  const LinearFit lin = fit_line(xl, y);
  r.values["r2_quadratic"] = r.fit.r2;
  r.values["r2_linear"] = lin.r2;
  r.values["slope_linear"] = lin.slope;
  r.values["c_estimate"] = -r.fit.slope;
  return r;
}

FitReport small_dev_gmc(const std::vector<double>& recentered, const std::vector<double>& plain, double gamma,
                        std::vector<double> s_grid, std::size_t min_hits) {
  if (recentered.size() < 2) throw ConfigError("small_dev_gmc: not enough samples");
  if (!plain.empty() && plain.size() != recentered.size())
    throw ConfigError("small_dev_gmc: paired ensembles differ in size");
  std::vector<double> sr = recentered, sp = plain;
  std::sort(sr.begin(), sr.end());
  std::sort(sp.begin(), sp.end());
  const std::size_t n = sr.size();
  FitReport r;
  r.name = "small_dev_gmc";
  r.transform = "log(-log P(G <= s)) vs log(1/s)";
  r.samples = n;
  if (s_grid.empty()) {
    const double lo = sorted_quantile(sr, 1e-4), hi = sorted_quantile(sr, 0.2);
    if (!(lo > 0) || !(hi > lo)) throw NumericalError("small_dev_gmc: degenerate quantiles");
    s_grid = geometric_grid(lo, hi, 12);
  }
  std::sort(s_grid.begin(), s_grid.end());
  bool lighter = true, monotone = true;
  double prev_p = -1;
  std::vector<double> plain_p;
  for (double s : s_grid) {
    const std::size_t k = count_at_most(sr, s);
    if (k < min_hits) {
      r.notes.push_back("s=" + format_double(s) + " dropped: " + std::to_string(k) + " hits");
      continue;
    }
    if (k == n) {
      r.notes.push_back("s=" + format_double(s) + " dropped: every sample below");
      continue;
    }
    const double p = double(k) / n;
    const auto ci = wilson_interval(k, n);
    r.thresholds.push_back(s);
    r.hits.push_back(k);
    r.probabilities.push_back(p);
    r.wilson_lo.push_back(ci.lo);
    r.wilson_hi.push_back(ci.hi);
    r.x.push_back(std::log(1 / s));
    r.y.push_back(std::log(-std::log(p)));
    monotone = monotone && p >= prev_p;
    prev_p = p;
    if (!sp.empty()) {
      const double pp = double(count_at_most(sp, s)) / n;
      plain_p.push_back(pp);
      lighter = lighter && p <= pp;
    }
  }
  if (r.x.size() < 3) throw NumericalError("small_dev_gmc: fewer than three resolvable thresholds");
  r.set_fit(fit_line(r.x, r.y));
  r.values["target_slope"] = 4 / (gamma * gamma);
  r.values["relative_error"] = r.fit.slope / (4 / (gamma * gamma)) - 1;
  r.values["window_lo"] = r.thresholds.front();
  r.values["window_hi"] = r.thresholds.back();
  r.values["monotone"] = monotone ? 1.0 : 0.0;
  if (!sp.empty()) {
    r.values["lighter_everywhere"] = lighter ? 1.0 : 0.0;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < plain_p.size(); ++i)
      if (plain_p[i] > 0 && plain_p[i] < 1) {
        xs.push_back(r.x[i]);
        ys.push_back(std::log(-std::log(plain_p[i])));
      }
    if (xs.size() >= 2) r.values["plain_slope"] = fit_line(xs, ys).slope;
  }
  return r;
}

FitReport convergence_diagnostic(const std::vector<CutoffSeries>& series) {
  if (series.size() < 2) throw ConfigError("convergence_diagnostic needs at least two cutoffs");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].seed != series[0].seed) throw ConfigError("convergence_diagnostic: mismatched seeds across cutoffs");
    if (series[i].values.size() != series[0].values.size() || series[i].values.empty())
      throw ConfigError("convergence_diagnostic: ensembles are not paired");
    if (!(series[i].cutoff > series[i - 1].cutoff)) throw ConfigError("convergence_diagnostic: cutoffs must increase");
  }
  FitReport r;
  r.name = "convergence";
  r.transform = "RMS paired difference vs cutoff";
  r.samples = series[0].values.size();
  const double n = double(r.samples);
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < series.size(); ++i) {
    double s1 = 0, s2 = 0;
    for (std::size_t k = 0; k < series[i].values.size(); ++k) {
      const double dd = series[i + 1].values[k] - series[i].values[k];
      s1 += dd * dd;
      s2 += dd * dd * dd * dd;
    }
    const double ms = s1 / n;
    const double se = n > 1 ? std::sqrt(std::max(0.0, s2 / n - ms * ms) / (n - 1)) : 0.0;
    r.thresholds.push_back(series[i].cutoff);
    r.x.push_back(series[i].cutoff);
    r.y.push_back(std::sqrt(ms));
    r.values["ms_" + std::to_string(i)] = ms;
    r.values["ms_se_" + std::to_string(i)] = se;
    if (i > 0) decreasing = decreasing && r.y[i] < r.y[i - 1];
  }
  r.values["decreasing"] = decreasing ? 1.0 : 0.0;
  bool all_zero = true;
  for (double v : r.y) all_zero = all_zero && v == 0;
  if (r.y.size() >= 2 && !all_zero) {
    std::vector<double> ly;
    for (double v : r.y) ly.push_back(std::log(v));
    r.set_fit(fit_line(r.x, ly));
  }
  if (all_zero) r.notes.push_back("all paired differences vanish");
  return r;
}

double torus_green_heat(double L, double x, double y) {
  const double V = L * L;
  auto theta = [&](double s, double r) {
    if (s < 0.05 * V) {
      double acc = 0;
      for (int m = -6; m <= 6; ++m) acc += std::exp(-(r - m * L) * (r - m * L) / (4 * s));
      return L / std::sqrt(4 * kPi * s) * acc;
    }
    double acc = 1;
    for (int m = 1; m <= 40; ++m) {
      const double k = kTwoPi * m / L, e = std::exp(-k * k * s);
      acc += 2 * e * std::cos(k * r);
      if (e < 1e-18) break;
    }
    return acc;
  };
  auto f = [&](double s) { return theta(s, x) * theta(s, y) - 1.0; };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double a = GK::integrate(f, 0.0, 0.05 * V, 12, 1e-12);
  const double b = GK::integrate(f, 0.05 * V, std::numeric_limits<double>::infinity(), 12, 1e-12);
  return kTwoPi * (a + b) / V;
}

TorusGreen::TorusGreen(double side) : L_(side) {
  if (!(side > 0)) throw ConfigError("TorusGreen: side must be positive");
  shift_ = torus_green_heat(L_, L_ / 2, L_ / 2) / kTwoPi - raw(L_ / 2, L_ / 2);
  const double q = std::exp(-kPi);
  double d = 0;
  for (int n = 0; n < 8; ++n) d += 2 * ((n % 2) ? -1.0 : 1.0) * (2 * n + 1) * std::pow(q, (n + 0.5) * (n + 0.5));
  c0_ = -std::log(d * kPi / L_) + kTwoPi * shift_;
}

double TorusGreen::raw(double x, double y) const {
  x = x - L_ * std::round(x / L_);
  y = y - L_ * std::round(y / L_);
  const std::complex<double> w(kPi * x / L_, kPi * y / L_);
  const double q = std::exp(-kPi);
  std::complex<double> th = 0;
  for (int n = 0; n < 8; ++n)
    th += 2.0 * ((n % 2) ? -1.0 : 1.0) * std::pow(q, (n + 0.5) * (n + 0.5)) * std::sin(double(2 * n + 1) * w);
  return -std::log(std::abs(th)) / kTwoPi + y * y / (2 * L_ * L_);
}

double TorusGreen::operator()(double x, double y) const { return raw(x, y) + shift_; }

double moment_oracle(const SurfaceModel& s, double gamma, int q, double a) {
  if (!s.is_torus()) throw ConfigError("moment_oracle needs the flat torus");
  if (q != 1 && q != 2) throw ConfigError("moment_oracle supports q in {1, 2}");
  if (!(a > 0 && (a <= 0.5 || a == 1.0))) throw ConfigError("moment_oracle: region fraction a in (0, 1/2] or 1");
  const double L = s.side();
  const double area = a == 1.0 ? L * L : (a * L) * (a * L);
  if (q == 1) return area;
  const double g2 = gamma * gamma;
  if (!(g2 < 2)) throw ConfigError("moment_oracle: q = 2 diverges unless gamma^2 < 2");
  const TorusGreen green(L);
  const double reach = a == 1.0 ? L / 2 : a * L;
  auto weight = [&](double zx, double zy) {
    if (a == 1.0) return L * L;
    return std::max(0.0, a * L - std::abs(zx)) * std::max(0.0, a * L - std::abs(zy));
  };
  const double p = 2 - g2;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  // polar coordinates on the octant 0 <= theta <= pi/4, r^{1-g^2} dr = d(r^p)/p
  auto angular = [&](double th) {
    const double R = reach / std::cos(th), c = std::cos(th), sn = std::sin(th);
    auto radial = [&](double v) {
      const double r = std::pow(v, 1 / p);
      if (r <= 0) return std::exp(g2 * green.log_constant()) * weight(0, 0) / p;
      const double zx = r * c, zy = r * sn;
      return std::exp(g2 * (kTwoPi * green(zx, zy) + std::log(r))) * weight(zx, zy) / p;
    };
    return GK::integrate(radial, 0.0, std::pow(R, p), 15, 1e-12);
  };
  return 8 * GK::integrate(angular, 0.0, kPi / 4, 15, 1e-11);
}

std::vector<double> kernel_row(const SurfaceModel& s, const std::vector<double>& m, std::size_t x) {
  if (!s.is_torus()) throw ConfigError("kernel_row needs the flat torus");
  std::vector<double> delta(s.cells(), 0.0), out(s.cells());
  delta.at(x) = 1.0 / s.cell_area();
  s.spectral().apply(m, delta.data(), out.data());
  return out;
}

namespace {

void require_flat(const SurfaceModel& s, const char* what) {
  if (!s.is_torus()) throw ConfigError(std::string(what) + " needs the flat torus");
  for (double v : s.background())
    if (v != 0.0) throw ConfigError(std::string(what) + " needs a surface without background metric");
}

}  // namespace

double dgmc_difference_oracle(const SurfaceModel& s, const KernelFamily& k, double gamma, double t, double t2) {
  require_flat(s, "dgmc_difference_oracle");
  if (!(t2 > t) || t < 0) throw ConfigError("dgmc_difference_oracle: need 0 <= t < t2");
  const auto r1 = kernel_row(s, band_variance(s, k, 0.0, t));
  const auto r2 = kernel_row(s, band_variance(s, k, 0.0, t2));
  const double g2 = gamma * gamma;
  auto F = [&](double c) { return std::exp(g2 * c) * g2 * c * (1 + g2 * c); };
  double acc = 0;
  for (std::size_t i = 0; i < r1.size(); ++i) acc += F(r2[i]) - F(r1[i]);
  return acc * s.cell_area() * s.volume();
}

double gmc_second_moment_lattice(const SurfaceModel& s, const std::vector<double>& modal_variance, double gamma) {
  require_flat(s, "gmc_second_moment_lattice");
  const auto row = kernel_row(s, modal_variance);
  double acc = 0;
  for (double c : row) acc += std::exp(gamma * gamma * c);
  return acc * s.cell_area() * s.volume();
}

}  // namespace mlq
