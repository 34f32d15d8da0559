// One PASS/FAIL line per acceptance criterion. Usage: acceptance [--threads N] [criterion ...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlq/analysis.hpp"
#include "mlq/ensemble.hpp"
#include "mlq/io.hpp"
#include "mlq/pathintegral.hpp"
#include "mlq/runner.hpp"

using namespace mlq;

namespace {

int g_threads = 1;
constexpr double kRoundoff = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", prec, v);
  return b;
}

// Hash of every number a suite produces; two runs with the same seeds must agree.
class Digest {
 public:
  void add(double v) { buf_ += format_double(v) + ","; }
  void add(const std::vector<double>& v) {
    for (double x : v) add(x);
  }
  void add(const FitReport& r) {
    buf_ += r.name + ";";
    add(r.thresholds);
    add(r.probabilities);
    add(r.x);
    add(r.y);
    add(r.fit.slope);
    add(r.fit.r2);
    for (const auto& [k, v] : r.values) {
      buf_ += k + "=";
      add(v);
    }
  }
  std::string hex() const { return sha256_hex(buf_); }

 private:
  std::string buf_;
};

SurfaceModel torus(int n, double v = 1.0, int h = 2) { return build_surface(SurfaceKind::flat_torus, n, v, h); }

KernelFamily heat() {
  KernelFamily k;
  k.kind = KernelKind::heat_kernel;
  return k;
}

// low Fourier modes with fixed amplitudes and phases
GridField smooth_field(const SurfaceModel& s, double amp, int variant) {
  GridField f = s.constant(0.0);
  const int modes[4][2] = {{1, 0}, {0, 2}, {1, -1}, {2, 1}};
  for (int m = 0; m < 4; ++m) {
    const double a = amp / (m + 1), ph = 0.7 * (m + 1) + 1.3 * variant;
    for (std::size_t c = 0; c < s.cells(); ++c) {
      const auto p = s.point(c);
      f.values[c] += a * std::cos(kTwoPi * (modes[m][0] * p[0] + modes[m][1] * p[1]) / s.side() + ph);
    }
  }
  return f;
}

GridField cos_mode(const SurfaceModel& s, double amp) {
  GridField w = s.constant(0.0);
  for (std::size_t k = 0; k < s.cells(); ++k) w.values[k] = amp * std::cos(kTwoPi * s.point(k)[0] / s.side());
  return w;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

GridField minus(GridField a, const GridField& b) {
  for (std::size_t c = 0; c < a.values.size(); ++c) a.values[c] -= b.values[c];
  return a;
}

ChaosSample sample_chaos(const ScaleFieldSampler& sp, std::uint64_t seed, std::uint64_t k, double gamma) {
  RegularizedField r;
  r.values = sp.fields(seed, k)[0];
  r.variance = sp.variances()[0];
  r.cutoff = {CutoffKind::scale, sp.cutoffs()[0]};
  r.seed = seed;
  r.sample = k;
  return dgmc(sp.surface(), r, gamma);
}

double mean(const std::vector<double>& v) {
  double a = 0;
  for (double x : v) a += x;
  return a / double(v.size());
}

double stderr_of(const std::vector<double>& v) {
  const double m = mean(v);
  double a = 0;
  for (double x : v) a += (x - m) * (x - m);
  return std::sqrt(a / double(v.size() - 1) / double(v.size()));
}

// ---------------------------------------------------------------- criterion 1

Outcome exact_identities(Digest& dg, std::size_t kahler_samples) {
  Outcome o;
  bool ok = true;
  std::ostringstream d;
  // cocycles S(g3, g1) = S(g3, g2) + S(g2, g1)
  double worst_cocycle = 0;
  for (int h : {2, 3}) {
    auto g1 = torus(64, 1.0, h);
    const auto w1 = smooth_field(g1, 0.5, 1), w2 = smooth_field(g1, 0.5, 2);
    auto g2 = g1.conformal(w1);
    const auto dw = minus(w2, w1);
    const double l = rel(classical_liouville(g1, w2), classical_liouville(g2, dw) + classical_liouville(g1, w1));
    const double m = rel(classical_mabuchi(g1, w2), classical_mabuchi(g2, dw) + classical_mabuchi(g1, w1));
    worst_cocycle = std::max({worst_cocycle, l, m});
    dg.add(l);
    dg.add(m);
  }
  ok = ok && worst_cocycle < 1e-8;
  d << "cocycle rel " << fmt(worst_cocycle);

  // Kahler potential of chaos samples
  auto s = torus(64, 1.0 / 16);
  ScaleFieldSampler sp(s, heat(), {4.0});
  std::vector<double> worst_mean(kahler_samples), dirichlet(kahler_samples);
  parallel_for(kahler_samples, g_threads, [&](std::size_t k) {
    RegularizedField r;
    r.values = sp.fields(101, k)[0];
    r.variance = sp.variances()[0];
    r.cutoff = {CutoffKind::scale, 4.0};
    const auto c = gmc(s, r, 0.5);
    const auto phi = liouville_kahler_potential(s, c);
    double scale = 1;
    for (double v : phi.values) scale = std::max(scale, std::abs(v));
    worst_mean[k] = std::abs(s.mean(phi)) / scale;
    auto lap = s.laplacian(phi);
    for (std::size_t i = 0; i < lap.values.size(); ++i) lap.values[i] *= phi.values[i];
    dirichlet[k] = s.integrate(lap);
  });
  const double km = *std::max_element(worst_mean.begin(), worst_mean.end());
  const auto viol = std::count_if(dirichlet.begin(), dirichlet.end(), [](double q) { return q > 0; });
  dg.add(worst_mean);
  dg.add(dirichlet);
  ok = ok && km < 1e-12 && viol == 0;
  d << "; kahler mean " << fmt(km) << ", int phi Lap phi > 0 in " << viol << "/" << kahler_samples;

  // Green change of metric and Weyl algebra at N = 64 and 128
  std::vector<double> green, weyl;
  for (int n : {64, 128}) {
    auto sn = torus(n);
    green.push_back(green_conformal_identity(sn, smooth_field(sn, 0.3, 3)));
    ScaleFieldSampler sw(sn, heat(), {3.0});
    const ModelParams p{0.5, 0.0, 1.0, 2};
    weyl.push_back(weyl_identity_check(sn, cos_mode(sn, 0.2), sample_chaos(sw, 4, 0, 0.5), 0.0, p).residual);
  }
  dg.add(green);
  dg.add(weyl);
  // both residuals can already sit at round-off, where there is nothing left to decrease
  auto refines = [](const std::vector<double>& r) { return r[1] < r[0] || std::max(r[0], r[1]) < kRoundoff; };
  ok = ok && green[0] < 1e-3 && refines(green) && weyl[0] < 1e-2 && refines(weyl);
  d << "; green " << fmt(green[0]) << " -> " << fmt(green[1]) << "; weyl " << fmt(weyl[0]) << " -> "
    << fmt(weyl[1]);
  o.pass = ok;
  o.detail = d.str();
  return o;
}

// ------------------------------------------------------------ criteria 2 to 5

struct GmcEnsemble {
  SurfaceModel s = torus(256, 1.0 / 16);
  std::vector<double> cutoffs{4.0, 5.0, 6.0};
  std::uint64_t seed = 2024;
  std::vector<std::vector<ChaosRecord>> records;
};

GmcEnsemble run_gmc_ensemble(std::size_t samples) {
  GmcEnsemble e;
  ChaosEnsembleSpec spec;
  spec.kernel = heat();
  spec.cutoffs = e.cutoffs;
  spec.gamma = 0.5;
  spec.seed = e.seed;
  spec.samples = samples;
  e.records = chaos_ensemble(e.s, spec, g_threads);
  return e;
}

std::vector<double> column(const std::vector<ChaosRecord>& r, std::size_t n, bool d) {
  std::vector<double> v;
  for (std::size_t i = 0; i < std::min(n, r.size()); ++i) v.push_back(d ? r[i].d : r[i].g);
  return v;
}

Outcome chaos_moments(const GmcEnsemble& e, std::size_t n, std::size_t mf_samples, Digest& dg) {
  Outcome o;
  std::ostringstream d;
  const auto& top = e.records.back();
  const auto g = column(top, n, false), dd = column(top, n, true);
  std::vector<double> g2;
  for (double x : g) g2.push_back(x * x);
  const double V = e.s.volume();
  const double zg = (mean(g) - V) / stderr_of(g), zd = mean(dd) / stderr_of(dd);
  const double oracle = moment_oracle(e.s, 0.5, 2);
  const double z2 = (mean(g2) - oracle) / stderr_of(g2);
  dg.add({mean(g), mean(dd), mean(g2), oracle});
  bool ok = std::abs(zg) < 3 && std::abs(zd) < 3 && std::abs(z2) < 3;
  d << "n=" << g.size() << " z(E G - V)=" << fmt(zg, 3) << " z(E D)=" << fmt(zd, 3) << " z(E G^2 - oracle)="
    << fmt(z2, 3);
  const double h = e.s.spacing(), L = e.s.side();
  const auto radii = geometric_grid(4 * h, L / 8, 5);
  const auto mf = multifractal(e.s, heat(), 6.0, 0.5, {1.0, 2.0}, radii, 77, mf_samples, 16, g_threads);
  dg.add(mf[0]);
  dg.add(mf[1]);
  const double x1 = mf[0].fit.slope, x2 = mf[1].fit.slope;
  ok = ok && std::abs(x1 - 2.0) <= 0.1 && std::abs(x2 - 3.75) <= 0.4;
  d << "; xi(1)=" << fmt(x1) << " xi(2)=" << fmt(x2) << " (targets 2, 3.75)";
  o.pass = ok;
  o.detail = d.str();
  return o;
}

Outcome dgmc_convergence(const GmcEnsemble& e, Digest& dg) {
  Outcome o;
  std::ostringstream d;
  std::vector<CutoffSeries> ser;
  for (std::size_t c = 0; c < e.cutoffs.size(); ++c)
    ser.push_back({e.cutoffs[c], e.seed, column(e.records[c], e.records[c].size(), true)});
  const auto r = convergence_diagnostic(ser);
  dg.add(r);
  bool ok = r.value("decreasing") == 1.0;
  d << "RMS";
  for (double y : r.y) d << " " << fmt(y);
  for (std::size_t i = 0; i + 1 < e.cutoffs.size(); ++i) {
    const std::string k = std::to_string(i);
    const double oracle = dgmc_difference_oracle(e.s, heat(), 0.5, e.cutoffs[i], e.cutoffs[i + 1]);
    const double z = (r.value("ms_" + k) - oracle) / r.value("ms_se_" + k);
    dg.add(oracle);
    ok = ok && std::abs(z) < 3;
    d << "; MS[" << fmt(e.cutoffs[i], 2) << "," << fmt(e.cutoffs[i + 1], 2) << "] z vs oracle " << fmt(z, 3);
  }
  o.pass = ok;
  o.detail = d.str();
  return o;
}

Outcome exp_moment_stability(const GmcEnsemble& e, Digest& dg) {
  Outcome o;
  std::ostringstream d;
  std::vector<Estimate> est;
  for (std::size_t c = 0; c < e.cutoffs.size(); ++c) {
    const auto& r = e.records[c];
    est.push_back(ratio_exp_moment(column(r, r.size(), true), column(r, r.size(), false), 1.0));
    dg.add(est.back().value);
    dg.add(est.back().stderr_);
  }
  bool ok = true;
  double worst = 0;
  for (std::size_t i = 0; i < est.size(); ++i)
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const double z = std::abs(est[i].value - est[j].value) /
                       std::sqrt(est[i].stderr_ * est[i].stderr_ + est[j].stderr_ * est[j].stderr_);
      worst = std::max(worst, z);
    }
  ok = worst <= 2;
  // divergence would show as increments that do not shrink with t
  std::vector<double> inc;
  for (std::size_t i = 0; i + 1 < est.size(); ++i) inc.push_back(est[i + 1].value - est[i].value);
  bool shrinking = true;
  for (std::size_t i = 1; i < inc.size(); ++i) shrinking = shrinking && std::abs(inc[i]) < std::abs(inc[i - 1]);
  ok = ok && shrinking;
  d << "E[exp(-D/G)]";
  for (const auto& x : est) d << " " << fmt(x.value, 6) << "+-" << fmt(x.stderr_, 2);
  d << "; max pairwise z " << fmt(worst, 3) << " (need <= 2); increments";
  for (double x : inc) d << " " << fmt(x, 3);
  d << (shrinking ? " shrinking" : " not shrinking");
  o.pass = ok;
  o.detail = d.str();
  return o;
}

Outcome left_tail(const GmcEnsemble& e, Digest& dg) {
  Outcome o;
  const auto& top = e.records.back();
  const auto r = left_tail_dgmc(column(top, top.size(), true));
  dg.add(r);
  o.pass = r.fit.slope < 0 && r.fit.r2 > 0.9 && r.value("r2_linear") < r.value("r2_quadratic");
  o.detail = "log P(D<-v) vs v^2 slope " + fmt(r.fit.slope) + " R2 " + fmt(r.value("r2_quadratic"), 5) +
             "; v-linear R2 " + fmt(r.value("r2_linear"), 5) + "; " + std::to_string(r.thresholds.size()) +
             " thresholds";
  return o;
}

// ---------------------------------------------------------------- criterion 6

Outcome small_deviations(std::size_t samples, Digest& dg) {
  Outcome o;
  auto s = torus(128);
  const auto sd = small_dev_ensemble(s, heat(), 4.15, 1.5, square_region(s, 0.5), 606, samples, g_threads);
  const auto r = small_dev_gmc(sd.recentered, sd.plain, 1.5);
  dg.add(r);
  const double target = 4 / 2.25;
  o.pass = std::abs(r.fit.slope - target) <= 0.3 * target && r.value("lighter_everywhere") == 1.0;
  o.detail = "slope " + fmt(r.fit.slope) + " vs 4/gamma^2 " + fmt(target) + " (rel err " +
             fmt(r.value("relative_error"), 3) + ") over s in [" + fmt(r.value("window_lo"), 3) + ", " +
             fmt(r.value("window_hi"), 3) + "]; lighter everywhere " +
             (r.value("lighter_everywhere") == 1.0 ? "yes" : "no") + "; plain slope " +
             fmt(r.value("plain_slope"), 3);
  return o;
}

// ---------------------------------------------------------------- criterion 7

Outcome volume_law(std::size_t draws, Digest& dg) {
  Outcome o;
  const double s1 = string_susceptibility({1.0, 0.0, 1.0, 2}).s;
  const double s2 = string_susceptibility({0.8, 0.0, 1.0, 2}).s;
  bool ok = std::abs(s1 - 5.0) < 1e-12 && std::abs(s2 - 7.25) < 1e-12;
  std::ostringstream d;
  d << "s(1,0,2)=" << fmt(s1, 12) << " s(0.8,0,2)=" << fmt(s2, 12);
  const std::vector<std::pair<ModelParams, std::vector<double>>> cases = {
      {{0.8, 0.0, 1.0, 2}, {}}, {{1.0, 0.4, 2.0, 3}, {0.3, 1.7, 4.0}}};
  std::uint64_t seed = 7;
  for (const auto& [p, masses] : cases) {
    const auto r = volume_law_check(p, draws, seed++, masses);
    dg.add(r);
    ok = ok && r.value("ks_pass") == 1.0 && r.value("moments_within_3se") == 1.0;
    d << "; gamma=" << fmt(p.gamma) << " beta=" << fmt(p.beta) << " h=" << p.genus << ": KS " << fmt(r.value("ks"), 3)
      << " (1% crit " << fmt(r.value("ks_critical_1pct"), 3) << "), moment z " << fmt(r.value("moment1_z"), 2) << " "
      << fmt(r.value("moment2_z"), 2) << " " << fmt(r.value("moment3_z"), 2);
  }
  o.pass = ok;
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome loop_expansion_check(Digest& dg) {
  Outcome o;
  bool ok = true;
  std::ostringstream d;
  for (int h : {2, 3, 5}) {
    const auto le = loop_expansion({10, 20, 40, 80}, 0.0, h);
    std::vector<double> scaled;
    for (const auto& r : le.rows) {
      scaled.push_back(le.oracle_sign == "-" ? r.scaled_residual_minus : r.scaled_residual_plus);
      dg.add({r.exact, r.two_loop_minus, r.two_loop_plus});
    }
    bool dec = true;
    for (std::size_t i = 1; i < scaled.size(); ++i) dec = dec && std::abs(scaled[i]) < std::abs(scaled[i - 1]);
    const bool constant = std::abs(le.constant_extrapolated - le.constant_term) < 1e-12;
    ok = ok && dec && constant;
    d << (h > 2 ? "; " : "") << "h=" << h << " sign " << le.oracle_sign << " |res k^2| " << fmt(std::abs(scaled[0]), 3)
      << " -> " << fmt(std::abs(scaled.back()), 3) << ", const " << fmt(le.constant_extrapolated, 12);
    if (h == 2)
      for (const auto& n : le.notes) d << " [" << n << "]";
  }
  o.pass = ok;
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------- criterion 9

Outcome polyakov(Digest& dg) {
  Outcome o;
  auto s = torus(32);
  const auto r = polyakov_check(s, cos_mode(s, 1.0), {0.05, 0.1, 0.15, 0.2, 0.25});
  dg.add(r);
  o.pass = std::abs(r.value("ratio") - 1.0) <= 0.15;
  o.detail = "N=32 quadratic coefficient " + fmt(r.value("quadratic_coefficient"), 5) + " vs -S_L/48pi " +
             fmt(r.value("predicted_quadratic"), 5) + " (ratio " + fmt(r.value("ratio"), 4) +
             "; counterterm residual " + fmt(r.value("constant_family_residual"), 2) + ") [experimental tier]";
  return o;
}

// --------------------------------------------------------------- criterion 10

std::string suite_digest(int which) {
  Digest dg;
  switch (which) {
    case 1: exact_identities(dg, 50); break;
    case 2: {
      const auto e = run_gmc_ensemble(300);
      chaos_moments(e, 300, 20, dg);
      dgmc_convergence(e, dg);
      exp_moment_stability(e, dg);
      left_tail(e, dg);
      break;
    }
    case 6: small_deviations(3000, dg); break;
    case 7: volume_law(20000, dg); break;
    case 8: loop_expansion_check(dg); break;
    case 9: polyakov(dg); break;
    default: break;
  }
  return dg.hex();
}

Outcome reproducibility() {
  Outcome o;
  bool ok = true;
  std::ostringstream d;
  // library suites at reduced sample counts, run twice in-process
  const std::vector<std::pair<int, const char*>> suites = {{1, "identities"}, {2, "chaos(2-5)"}, {6, "smalldev"},
                                                           {7, "volume"},     {8, "loop"},       {9, "polyakov"}};
  int same = 0;
  for (const auto& [k, name] : suites) {
    const bool eq = suite_digest(k) == suite_digest(k);
    same += eq;
    if (!eq) d << name << " diverged; ";
  }
  ok = same == int(suites.size());
  d << same << "/" << suites.size() << " suites identical";
  // every CLI subcommand: write a run directory, then replay it
  int replayed = 0;
  const auto cases = smoke_configs();
  for (const auto& c : cases) {
    const std::string dir = write_run("acceptance_runs", c.subcommand, c.config, c.seed, g_threads, "csv");
    const auto rep = replay_run(dir, g_threads);
    replayed += rep.identical;
    if (!rep.identical) d << "; " << c.subcommand << " replay diverged";
  }
  ok = ok && replayed == int(cases.size());
  d << "; " << replayed << "/" << cases.size() << " CLI runs replay identical";
  o.pass = ok;
  o.detail = d.str();
  return o;
}

void report(int k, const char* name, const std::function<Outcome()>& f, int& failures) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& ex) {
    o.pass = false;
    o.detail = std::string("error: ") + ex.what();
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %d %s: %s (%.0f s)\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str(), sec);
  std::fflush(stdout);
  failures += !o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--threads" && i + 1 < argc)
      g_threads = std::atoi(argv[++i]);
    else
      want.insert(std::atoi(a.c_str()));
  }
  if (want.empty())
    for (int k = 1; k <= 10; ++k) want.insert(k);
  set_warning_sink([](const std::string&) {});
  int failures = 0;
  Digest sink;
  if (want.count(1)) report(1, "exact identities", [&] { return exact_identities(sink, 1000); }, failures);
  // criteria 2 to 5 share one ensemble, built on first use
  std::optional<GmcEnsemble> e;
  auto ens = [&]() -> const GmcEnsemble& {
    if (!e) e = run_gmc_ensemble(100000);
    return *e;
  };
  if (want.count(2)) report(2, "chaos moments", [&] { return chaos_moments(ens(), 10000, 10000, sink); }, failures);
  if (want.count(3)) report(3, "DGMC convergence", [&] { return dgmc_convergence(ens(), sink); }, failures);
  if (want.count(4))
    report(4, "exponential moment stability", [&] { return exp_moment_stability(ens(), sink); }, failures);
  if (want.count(5)) report(5, "DGMC left tail", [&] { return left_tail(ens(), sink); }, failures);
  if (want.count(6)) report(6, "small deviations", [&] { return small_deviations(1000000, sink); }, failures);
  if (want.count(7)) report(7, "volume law", [&] { return volume_law(100000, sink); }, failures);
  if (want.count(8)) report(8, "loop expansion", [&] { return loop_expansion_check(sink); }, failures);
  if (want.count(9)) report(9, "Polyakov formula", [&] { return polyakov(sink); }, failures);
  if (want.count(10)) report(10, "reproducibility", reproducibility, failures);
  return failures == 0 ? 0 : 1;
}
