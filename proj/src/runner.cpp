#include "mlq/runner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "mlq/analysis.hpp"
#include "mlq/ensemble.hpp"
#include "mlq/io.hpp"
#include "mlq/pathintegral.hpp"

namespace mlq {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kSurfaceKeys = {"surface", "N", "area", "genus"};

struct CommandKeys {
  std::vector<std::string> allowed;
  std::vector<std::string> required;
};

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const std::map<std::string, CommandKeys>& command_keys() {
  static const std::map<std::string, CommandKeys> keys = [] {
    std::map<std::string, CommandKeys> m;
    const auto field = join(kSurfaceKeys, {"kernel", "samples"});
    m["sample-field"] = {join(field, {"field", "cutoffs"}), {"N", "area", "genus", "samples"}};
    m["gmc"] = {join(field, {"cutoffs", "gamma", "normalization", "region_fraction", "second_moment_oracle"}),
                {"N", "area", "genus", "samples", "cutoffs", "gamma"}};
    m["dgmc"] = {join(field, {"cutoffs", "gamma", "normalization", "region_fraction", "alpha"}),
                 {"N", "area", "genus", "samples", "cutoffs", "gamma"}};
    const std::vector<std::string> model = {"N", "area", "genus", "samples", "cutoff", "gamma", "beta", "mu"};
    m["actions-check"] = {join(field, {"cutoff", "gamma", "beta", "mu", "omega_mode", "omega_amplitude"}), model};
    m["weyl-check"] = {join(field, {"cutoff", "gamma", "beta", "mu", "omega_mode", "omega_amplitude", "c"}), model};
    m["ml-estimate"] = {join(field, {"cutoff", "gamma", "beta", "mu", "volume_power", "measure_functional"}), model};
    m["volume-law"] = {{"gamma", "beta", "mu", "genus", "draws", "masses"}, {"gamma", "beta", "mu", "genus", "draws"}};
    m["tails-dgmc"] = {join(field, {"cutoff", "gamma", "thresholds", "min_hits"}),
                       {"N", "area", "genus", "samples", "cutoff", "gamma"}};
    m["tails-smalldev"] = {join(field, {"cutoff", "gamma", "region_fraction", "s_grid", "min_hits"}),
                           {"N", "area", "genus", "samples", "cutoff", "gamma"}};
    m["multifractal"] = {join(field, {"cutoff", "gamma", "qs", "radii", "centre_stride"}),
                         {"N", "area", "genus", "samples", "cutoff", "gamma"}};
    m["polyakov"] = {join(kSurfaceKeys, {"omega_mode", "omega_amplitude", "amplitudes", "t0"}),
                     {"N", "area", "genus", "amplitudes"}};
    m["loop-expansion"] = {{"kappas", "beta", "genus"}, {"kappas", "beta", "genus"}};
    return m;
  }();
  return keys;
}

const json& need(const json& c, const std::string& key) {
  if (!c.contains(key)) throw ConfigError("missing required key '" + key + "'");
  return c.at(key);
}

double num(const json& c, const std::string& key) {
  const json& v = need(c, key);
  if (!v.is_number()) throw ConfigError("key '" + key + "' must be a number");
  return v.get<double>();
}

double num_or(const json& c, const std::string& key, double def) { return c.contains(key) ? num(c, key) : def; }

long long integer(const json& c, const std::string& key) {
  const double v = num(c, key);
  if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError("key '" + key + "' must be an integer");
  return static_cast<long long>(v);
}

std::size_t count(const json& c, const std::string& key) {
  const long long v = integer(c, key);
  if (v < 1) throw ConfigError("key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<double> list_or(const json& c, const std::string& key, std::vector<double> def) {
  if (!c.contains(key)) return def;
  const json& v = c.at(key);
  if (!v.is_array()) throw ConfigError("key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("key '" + key + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::string str_or(const json& c, const std::string& key, const std::string& def) {
  if (!c.contains(key)) return def;
  if (!c.at(key).is_string()) throw ConfigError("key '" + key + "' must be a string");
  return c.at(key).get<std::string>();
}

bool flag_or(const json& c, const std::string& key, bool def) {
  if (!c.contains(key)) return def;
  if (!c.at(key).is_boolean()) throw ConfigError("key '" + key + "' must be true or false");
  return c.at(key).get<bool>();
}

SurfaceModel surface_of(const json& c) {
  const long long n = integer(c, "N"), h = integer(c, "genus");
  return build_surface(surface_kind_from_string(str_or(c, "surface", "flat-torus")), static_cast<int>(n),
                       num(c, "area"), static_cast<int>(h));
}

KernelFamily kernel_of(const json& c) {
  KernelFamily k;
  k.kind = kernel_kind_from_string(str_or(c, "kernel", "heat-kernel"));
  return k;
}

ModelParams model_of(const json& c) {
  return {num(c, "gamma"), num(c, "beta"), num(c, "mu"), static_cast<int>(integer(c, "genus"))};
}

GridField omega_of(const SurfaceModel& s, const json& c, double default_amplitude) {
  const auto mode = list_or(c, "omega_mode", {1, 0});
  if (mode.size() != 2) throw ConfigError("omega_mode must be [mx, my]");
  const double amp = num_or(c, "omega_amplitude", default_amplitude);
  GridField w = s.constant(0.0);
  for (std::size_t k = 0; k < s.cells(); ++k) {
    const auto p = s.point(k);
    w.values[k] = amp * std::cos(kTwoPi * (mode[0] * p[0] + mode[1] * p[1]) / s.side());
  }
  return w;
}

void need_torus(const SurfaceModel& s, const std::string& sub) {
  if (!s.is_torus()) throw ConfigError(sub + " needs surface flat-torus");
}

void gamma_range(double g, double hi, const std::string& what) {
  if (!(g > 0 && g < hi))
    throw ConfigError(what + " needs gamma in (0, " + (hi == 2.0 ? std::string("2") : std::string("sqrt 2")) +
                      "), got " + format_double(g));
}

std::vector<double> cutoffs_of(const json& c) {
  if (c.contains("cutoffs")) return list_or(c, "cutoffs", {});
  return {num(c, "cutoff")};
}

json fit_json(const FitReport& r) {
  json j;
  j["name"] = r.name;
  j["transform"] = r.transform;
  j["cutoff"] = r.cutoff;
  j["samples"] = r.samples;
  j["thresholds"] = r.thresholds;
  j["probabilities"] = r.probabilities;
  j["wilson_lo"] = r.wilson_lo;
  j["wilson_hi"] = r.wilson_hi;
  j["hits"] = r.hits;
  j["x"] = r.x;
  j["y"] = r.y;
  j["fit"] = {{"slope", r.fit.slope},
              {"intercept", r.fit.intercept},
              {"slope_se", r.fit.slope_se},
              {"r2", r.fit.r2},
              {"points", r.fit.points},
              {"slope_ci", {r.slope_ci_lo, r.slope_ci_hi}}};
  j["values"] = r.values;
  j["notes"] = r.notes;
  return j;
}

DataTable threshold_table(const FitReport& r) {
  DataTable t{{"threshold", "hits", "probability", "wilson_lo", "wilson_hi", "x", "y"}, {}};
  for (std::size_t i = 0; i < r.thresholds.size(); ++i)
    t.rows.push_back({r.thresholds[i], r.hits[i], r.probabilities[i], r.wilson_lo[i], r.wilson_hi[i], r.x[i], r.y[i]});
  return t;
}

double sample_mean(const std::vector<double>& v) {
  double a = 0;
  for (double x : v) a += x;
  return a / double(v.size());
}

double sample_se(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = sample_mean(v);
  double a = 0;
  for (double x : v) a += (x - m) * (x - m);
  return std::sqrt(a / double(v.size() - 1) / double(v.size()));
}

json mean_entry(const std::vector<double>& v, double expected) {
  const double m = sample_mean(v), se = sample_se(v);
  return {{"mean", m}, {"se", se}, {"expected", expected}, {"z", (m - expected) / se}};
}

// ------------------------------------------------------------------ commands

RunOutput run_sample_field(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  const std::size_t n = count(c, "samples");
  const std::string kind = str_or(c, "field", "gff");
  std::vector<std::string> labels;
  std::vector<double> expected;
  std::function<std::vector<GridField>(std::size_t)> draw;
  std::optional<ScaleFieldSampler> sp;
  if (kind == "gff") {
    labels = {"gff"};
    expected = {sample_mean(cell_variance(s, gff_variance(s)))};
    draw = [&](std::size_t i) { return std::vector<GridField>{sample_gff(s, seed, i)}; };
  } else if (kind == "scale") {
    sp.emplace(s, kernel_of(c), cutoffs_of(c));
    for (std::size_t k = 0; k < sp->cutoffs().size(); ++k) {
      labels.push_back("t=" + format_double(sp->cutoffs()[k]));
      expected.push_back(sample_mean(sp->variances()[k]));
    }
    draw = [&](std::size_t i) { return sp->fields(seed, i); };
  } else {
    throw ConfigError("field must be gff or scale");
  }
  // per sample and level: mean, spatial mean square, min, max
  std::vector<std::vector<std::array<double, 4>>> stats(n);
  parallel_for(n, threads, [&](std::size_t i) {
    for (const auto& f : draw(i)) {
      double sq = 0;
      for (double v : f.values) sq += v * v;
      const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
      stats[i].push_back({s.mean(f), sq / double(f.values.size()), *lo, *hi});
    }
  });
  RunOutput out;
  out.data.header = {"sample", "level", "mean", "mean_square", "min", "max"};
  json levels = json::array();
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::vector<double> ms;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& st = stats[i][l];
      out.data.rows.push_back({i, labels[l], st[0], st[1], st[2], st[3]});
      ms.push_back(st[1]);
    }
    levels.push_back({{"level", labels[l]}, {"pointwise_variance", mean_entry(ms, expected[l])}});
  }
  out.report["results"] = {{"levels", levels}};
  return out;
}

ChaosEnsembleSpec ensemble_spec(const SurfaceModel& s, const json& c, std::uint64_t seed, bool derivative) {
  ChaosEnsembleSpec spec;
  spec.kernel = kernel_of(c);
  spec.cutoffs = cutoffs_of(c);
  spec.gamma = num(c, "gamma");
  spec.normalization = normalization_from_string(str_or(c, "normalization", "variance-subtraction"));
  spec.seed = seed;
  spec.samples = count(c, "samples");
  spec.derivative = derivative;
  const double a = num_or(c, "region_fraction", 1.0);
  if (a != 1.0) spec.region = square_region(s, a).values;
  return spec;
}

RunOutput run_chaos(const json& c, std::uint64_t seed, int threads, bool derivative) {
  const auto s = surface_of(c);
  const auto spec = ensemble_spec(s, c, seed, derivative);
  const auto rec = chaos_ensemble(s, spec, threads);
  const bool vs = spec.normalization == Normalization::variance_subtraction;
  double region_volume = s.volume();
  if (!spec.region.empty()) {
    region_volume = 0;
    for (std::size_t k = 0; k < s.cells(); ++k) region_volume += spec.region[k] * s.cell_volume()[k];
  }
  RunOutput out;
  out.data.header = derivative ? std::vector<std::string>{"sample", "cutoff", "g", "d"}
                               : std::vector<std::string>{"sample", "cutoff", "g"};
  json per = json::array();
  std::vector<CutoffSeries> series;
  for (std::size_t ci = 0; ci < spec.cutoffs.size(); ++ci) {
    std::vector<double> g, d;
    for (const auto& r : rec[ci]) {
      g.push_back(r.g);
      if (derivative) d.push_back(r.d);
      if (derivative)
        out.data.rows.push_back({r.sample, r.cutoff, r.g, r.d});
      else
        out.data.rows.push_back({r.sample, r.cutoff, r.g});
    }
    json e = {{"cutoff", spec.cutoffs[ci]}, {"gmc", mean_entry(g, vs ? region_volume : NAN)}};
    if (derivative) {
      e["dgmc"] = mean_entry(d, vs ? 0.0 : NAN);
      json em = json::array();
      for (double alpha : list_or(c, "alpha", {1.0})) {
        const auto est = ratio_exp_moment(d, g, alpha);
        em.push_back({{"alpha", alpha}, {"value", est.value}, {"se", est.stderr_}});
      }
      e["exp_moment"] = em;
      series.push_back({spec.cutoffs[ci], seed, d});
    }
    if (!derivative && flag_or(c, "second_moment_oracle", false)) {
      need_torus(s, "second_moment_oracle");
      if (!vs) throw ConfigError("second_moment_oracle needs variance-subtraction");
      const double a = num_or(c, "region_fraction", 1.0);
      std::vector<double> g2;
      for (double x : g) g2.push_back(x * x);
      e["gmc_second_moment"] = mean_entry(g2, moment_oracle(s, spec.gamma, 2, a));
    }
    per.push_back(e);
  }
  out.report["results"]["cutoffs"] = per;
  if (derivative && series.size() >= 2) {
    const auto conv = convergence_diagnostic(series);
    out.report["results"]["convergence"] = fit_json(conv);
    if (s.is_torus() && vs && spec.region.empty() && s.background().empty()) {
      json orc = json::array();
      for (std::size_t i = 0; i + 1 < spec.cutoffs.size(); ++i) {
        const double o = dgmc_difference_oracle(s, spec.kernel, spec.gamma, spec.cutoffs[i], spec.cutoffs[i + 1]);
        const std::string k = std::to_string(i);
        orc.push_back({{"t", spec.cutoffs[i]},
                       {"t2", spec.cutoffs[i + 1]},
                       {"oracle", o},
                       {"z", (conv.value("ms_" + k) - o) / conv.value("ms_se_" + k)}});
      }
      out.report["results"]["difference_oracle"] = orc;
    }
  }
  return out;
}

RunOutput run_actions(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  need_torus(s, "actions-check");
  const auto params = model_of(c);
  auto spec = ensemble_spec(s, c, seed, true);
  spec.actions = true;
  spec.params = params;
  const std::size_t n = spec.samples;
  std::vector<double> kmean(n), kdir(n);
  const auto rec = chaos_ensemble(s, spec, threads, [&](std::size_t i, std::size_t, const ChaosSample& ch) {
    const auto phi = liouville_kahler_potential(s, ch);
    double scale = 1;
    for (double v : phi.values) scale = std::max(scale, std::abs(v));
    kmean[i] = std::abs(s.mean(phi)) / scale;
    auto lap = s.laplacian(phi);
    for (std::size_t k = 0; k < lap.values.size(); ++k) lap.values[k] *= phi.values[k];
    kdir[i] = s.integrate(lap);
  });
  RunOutput out;
  out.data.header = {"sample", "g", "d", "t1", "t2", "t3", "t4", "p", "kahler_mean", "kahler_dirichlet"};
  for (const auto& r : rec[0])
    out.data.rows.push_back({r.sample, r.g, r.d, r.t1, r.t2, r.t3, r.t4, r.p, kmean[r.sample], kdir[r.sample]});
  // cocycles on the configured omega and its transpose
  const auto w1 = omega_of(s, c, 0.2);
  GridField w2 = w1;
  for (int i = 0; i < s.n(); ++i)
    for (int j = 0; j < s.n(); ++j) w2(i, j) = 0.5 * w1(j, i);
  GridField dw = w2;
  for (std::size_t k = 0; k < s.cells(); ++k) dw.values[k] -= w1.values[k];
  const auto g2 = s.conformal(w1);
  auto rel = [](double a, double b) {
    const double m = std::max(std::abs(a), std::abs(b));
    return m > 0 ? std::abs(a - b) / m : 0.0;
  };
  const double lc = rel(classical_liouville(s, w2), classical_liouville(g2, dw) + classical_liouville(s, w1));
  const double mc = rel(classical_mabuchi(s, w2), classical_mabuchi(g2, dw) + classical_mabuchi(s, w1));
  out.report["results"] = {
      {"liouville_cocycle_rel", lc},
      {"mabuchi_cocycle_rel", mc},
      {"green_change_of_metric_residual", green_conformal_identity(s, w1)},
      {"kahler_max_rel_mean", *std::max_element(kmean.begin(), kmean.end())},
      {"kahler_dirichlet_violations", std::count_if(kdir.begin(), kdir.end(), [](double q) { return q > 0; })}};
  return out;
}

RunOutput run_weyl(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  need_torus(s, "weyl-check");
  const auto params = model_of(c);
  const auto spec = ensemble_spec(s, c, seed, true);
  const auto w = omega_of(s, c, 0.2);
  const double cc = num_or(c, "c", 0.0);
  std::vector<WeylTerms> terms(spec.samples);
  chaos_ensemble(s, spec, threads, [&](std::size_t i, std::size_t, const ChaosSample& ch) {
    terms[i] = weyl_identity_check(s, w, ch, cc, params);
  });
  RunOutput out;
  out.data.header = {"sample", "a1", "a1_green_relation", "a2", "a3", "t4", "lhs", "rhs", "residual"};
  double worst = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& t = terms[i];
    out.data.rows.push_back({i, t.a1, t.a1_green_relation, t.a2, t.a3, t.t4, t.lhs, t.rhs, t.residual});
    worst = std::max(worst, t.residual);
  }
  out.report["results"] = {{"max_residual", worst},
                           {"mabuchi", terms.front().mabuchi},
                           {"green_change_of_metric_residual", green_conformal_identity(s, w)}};
  return out;
}

RunOutput run_ml(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  need_torus(s, "ml-estimate");
  const auto params = model_of(c);
  auto spec = ensemble_spec(s, c, seed, true);
  spec.actions = true;
  spec.params = params;
  const auto rec = chaos_ensemble(s, spec, threads);
  std::vector<MLWeightRecord> w;
  RunOutput out;
  out.data.header = {"sample", "g", "d", "p", "log_w", "finite"};
  for (const auto& r : rec[0]) {
    w.push_back(ml_weight(r.g, r.d, r.p, params, r.sample));
    out.data.rows.push_back({r.sample, r.g, r.d, r.p, w.back().log_w, w.back().finite ? 1 : 0});
  }
  const double k = num_or(c, "volume_power", 1.0);
  const std::string fm = str_or(c, "measure_functional", "none");
  std::vector<double> f_measure;
  for (const auto& r : rec[0]) {
    if (fm == "d_over_g") f_measure.push_back(r.d / r.g);
    else if (fm == "p") f_measure.push_back(r.p);
    else if (fm != "none") throw ConfigError("measure_functional must be none, d_over_g or p");
  }
  const auto est = ml_expectation(w, params, [k](double y) { return std::pow(y, k); }, f_measure);
  const double sv = params.s();
  out.report["results"] = {{"s", sv},
                           {"volume_power", k},
                           {"measure_functional", fm},
                           {"estimate", est.value},
                           {"se", est.stderr_},
                           {"ess", est.ess},
                           {"used", est.used},
                           {"excluded", est.excluded},
                           {"volume_factor", est.volume_factor},
                           {"gamma_moment", std::exp(std::lgamma(sv + k) - std::lgamma(sv) - k * std::log(params.mu))}};
  return out;
}

RunOutput run_volume(const json& c, std::uint64_t seed, int) {
  const auto params = model_of(c);
  const auto r = volume_law_check(params, count(c, "draws"), seed, list_or(c, "masses", {}));
  RunOutput out;
  out.data.header = {"moment", "mean", "expected", "se", "z"};
  for (int k = 1; k <= 3; ++k) {
    const std::string key = "moment" + std::to_string(k);
    out.data.rows.push_back(
        {k, r.value(key), r.value(key + "_expected"), r.value(key + "_se"), r.value(key + "_z")});
  }
  out.report["results"] = fit_json(r);
  return out;
}

RunOutput run_tails_dgmc(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  const auto spec = ensemble_spec(s, c, seed, true);
  const auto rec = chaos_ensemble(s, spec, threads);
  std::vector<double> d;
  for (const auto& r : rec[0]) d.push_back(r.d);
  const auto r = left_tail_dgmc(d, list_or(c, "thresholds", {}),
                                static_cast<std::size_t>(num_or(c, "min_hits", 20)));
  RunOutput out;
  out.data = threshold_table(r);
  out.report["results"] = fit_json(r);
  return out;
}

RunOutput run_smalldev(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  const double g = num(c, "gamma");
  const auto sd = small_dev_ensemble(s, kernel_of(c), num(c, "cutoff"), g,
                                     square_region(s, num_or(c, "region_fraction", 0.5)), seed, count(c, "samples"),
                                     threads);
  const auto r = small_dev_gmc(sd.recentered, sd.plain, g, list_or(c, "s_grid", {}),
                               static_cast<std::size_t>(num_or(c, "min_hits", 20)));
  RunOutput out;
  out.data = threshold_table(r);
  out.report["results"] = fit_json(r);
  return out;
}

RunOutput run_multifractal(const json& c, std::uint64_t seed, int threads) {
  const auto s = surface_of(c);
  need_torus(s, "multifractal");
  const auto radii = list_or(c, "radii", geometric_grid(4 * s.spacing(), s.side() / 8, 5));
  const int stride = static_cast<int>(num_or(c, "centre_stride", std::max(1, s.n() / 16)));
  const auto reps = multifractal(s, kernel_of(c), num(c, "cutoff"), num(c, "gamma"), list_or(c, "qs", {1.0, 2.0}),
                                 radii, seed, count(c, "samples"), stride, threads);
  RunOutput out;
  out.data.header = {"q", "radius", "moment", "ci_lo", "ci_hi"};
  json arr = json::array();
  for (const auto& r : reps) {
    for (std::size_t i = 0; i < r.thresholds.size(); ++i)
      out.data.rows.push_back({r.value("q"), r.thresholds[i], r.probabilities[i], r.wilson_lo[i], r.wilson_hi[i]});
    arr.push_back(fit_json(r));
  }
  out.report["results"] = arr;
  return out;
}

RunOutput run_polyakov(const json& c, std::uint64_t, int) {
  const auto s = surface_of(c);
  need_torus(s, "polyakov");
  const auto r = polyakov_check(s, omega_of(s, c, 1.0), list_or(c, "amplitudes", {}), num_or(c, "t0", 0.005));
  RunOutput out;
  out.data.header = {"amplitude", "residual"};
  for (std::size_t i = 0; i < r.x.size(); ++i) out.data.rows.push_back({r.x[i], r.y[i]});
  out.report["results"] = fit_json(r);
  return out;
}

RunOutput run_loop(const json& c, std::uint64_t, int) {
  const auto le = loop_expansion(list_or(c, "kappas", {}), num(c, "beta"), static_cast<int>(integer(c, "genus")));
  RunOutput out;
  out.data.header = {"kappa",          "gamma", "exact", "two_loop_minus", "two_loop_plus", "scaled_residual_minus",
                     "scaled_residual_plus"};
  for (const auto& r : le.rows)
    out.data.rows.push_back({r.kappa, r.gamma, r.exact, r.two_loop_minus, r.two_loop_plus, r.scaled_residual_minus,
                             r.scaled_residual_plus});
  out.report["results"] = {{"constant_term", le.constant_term},
                           {"constant_extrapolated", le.constant_extrapolated},
                           {"oracle_sign", le.oracle_sign},
                           {"notes", le.notes}};
  return out;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string report_hash(json report) {
  report.erase("timestamp");
  return sha256_hex(report.dump(2));
}

std::string data_name(const std::string& format) { return format == "json" ? "data.json" : "data.csv"; }

std::string data_text(const DataTable& t, const std::string& format) {
  return format == "json" ? t.json().dump(2) + "\n" : t.csv();
}

json full_report(const std::string& sub, const json& config, std::uint64_t seed, const RunOutput& r) {
  json rep = r.report;
  rep["subcommand"] = sub;
  rep["config"] = config;
  rep["seed"] = seed;
  rep["run_id"] = run_id(sub, config, seed);
  rep["rows"] = r.data.rows.size();
  return rep;
}

}  // namespace

std::string DataTable::csv() const {
  CsvTable t(header);
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (const auto& v : row) cells.push_back(v.is_string() ? v.get<std::string>() : format_double(v.get<double>()));
    t.add_row(cells);
  }
  return t.str();
}

json DataTable::json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json o;
    for (std::size_t i = 0; i < header.size(); ++i) o[header[i]] = row[i];
    arr.push_back(o);
  }
  return arr;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : command_keys()) v.push_back(k);
    return v;
  }();
  return names;
}

void validate_config(const std::string& sub, const json& c) {
  const auto it = command_keys().find(sub);
  if (it == command_keys().end()) throw ConfigError("unknown subcommand '" + sub + "'");
  if (!c.is_object()) throw ConfigError("config must be a flat JSON object");
  const std::set<std::string> allowed(it->second.allowed.begin(), it->second.allowed.end());
  for (const auto& [k, v] : c.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' for " + sub);
    if (v.is_object()) throw ConfigError("key '" + k + "': config is flat, nested objects are not accepted");
  }
  for (const auto& k : it->second.required) need(c, k);

  if (c.contains("beta") && c.contains("mu")) {
    if (c.contains("gamma")) model_of(c).validate();
  }
  if (c.contains("gamma")) {
    const double g = num(c, "gamma");
    if (sub == "gmc" || sub == "tails-smalldev" || sub == "multifractal") gamma_range(g, 2.0, sub);
    if (sub == "dgmc" || sub == "tails-dgmc") gamma_range(g, std::sqrt(2.0), sub);
    if (sub == "multifractal")
      for (double q : list_or(c, "qs", {1.0, 2.0}))
        if (q == 2 && g * g >= 2) throw ConfigError("multifractal q = 2 needs gamma^2 < 2");
  }
  if (sub == "loop-expansion") {
    if (integer(c, "genus") < 2) throw ConfigError("genus h >= 2 required");
    if (num(c, "beta") < 0) throw ConfigError("beta must be >= 0");
    for (double k : list_or(c, "kappas", {}))
      if (!(k * k > 25.0 / 3)) throw ConfigError("kappa^2 > 25/3 required for a real gamma(kappa)");
  }
  if (sub == "volume-law" && count(c, "draws") < 10000) throw ConfigError("volume-law needs draws >= 10000");
  if (c.contains("N")) {
    const auto s = surface_of(c);
    if (c.contains("cutoffs") || c.contains("cutoff")) {
      const auto cuts = cutoffs_of(c);
      if (cuts.empty()) throw ConfigError("cutoffs must not be empty");
      for (double t : cuts) validate_cutoff(s, {CutoffKind::scale, t});
      kernel_of(c).validate(s);
    }
    if (sub == "polyakov" && s.n() > 64) throw ConfigError("polyakov uses dense eigen-solves: N <= 64");
    if (c.contains("region_fraction")) {
      const double a = num(c, "region_fraction");
      if (!(a > 0 && a <= 1)) throw ConfigError("region_fraction must lie in (0, 1]");
    }
    if (c.contains("normalization")) normalization_from_string(str_or(c, "normalization", ""));
    const std::string fm = str_or(c, "measure_functional", "none");
    if (fm != "none" && fm != "d_over_g" && fm != "p")
      throw ConfigError("measure_functional must be none, d_over_g or p");
  }
  if (c.contains("samples")) count(c, "samples");
}

RunOutput run_experiment(const std::string& sub, const json& c, std::uint64_t seed, int threads) {
  validate_config(sub, c);
  RunOutput out;
  if (sub == "sample-field") out = run_sample_field(c, seed, threads);
  else if (sub == "gmc") out = run_chaos(c, seed, threads, false);
  else if (sub == "dgmc") out = run_chaos(c, seed, threads, true);
  else if (sub == "actions-check") out = run_actions(c, seed, threads);
  else if (sub == "weyl-check") out = run_weyl(c, seed, threads);
  else if (sub == "ml-estimate") out = run_ml(c, seed, threads);
  else if (sub == "volume-law") out = run_volume(c, seed, threads);
  else if (sub == "tails-dgmc") out = run_tails_dgmc(c, seed, threads);
  else if (sub == "tails-smalldev") out = run_smalldev(c, seed, threads);
  else if (sub == "multifractal") out = run_multifractal(c, seed, threads);
  else if (sub == "polyakov") out = run_polyakov(c, seed, threads);
  else out = run_loop(c, seed, threads);
  out.report = full_report(sub, c, seed, out);
  return out;
}

std::string run_id(const std::string& sub, const json& c, std::uint64_t seed) {
  const json key = {{"subcommand", sub}, {"config", c}, {"seed", seed}};
  return sha256_hex(key.dump()).substr(0, 16);
}

std::string write_run(const std::string& out_root, const std::string& sub, const json& c, std::uint64_t seed,
                      int threads, const std::string& format) {
  if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
  const auto res = run_experiment(sub, c, seed, threads);
  const fs::path dir = fs::path(out_root) / (sub + "-" + run_id(sub, c, seed));
  fs::create_directories(dir);
  json rep = res.report;
  rep["timestamp"] = timestamp();
  const std::string data = data_text(res.data, format);
  const json stored = {{"subcommand", sub}, {"config", c}, {"seed", seed}, {"format", format}, {"threads", threads}};
  write_file((dir / "config.json").string(), stored.dump(2) + "\n");
  write_file((dir / "report.json").string(), rep.dump(2) + "\n");
  write_file((dir / data_name(format)).string(), data);
  const json manifest = {{"run_id", run_id(sub, c, seed)},
                         {"artifacts", {{"report.json", report_hash(res.report)}, {data_name(format), sha256_hex(data)}}}};
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return dir.string();
}

ReplayResult replay_run(const std::string& dir_s, int threads) {
  const fs::path dir(dir_s);
  for (const char* f : {"config.json", "manifest.json", "report.json"})
    if (!fs::exists(dir / f)) throw ConfigError(std::string("missing artifact ") + f + " in " + dir_s);
  json stored, manifest, report;
  try {
    stored = json::parse(read_file((dir / "config.json").string()));
    manifest = json::parse(read_file((dir / "manifest.json").string()));
    report = json::parse(read_file((dir / "report.json").string()));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("unreadable run artifact: ") + e.what());
  }
  const std::string sub = stored.at("subcommand"), format = stored.at("format");
  const std::uint64_t seed = stored.at("seed");
  const json& c = stored.at("config");
  if (!fs::exists(dir / data_name(format))) throw ConfigError("missing artifact " + data_name(format));
  if (manifest.at("run_id") != run_id(sub, c, seed)) throw ConfigError("run id does not match the stored config");
  const auto res = run_experiment(sub, c, seed, threads);
  const std::map<std::string, std::string> fresh = {{"report.json", report_hash(res.report)},
                                                    {data_name(format), sha256_hex(data_text(res.data, format))}};
  const std::map<std::string, std::string> on_disk = {
      {"report.json", report_hash(report)}, {data_name(format), sha256_hex(read_file((dir / data_name(format)).string()))}};
  ReplayResult r;
  for (const auto& [name, h] : fresh) {
    const bool ok = manifest.at("artifacts").value(name, "") == h && on_disk.at(name) == h;
    if (!ok) r.diverged.push_back(name);
  }
  r.identical = r.diverged.empty();
  return r;
}

std::vector<SmokeCase> smoke_configs() {
  const json torus = {{"N", 32}, {"area", 1.0}, {"genus", 2}};
  auto with = [&](json extra) {
    json c = torus;
    for (const auto& [k, v] : extra.items()) c[k] = v;
    return c;
  };
  return {
      {"sample-field", with({{"field", "scale"}, {"cutoffs", {1.5, 2.5}}, {"samples", 8}}), 11},
      {"gmc", with({{"cutoffs", {2.0, 2.5}}, {"samples", 16}, {"gamma", 0.5}}), 12},
      {"dgmc", with({{"cutoffs", {1.5, 2.0, 2.5}}, {"samples", 16}, {"gamma", 0.5}, {"alpha", {0.5, 1.0}}}), 13},
      {"actions-check", with({{"cutoff", 2.0}, {"samples", 8}, {"gamma", 0.5}, {"beta", 0.2}, {"mu", 1.0}}), 14},
      {"weyl-check", with({{"cutoff", 2.0}, {"samples", 4}, {"gamma", 0.5}, {"beta", 0.2}, {"mu", 1.0}}), 15},
      {"ml-estimate",
       with({{"cutoff", 2.0}, {"samples", 32}, {"gamma", 0.5}, {"beta", 0.2}, {"mu", 1.0},
             {"measure_functional", "d_over_g"}}),
       16},
      {"volume-law", {{"gamma", 0.8}, {"beta", 0.0}, {"mu", 1.0}, {"genus", 2}, {"draws", 10000}}, 17},
      {"tails-dgmc", with({{"cutoff", 2.5}, {"samples", 400}, {"gamma", 0.5}, {"min_hits", 5}}), 18},
      {"tails-smalldev", with({{"cutoff", 2.5}, {"samples", 400}, {"gamma", 1.5}, {"min_hits", 5}}), 19},
      {"multifractal", with({{"N", 64}, {"cutoff", 3.0}, {"samples", 4}, {"gamma", 0.5}}), 20},
      {"polyakov", with({{"N", 16}, {"amplitudes", {0.1, 0.2, 0.3}}}), 21},
      {"loop-expansion", {{"kappas", {10, 20, 40, 80}}, {"beta", 0.0}, {"genus", 2}}, 22},
  };
}

}  // namespace mlq
