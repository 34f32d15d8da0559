#include "mlq/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "mlq/common.hpp"
#include "mlq/io.hpp"

namespace mlq {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  if (threads < 0) throw ConfigError("thread count must be >= 0");
  unsigned t = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<unsigned>(threads);
  t = static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(n, 1)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < t; ++k) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::vector<ChaosRecord>> chaos_ensemble(const SurfaceModel& s, const ChaosEnsembleSpec& spec,
                                                     int threads, const ChaosVisitor& visit) {
  if (spec.samples == 0) throw ConfigError("ensemble needs at least one sample");
  if (spec.cutoffs.empty()) throw ConfigError("ensemble needs at least one cutoff");
  for (double t : spec.cutoffs) validate_cutoff(s, {CutoffKind::scale, t});
  if (spec.actions) {
    spec.params.validate();
    if (std::abs(spec.params.gamma - spec.gamma) > 1e-15) throw ConfigError("model gamma differs from chaos gamma");
  }
  const ScaleFieldSampler sampler(s, spec.kernel, spec.cutoffs);
  const std::size_t nc = spec.cutoffs.size();
  std::vector<std::vector<ChaosRecord>> out(nc, std::vector<ChaosRecord>(spec.samples));
  parallel_for(spec.samples, threads, [&](std::size_t i) {
    const auto fields = sampler.fields(spec.seed, i);
    for (std::size_t c = 0; c < nc; ++c) {
      RegularizedField r;
      r.values = fields[c];
      r.variance = sampler.variances()[c];
      r.cutoff = {CutoffKind::scale, spec.cutoffs[c]};
      r.seed = spec.seed;
      r.sample = i;
      const ChaosSample ch = spec.derivative ? dgmc(s, r, spec.gamma, spec.normalization, spec.region)
                                             : gmc(s, r, spec.gamma, spec.normalization, spec.region);
      ChaosRecord& rec = out[c][i];
      rec.sample = i;
      rec.cutoff = spec.cutoffs[c];
      rec.g = ch.total_gmc;
      if (spec.derivative) rec.d = ch.total_dgmc;
      if (spec.actions) {
        const auto a = quantum_mabuchi_action(s, ch, 0.0, spec.params);
        rec.t1 = a.t1;
        rec.t2 = a.t2;
        rec.t3 = a.t3;
        rec.t4 = a.t4;
        rec.p = a.t1 + a.t3;
      }
      if (visit) visit(i, c, ch);
    }
  });
  return out;
}

std::vector<FitReport> multifractal(const SurfaceModel& s, const KernelFamily& k, double t, double gamma,
                                    const std::vector<double>& qs, const std::vector<double>& radii,
                                    std::uint64_t seed, std::size_t samples, int centre_stride, int threads) {
  if (qs.empty() || radii.size() < 2) throw ConfigError("multifractal needs q values and at least two radii");
  if (centre_stride < 1) throw ConfigError("centre stride must be >= 1");
  for (double q : qs)
    if (q == 2 && gamma * gamma >= 2) throw ConfigError("q = 2 moments diverge unless gamma^2 < 2");
  std::vector<BallStencil> st;
  for (double r : radii) st.push_back(ball_stencil(s, r));
  const int n = s.n();
  std::vector<std::pair<int, int>> centres;
  for (int i = 0; i < n; i += centre_stride)
    for (int j = 0; j < n; j += centre_stride) centres.emplace_back(i, j);
  // per sample: mean over centres of G(B)^q, indexed [q][r]
  std::vector<std::vector<double>> acc(samples, std::vector<double>(qs.size() * radii.size(), 0.0));
  ChaosEnsembleSpec spec;
  spec.kernel = k;
  spec.cutoffs = {t};
  spec.gamma = gamma;
  spec.seed = seed;
  spec.samples = samples;
  spec.derivative = false;
  chaos_ensemble(s, spec, threads, [&](std::size_t i, std::size_t, const ChaosSample& ch) {
    for (std::size_t ri = 0; ri < radii.size(); ++ri)
      for (const auto& [ci, cj] : centres) {
        const double m = ball_mass(s, ch.gmc_cells, ci, cj, st[ri]);
        for (std::size_t qi = 0; qi < qs.size(); ++qi)
          acc[i][qi * radii.size() + ri] += std::pow(m, qs[qi]) / double(centres.size());
      }
  });
  std::vector<FitReport> out;
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    FitReport r;
    const double q = qs[qi];
    r.name = "multifractal_q" + format_double(q);
    r.transform = "log E[G(B(x,r))^q] vs log r";
    r.samples = samples;
    r.cutoff = "t=" + format_double(t);
    r.thresholds = radii;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
      double m = 0, m2 = 0;
      for (std::size_t i = 0; i < samples; ++i) {
        const double v = acc[i][qi * radii.size() + ri];
        m += v;
        m2 += v * v;
      }
      m /= double(samples);
      const double se = samples > 1 ? std::sqrt(std::max(0.0, m2 / double(samples) - m * m) / double(samples - 1)) : 0;
      r.x.push_back(std::log(radii[ri]));
      r.y.push_back(std::log(m));
      r.probabilities.push_back(m);  // moment estimates
      r.wilson_lo.push_back(m - 1.959963984540054 * se);
      r.wilson_hi.push_back(m + 1.959963984540054 * se);
    }
    r.set_fit(fit_line(r.x, r.y));
    const double xi = (2 + gamma * gamma / 2) * q - gamma * gamma * q * q / 2;
    r.values["q"] = q;
    r.values["xi"] = xi;
    r.values["relative_error"] = r.fit.slope / xi - 1;
    r.notes.push_back("moment estimates stored in probabilities, 95% normal intervals in wilson_lo/hi");
    out.push_back(std::move(r));
  }
  return out;
}

GridField square_region(const SurfaceModel& s, double a) {
  if (!(a > 0 && a <= 1)) throw ConfigError("square region fraction must lie in (0, 1]");
  GridField w = s.constant(0.0);
  const int n = s.n(), m = static_cast<int>(std::lround(a * n));
  if (m < 1) throw ConfigError("square region smaller than one cell");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) w.values[static_cast<std::size_t>(i) * n + j] = 1.0;
  return w;
}

SmallDevSamples small_dev_ensemble(const SurfaceModel& s, const KernelFamily& k, double t, double gamma,
                                   const GridField& region, std::uint64_t seed, std::size_t samples, int threads) {
  if (!(gamma > 0 && gamma < 2)) throw ConfigError("GMC needs gamma in (0, 2)");
  validate_cutoff(s, {CutoffKind::scale, t});
  s.check_field(region);
  double wsum = 0;
  for (std::size_t c = 0; c < s.cells(); ++c) {
    if (region.values[c] < 0) throw ConfigError("region weight must be nonnegative");
    wsum += region.values[c] * s.cell_volume()[c];
  }
  if (!(wsum > 0)) throw ConfigError("region has zero volume");
  const ScaleFieldSampler sampler(s, k, {t});
  const auto& var = sampler.variances()[0];
  SmallDevSamples out;
  out.recentered.resize(samples);
  out.plain.resize(samples);
  out.mean.resize(samples);
  const double g2 = gamma * gamma;
  parallel_for(samples, threads, [&](std::size_t i) {
    const auto x = sampler.fields(seed, i)[0];
    double g = 0, mx = 0;
    for (std::size_t c = 0; c < s.cells(); ++c) {
      const double w = region.values[c];
      if (w == 0) continue;
      const double mu = s.cell_volume()[c] * w;
      g += std::exp(gamma * x.values[c] - 0.5 * g2 * var[c]) * mu;
      mx += x.values[c] * mu;
    }
    mx /= wsum;
    out.plain[i] = g;
    out.mean[i] = mx;
    out.recentered[i] = std::exp(-gamma * mx) * g;
  });
  return out;
}

}  // namespace mlq
