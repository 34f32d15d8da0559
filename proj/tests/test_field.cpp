#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "mlq/field.hpp"

using namespace mlq;

namespace {

SurfaceModel torus(int n, double v = 1.0) { return build_surface(SurfaceKind::flat_torus, n, v, 2); }

// K_t(r) on the lattice of an n x n torus of side L, by quadrature over the
// scale variable of separable one-dimensional heat sums.
double kt_oracle(int n, double L, double t, double rx, double ry) {
  auto heat = [&](double s, double r) {
    double acc = 0;
    for (int m = -n / 2 + 1; m <= n / 2; ++m) {
      const double k = kTwoPi * m / L;
      acc += std::exp(-k * k * s) * std::cos(k * r);
    }
    return acc;
  };
  auto f = [&](double u) {
    const double s = std::exp(-2 * u);
    return 4 * kPi * s * (heat(s, rx) * heat(s, ry) - 1.0) / (L * L);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 15, 1e-12);
}

struct Moments {
  double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  void add(double x, double y) {
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  double var_x() const { return sxx / n - (sx / n) * (sx / n); }
  double cov() const { return sxy / n - (sx / n) * (sy / n); }
};

}  // namespace

TEST(SampleGff, ZeroMeanAndDeterministic) {
  auto s = torus(64);
  for (int k = 0; k < 5; ++k) {
    const auto x = sample_gff(s, 17, k);
    double m = 0, mx = 0;
    for (double v : x.values) {
      m += v;
      mx = std::max(mx, std::abs(v));
    }
    EXPECT_LT(std::abs(m / x.values.size()), 1e-12 * std::max(1.0, mx));
    EXPECT_TRUE(x.zero_mean);
  }
  EXPECT_EQ(sample_gff(s, 17, 3).values, sample_gff(s, 17, 3).values);
  EXPECT_NE(sample_gff(s, 17, 3).values, sample_gff(s, 18, 3).values);
}

TEST(SampleGff, CovarianceMatchesTwoPiGreen) {
  auto s = torus(32);
  const std::size_t x0 = 0, y0 = 3 * 32 + 1;  // |x - y| ~ 0.1
  const double g = s.green_column(y0).values[x0];
  Moments mo;
  for (int k = 0; k < 10000; ++k) {
    const auto x = sample_gff(s, 99, k);
    mo.add(x.values[x0], x.values[y0]);
  }
  const double ratio = mo.cov() / (kTwoPi * g);
  EXPECT_GT(ratio, 0.9);
  EXPECT_LT(ratio, 1.1);
  // 3 sigma band for a Gaussian covariance estimate
  const double var0 = kTwoPi * s.green_column(x0).values[x0];
  const double se = std::sqrt((var0 * var0 + std::pow(kTwoPi * g, 2)) / mo.n);
  EXPECT_NEAR(mo.cov(), kTwoPi * g, 3 * se);
}

TEST(SampleGff, DirichletSquareVarianceAndBoundary) {
  auto s = build_surface(SurfaceKind::dirichlet_square, 16, 1.0, 2);
  const auto var = cell_variance(s, gff_variance(s));
  const std::size_t mid = 8 * 16 + 8, edge = 0;
  EXPECT_NEAR(var[mid], kTwoPi * s.green_column(mid).values[mid], 1e-10);
  EXPECT_LT(var[edge], var[mid]);
  double v = 0;
  for (int k = 0; k < 4000; ++k) {
    const double z = sample_gff(s, 5, k).values[mid];
    v += z * z;
  }
  v /= 4000;
  EXPECT_NEAR(v, var[mid], 3 * var[mid] * std::sqrt(2.0 / 4000));
}

TEST(CircleAverage, ConstantAndQuadratureRefinement) {
  auto s = torus(64);
  const auto c = s.constant(2.5);
  EXPECT_NEAR(circle_average(s, c, {0.3, 0.7}, 0.05), 2.5, 1e-14);
  GridField f = s.constant(0.0);
  for (std::size_t k = 0; k < s.cells(); ++k) {
    auto p = s.point(k);
    f.values[k] = std::sin(kTwoPi * (2 * p[0] + p[1])) + 0.5 * std::cos(kTwoPi * 3 * p[1]);
  }
  for (double eps : {0.05, 0.1, 0.2}) {
    const double a = circle_average(s, f, {0.41, 0.13}, eps, 64);
    const double b = circle_average(s, f, {0.41, 0.13}, eps, 128);
    EXPECT_NEAR(a, b, 1e-3);
  }
  EXPECT_THROW(circle_average(s, f, {0.5, 0.5}, 1.0 / 64), ConfigError);
}

TEST(CircleAverage, VarianceGrowsLikeMinusLogEps) {
  // Exact variance of the interpolated circle-average functional of the GFF.
  const int n = 512;
  auto s = torus(n);
  const auto v = gff_variance(s);
  const double h = s.spacing();
  std::vector<double> xs, ys;
  for (int i = 0; i <= 6; ++i) {
    const double eps = 4 * h * std::pow(0.125 / (4 * h), i / 6.0);
    GridField w = s.constant(0.0);
    const int nt = 64;
    for (int k = 0; k < nt; ++k) {
      const double th = kTwoPi * k / nt;
      const double px = 0.5 + eps * std::cos(th), py = 0.5 + eps * std::sin(th);
      const int i0 = static_cast<int>(std::floor(px / h)), j0 = static_cast<int>(std::floor(py / h));
      const double fx = px / h - i0, fy = py / h - j0;
      w(i0 % n, j0 % n) += (1 - fx) * (1 - fy) / nt;
      w((i0 + 1) % n, j0 % n) += fx * (1 - fy) / nt;
      w(i0 % n, (j0 + 1) % n) += (1 - fx) * fy / nt;
      w((i0 + 1) % n, (j0 + 1) % n) += fx * fy / nt;
    }
    for (double& x : w.values) x /= s.cell_area();
    xs.push_back(-std::log(eps));
    ys.push_back(s.spectral().quadratic(v, w.values.data()));
  }
  const auto fit = fit_line(xs, ys);
  EXPECT_NEAR(fit.slope, 1.0, 0.05);

  // Ensemble estimate agrees with the exact variance at two radii.
  auto s2 = torus(128);
  const double e1 = 4.0 / 128, e2 = 0.125;
  double v1 = 0, v2 = 0;
  const int samples = 600;
  for (int k = 0; k < samples; ++k) {
    const auto x = sample_gff(s2, 3, k);
    const double a = circle_average(s2, x, {0.25, 0.25}, e1), b = circle_average(s2, x, {0.25, 0.25}, e2);
    v1 += a * a;
    v2 += b * b;
  }
  v1 /= samples;
  v2 /= samples;
  const double ex1 = circle_average_variance(s2, e1), ex2 = circle_average_variance(s2, e2);
  EXPECT_NEAR(v1, ex1, 3.5 * ex1 * std::sqrt(2.0 / samples) + 0.05 * ex1);
  EXPECT_NEAR(v2, ex2, 3.5 * ex2 * std::sqrt(2.0 / samples) + 0.05 * ex2);
}

TEST(CircleAverage, SpectralVarianceAndIntercept) {
  auto s = torus(256);
  const double a = circle_average_variance(s, 4.0 / 256), b = circle_average_variance(s, 16.0 / 256);
  EXPECT_NEAR(a - b, std::log(4.0), 0.03);
  const double w = circle_average_intercept(s);
  EXPECT_NEAR(circle_average_variance(s, 0.05), -std::log(0.05) + w, 0.02);
}

TEST(Kernel, LatticeCovarianceMatchesSeparableOracle) {
  const int n = 32;
  const double L = 0.125;
  auto s = torus(n, L * L);
  KernelFamily k;
  for (double t : {1.0, 3.0, 6.0}) {
    EXPECT_NEAR(kernel_covariance(s, k, t, 0, 0), kt_oracle(n, L, t, 0, 0), 1e-8);
    const std::size_t y = 2 * n + 5;
    auto p = s.point(y);
    EXPECT_NEAR(kernel_covariance(s, k, t, 0, y), kt_oracle(n, L, t, p[0], p[1]), 1e-8);
  }
  EXPECT_EQ(band_variance(s, k, 0, 0), std::vector<double>(s.spectral().modes(), 0.0));
}

TEST(Kernel, HeatKernelLimitIsGff) {
  for (auto kind : {SurfaceKind::flat_torus, SurfaceKind::dirichlet_square}) {
    auto s = build_surface(kind, 16, 1.0, 2);
    KernelFamily k{KernelKind::heat_kernel, LengthConvention::decaying, 50.0};
    const auto a = band_variance(s, k, 0.0, 50.0), g = gff_variance(s);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(a[c], g[c], 1e-12 * std::max(1.0, g[c]));
    // additivity across bands
    const auto b1 = band_variance(s, k, 0.0, 0.7), b2 = band_variance(s, k, 0.7, 2.3), b3 = band_variance(s, k, 0.0, 2.3);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(b1[c] + b2[c], b3[c], 1e-13);
  }
  auto sq = build_surface(SurfaceKind::dirichlet_square, 16, 1.0, 2);
  EXPECT_THROW(band_variance(sq, KernelFamily{}, 0, 1), ConfigError);
}

TEST(Kernel, Diagnostics) {
  const double V = 1.0 / 64;
  auto s = torus(64, V);
  KernelFamily k;
  k.t_max = 6.0;
  const auto d = kernel_diagnostics(s, k);
  EXPECT_GT(d.min_gram_eigenvalue, -1e-12);
  EXPECT_NEAR(d.diagonal_at_tmax, 1.0, 0.01);
  // K_t - min(t, log+ 1/r) stays bounded; the bound includes log(1/side)
  EXPECT_LT(d.max_log_deviation, 4.0);
  // far away only the removed zero mode -4 pi e^{-2t} / V remains
  EXPECT_LT(d.max_tail_density, 1.01 * 4 * kPi * std::exp(-2 * k.t_max) / V);
  // The growing-length variant is not log-correlated: its variance saturates.
  KernelFamily g = k;
  g.convention = LengthConvention::growing;
  EXPECT_LT(kernel_covariance(s, g, 6.0, 0, 0), 1e-6);
  auto unit = torus(256, 1.0);
  EXPECT_NEAR(kernel_covariance(unit, k, 6.0, 0, 0) - kernel_covariance(unit, k, 4.0, 0, 0), 2.0, 0.05);
}

TEST(ScaleField, ZeroCutoffAndNesting) {
  auto s = torus(16, 1.0 / 64);
  KernelFamily k;
  const auto z = sample_scale_field(s, k, 0.0, 1);
  for (double v : z.field.values) EXPECT_EQ(v, 0.0);
  const auto x = sample_scale_field(s, k, 1.0, 4, 2);
  EXPECT_EQ(x.increments.size(), 20u);
  EXPECT_EQ(x.edges.back(), 1.0);
  EXPECT_EQ(x.field.values, sample_scale_field(s, k, 1.0, 4, 2).field.values);
  EXPECT_THROW(sample_scale_field(s, k, k.t_max + 1, 1), ConfigError);
}

TEST(ScaleField, PointwiseCovarianceAgainstOracle) {
  const int n = 32;
  const double L = 0.125;
  auto s = torus(n, L * L);
  KernelFamily k;
  const std::vector<double> cut{4, 5, 6};
  ScaleFieldSampler sampler(s, k, cut);
  const int samples = 10000;
  std::vector<Moments> diag(cut.size()), off(cut.size());
  // pair at |x - y| = e^{-t/2} for t = 6, rounded to cells
  const int step = static_cast<int>(std::lround(std::exp(-3.0) / s.spacing()));
  const std::size_t x0 = 0, y0 = static_cast<std::size_t>(step) * n;
  for (int i = 0; i < samples; ++i) {
    const auto f = sampler.fields(8, i);
    for (std::size_t c = 0; c < cut.size(); ++c) {
      diag[c].add(f[c].values[x0], f[c].values[x0]);
      off[c].add(f[c].values[x0], f[c].values[y0]);
    }
  }
  for (std::size_t c = 0; c < cut.size(); ++c) {
    const double exact = kt_oracle(n, L, cut[c], 0, 0);
    EXPECT_NEAR(sampler.variances()[c][0], exact, 1e-9);
    EXPECT_NEAR(diag[c].var_x(), exact, 3 * exact * std::sqrt(2.0 / samples));
    const double cxy = kt_oracle(n, L, cut[c], step * s.spacing(), 0);
    EXPECT_NEAR(off[c].cov(), cxy, 3 * std::sqrt((exact * exact + cxy * cxy) / samples));
  }
}

TEST(ScaleField, VarianceGrowsLinearlyInCutoff) {
  // Unit torus resolves t = 6 at N = 256. The pointwise variance is estimated
  // from the spatial mean of X_t^2 in each sample (translation invariance).
  const int n = 256;
  auto s = torus(n, 1.0);
  KernelFamily k;
  const std::vector<double> cut{2, 3, 4, 5, 6};
  ScaleFieldSampler sampler(s, k, cut);
  const int samples = 400;
  std::vector<double> m1(cut.size()), m2(cut.size());
  for (int i = 0; i < samples; ++i) {
    const auto f = sampler.fields(21, i);
    for (std::size_t c = 0; c < cut.size(); ++c) {
      double q = 0;
      for (double v : f[c].values) q += v * v;
      q /= f[c].values.size();
      m1[c] += q;
      m2[c] += q * q;
    }
  }
  std::vector<double> vs;
  for (std::size_t c = 0; c < cut.size(); ++c) {
    const double mean = m1[c] / samples, se = std::sqrt((m2[c] / samples - mean * mean) / samples);
    const double exact = kt_oracle(n, 1.0, cut[c], 0, 0);
    EXPECT_NEAR(mean, exact, 3 * se);
    vs.push_back(mean);
  }
  EXPECT_NEAR(fit_line(cut, vs).slope, 1.0, 0.03);
}

TEST(ScaleField, DisjointBandsUncorrelated) {
  auto s = torus(16, 1.0);
  KernelFamily k;
  Moments m;
  for (int i = 0; i < 4000; ++i) {
    const auto f = sample_scale_field(s, k, 0.1, 12, i);
    m.add(f.increments[0].values[7], f.increments[1].values[7]);
  }
  const double corr = m.cov() / std::sqrt(m.var_x() * (m.syy / m.n - std::pow(m.sy / m.n, 2)));
  EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(4000.0));
}

TEST(Recenter, Examples) {
  auto s = torus(16);
  const auto w = s.constant(1.0);
  for (double v : recenter(s.constant(3.0), w).values) EXPECT_NEAR(v, 0.0, 1e-15);
  const auto x = sample_gff(s, 1, 0);
  GridField shifted = x;
  for (double& v : shifted.values) v += 0.7;
  const auto r = recenter(shifted, w);
  for (std::size_t c = 0; c < s.cells(); ++c) EXPECT_NEAR(r.values[c], x.values[c], 1e-12);
  GridField wr = s.constant(0.0);
  for (std::size_t c = 0; c < s.cells(); ++c) wr.values[c] = 0.1 + (c % 7);
  const auto rr = recenter(shifted, wr);
  double acc = 0, sw = 0;
  for (std::size_t c = 0; c < s.cells(); ++c) {
    acc += wr.values[c] * rr.values[c];
    sw += wr.values[c];
  }
  EXPECT_NEAR(acc / sw, 0.0, 1e-12);
  GridField bad = w;
  bad.values[3] = -1;
  EXPECT_THROW(recenter(x, bad), ConfigError);
  EXPECT_THROW(recenter(x, s.constant(0.0)), ConfigError);
}
