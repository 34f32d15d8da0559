#include "mlq/common.hpp"

#include <cmath>
#include <cstring>
#include <iostream>
#include <mutex>

#include "mlq/report.hpp"
#include "mlq/rng.hpp"

namespace mlq {

namespace {
std::mutex sink_mutex;
WarningSink& sink() {
  static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return s;
}
}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard<std::mutex> lock(sink_mutex);
  sink() = s ? std::move(s) : [](const std::string&) {};
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(sink_mutex);
  sink()(message);
}

std::uint32_t band_stream(double u_lo, double u_hi) {
  // FNV-1a over the bit patterns; 0 is reserved for unbanded fields.
  std::uint64_t bits[2];
  std::memcpy(&bits[0], &u_lo, 8);
  std::memcpy(&bits[1], &u_hi, 8);
  std::uint32_t h = 2166136261u;
  const auto* p = reinterpret_cast<const unsigned char*>(bits);
  for (int i = 0; i < 16; ++i) {
    h ^= p[i];
    h *= 16777619u;
  }
  return h == 0 ? 1u : h;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = std::min(x.size(), y.size());
  f.points = n;
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  f.slope_se = n > 2 ? std::sqrt(sse / double(n - 2) / sxx) : 0.0;
  return f;
}

void FitReport::set_fit(const LinearFit& f, double z) {
  fit = f;
  slope_ci_lo = f.slope - z * f.slope_se;
  slope_ci_hi = f.slope + z * f.slope_se;
}

double FitReport::value(const std::string& key) const {
  auto it = values.find(key);
  return it == values.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

}  // namespace mlq
