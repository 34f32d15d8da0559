#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mlq {

struct LinearFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

/// Ordinary least squares y = a + b x.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Output of every tail, scaling and refinement check. Unused fields stay empty.
struct FitReport {
  std::string name;
  std::string transform;
  std::vector<double> thresholds;
  std::vector<double> probabilities;
  std::vector<double> wilson_lo;
  std::vector<double> wilson_hi;
  std::vector<std::size_t> hits;
  std::vector<double> x;
  std::vector<double> y;
  LinearFit fit;
  double slope_ci_lo = std::numeric_limits<double>::quiet_NaN();
  double slope_ci_hi = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples = 0;
  std::string cutoff;
  std::map<std::string, double> values;
  std::vector<std::string> notes;

  void set_fit(const LinearFit& f, double z = 1.959963984540054);
  double value(const std::string& key) const;
};

}  // namespace mlq
