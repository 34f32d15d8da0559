#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "mlq/chaos.hpp"
#include "mlq/field.hpp"
#include "mlq/params.hpp"
#include "mlq/report.hpp"

namespace mlq {

/// Runs f(i) for every i in [0, n) on `threads` workers (0 = hardware
/// concurrency). f must only write state owned by index i, so results do not
/// depend on the thread count. The first exception thrown is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

struct ChaosEnsembleSpec {
  KernelFamily kernel;
  std::vector<double> cutoffs;  // scale cutoffs t, increasing; fields are nested
  double gamma = 0;
  Normalization normalization = Normalization::variance_subtraction;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::vector<double> region;  // optional weight on the volume form
  bool derivative = true;      // build DGMC (gamma < sqrt 2) or GMC only
  bool actions = false;        // also evaluate the quantum Mabuchi breakdown (c = 0)
  ModelParams params;          // used when actions is set
};

struct ChaosRecord {
  std::uint64_t sample = 0;
  double cutoff = 0;
  double g = 0;
  double d = std::numeric_limits<double>::quiet_NaN();
  double p = std::numeric_limits<double>::quiet_NaN();
  double t1 = std::numeric_limits<double>::quiet_NaN();
  double t2 = std::numeric_limits<double>::quiet_NaN();
  double t3 = std::numeric_limits<double>::quiet_NaN();
  double t4 = std::numeric_limits<double>::quiet_NaN();
};

using ChaosVisitor = std::function<void(std::size_t sample, std::size_t cutoff_index, const ChaosSample&)>;

/// records[cutoff][sample]. `visit` runs on worker threads for every chaos
/// sample and must only touch per-sample state.
std::vector<std::vector<ChaosRecord>> chaos_ensemble(const SurfaceModel& s, const ChaosEnsembleSpec& spec,
                                                     int threads, const ChaosVisitor& visit = {});

/// Ball-mass moments E[G(B(x, r))^q] averaged over centres on a stride grid
/// and samples at one cutoff; one report per q with the log-log slope against
/// r and target xi(q) = (2 + g^2/2) q - g^2 q^2 / 2.
std::vector<FitReport> multifractal(const SurfaceModel& s, const KernelFamily& k, double t, double gamma,
                                    const std::vector<double>& qs, const std::vector<double>& radii,
                                    std::uint64_t seed, std::size_t samples, int centre_stride, int threads);

struct SmallDevSamples {
  std::vector<double> recentered;  // e^{-gamma m_D(X)} G(D)
  std::vector<double> plain;       // G(D)
  std::vector<double> mean;        // m_D(X)
};

/// GMC mass of region D (indicator or weight grid) with and without
/// recentering X by its D-average, one scale cutoff t.
SmallDevSamples small_dev_ensemble(const SurfaceModel& s, const KernelFamily& k, double t, double gamma,
                                   const GridField& region, std::uint64_t seed, std::size_t samples, int threads);

/// Indicator of the sub-square [0, a L)^2.
GridField square_region(const SurfaceModel& s, double a);

}  // namespace mlq
