#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mlq {

/// Real scalar field on an n x n grid, row-major with index i * n + j
/// (i along x, j along y).
struct GridField {
  int n = 0;
  std::uint64_t surface_id = 0;
  bool zero_mean = false;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }
  double& operator()(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }
  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
};

}  // namespace mlq
