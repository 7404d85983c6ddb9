#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "perco/lattice.hpp"

namespace perco {

// Regular sample grid origin + h * k, 0 <= k_i < count_i.
struct GridSpec {
  int dim = 2;
  std::array<double, kMaxDim> origin{};
  double spacing = 1.0;
  std::array<int, kMaxDim> count{1, 1, 1};

  std::int64_t size() const;
  std::int64_t index(const std::array<int, kMaxDim>& k) const;
  std::array<int, kMaxDim> multi_index(std::int64_t idx) const;
  std::array<double, kMaxDim> position(std::int64_t idx) const;
  // Grid of spacing h covering |y - center|_inf <= half_width.
  static GridSpec centered(int dim, const std::array<double, kMaxDim>& center, double half_width, double h);
};

// Sampled field with `components` values per grid point (1 for scalars, d for
// gradients), stored point-major.
struct GridField {
  GridSpec grid;
  int components = 1;
  std::vector<double> values;

  GridField() = default;
  GridField(const GridSpec& g, int comps) : grid(g), components(comps), values(static_cast<std::size_t>(g.size() * comps), 0.0) {}
  double& at(std::int64_t idx, int c = 0) { return values[static_cast<std::size_t>(idx * components + c)]; }
  double at(std::int64_t idx, int c = 0) const { return values[static_cast<std::size_t>(idx * components + c)]; }
};

}  // namespace perco
