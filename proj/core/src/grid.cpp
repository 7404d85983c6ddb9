#include "perco/grid.hpp"

#include <cmath>

#include "perco/error.hpp"

namespace perco {

std::int64_t GridSpec::size() const {
  std::int64_t n = 1;
  for (int i = 0; i < dim; ++i) n *= count[i];
  return n;
}

std::int64_t GridSpec::index(const std::array<int, kMaxDim>& k) const {
  std::int64_t idx = 0;
  for (int i = 0; i < dim; ++i) idx = idx * count[i] + k[i];
  return idx;
}

std::array<int, kMaxDim> GridSpec::multi_index(std::int64_t idx) const {
  std::array<int, kMaxDim> k{};
  for (int i = dim - 1; i >= 0; --i) {
    k[i] = static_cast<int>(idx % count[i]);
    idx /= count[i];
  }
  return k;
}

std::array<double, kMaxDim> GridSpec::position(std::int64_t idx) const {
  const auto k = multi_index(idx);
  std::array<double, kMaxDim> y{};
  for (int i = 0; i < dim; ++i) y[i] = origin[i] + spacing * k[i];
  return y;
}

GridSpec GridSpec::centered(int dim, const std::array<double, kMaxDim>& center, double half_width, double h) {
  if (!(h > 0.0) || half_width < 0.0) throw PreconditionError("grid spacing must be positive");
  GridSpec g;
  g.dim = dim;
  g.spacing = h;
  const int n = static_cast<int>(std::floor(half_width / h + 1e-9));
  for (int i = 0; i < dim; ++i) {
    g.origin[i] = center[i] - n * h;
    g.count[i] = 2 * n + 1;
  }
  return g;
}

}  // namespace perco
