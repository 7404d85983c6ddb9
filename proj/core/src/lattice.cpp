#include "perco/lattice.hpp"

#include <algorithm>
#include <cstdlib>

namespace perco {

int linf_norm(const Point& x, int dim) {
  int m = 0;
  for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

int l1_norm(const Point& x, int dim) {
  int s = 0;
  for (int i = 0; i < dim; ++i) s += std::abs(x[i]);
  return s;
}

Point add(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point unit(int axis) {
  Point e{};
  e[axis] = 1;
  return e;
}

bool lex_less(const Point& a, const Point& b, int dim) {
  for (int i = 0; i < dim; ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

std::string to_string(const Point& x, int dim) {
  std::string s = "(";
  for (int i = 0; i < dim; ++i) {
    if (i) s += ",";
    s += std::to_string(x[i]);
  }
  return s + ")";
}

bool Box::empty() const {
  for (int i = 0; i < dim; ++i) {
    if (hi[i] < lo[i]) return true;
  }
  return false;
}

std::int64_t Box::volume() const {
  if (empty()) return 0;
  std::int64_t v = 1;
  for (int i = 0; i < dim; ++i) v *= side(i);
  return v;
}

bool Box::contains(const Point& x) const {
  for (int i = 0; i < dim; ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.empty()) return true;
  for (int i = 0; i < dim; ++i) {
    if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
  }
  return true;
}

bool Box::intersects(const Box& other) const { return !intersect(other).empty(); }

Box Box::intersect(const Box& other) const {
  Box b{dim, {}, {}};
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = std::max(lo[i], other.lo[i]);
    b.hi[i] = std::min(hi[i], other.hi[i]);
  }
  return b;
}

Box Box::ball(int dim, const Point& center, int radius) {
  Box b{dim, {}, {}};
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = center[i] - radius;
    b.hi[i] = center[i] + radius;
  }
  return b;
}

BoxIndexer::BoxIndexer(const Box& box) : box_(box) {
  size_ = box.volume();
  std::int64_t s = 1;
  for (int i = box.dim - 1; i >= 0; --i) {
    stride_[i] = s;
    s *= box.side(i);
  }
}

Point BoxIndexer::point(std::int64_t idx) const {
  Point x{};
  for (int i = 0; i < box_.dim; ++i) {
    x[i] = box_.lo[i] + static_cast<int>(idx / stride_[i]);
    idx %= stride_[i];
  }
  return x;
}

}  // namespace perco
