#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace perco {

inline constexpr int kMaxDim = 3;

// Lattice point of Z^d, d <= 3. Coordinates beyond the active dimension are 0.
using Point = std::array<int, kMaxDim>;

constexpr std::int64_t pow3(int n) {
  std::int64_t r = 1;
  for (int i = 0; i < n; ++i) r *= 3;
  return r;
}

// Floor division for possibly negative numerators.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int linf_norm(const Point& x, int dim);
int l1_norm(const Point& x, int dim);
Point add(const Point& a, const Point& b);
Point sub(const Point& a, const Point& b);
Point unit(int axis);
bool lex_less(const Point& a, const Point& b, int dim);
std::string to_string(const Point& x, int dim);

// Axis-aligned box of lattice points, bounds inclusive.
struct Box {
  int dim = 2;
  Point lo{};
  Point hi{};

  int side(int axis) const { return hi[axis] - lo[axis] + 1; }
  bool empty() const;
  std::int64_t volume() const;
  bool contains(const Point& x) const;
  bool contains(const Box& other) const;
  bool intersects(const Box& other) const;
  Box intersect(const Box& other) const;
  // Points x with |x - center|_inf <= radius.
  static Box ball(int dim, const Point& center, int radius);
  bool operator==(const Box&) const = default;
};

// Row-major index of points of a box, first coordinate most significant, so
// index order equals lexicographic order.
class BoxIndexer {
 public:
  explicit BoxIndexer(const Box& box);

  const Box& box() const { return box_; }
  std::int64_t size() const { return size_; }
  std::int64_t stride(int axis) const { return stride_[axis]; }
  std::int64_t index(const Point& x) const {
    std::int64_t idx = 0;
    for (int i = 0; i < box_.dim; ++i) idx += static_cast<std::int64_t>(x[i] - box_.lo[i]) * stride_[i];
    return idx;
  }
  Point point(std::int64_t idx) const;

 private:
  Box box_;
  std::array<std::int64_t, kMaxDim> stride_{};
  std::int64_t size_ = 0;
};

}  // namespace perco
