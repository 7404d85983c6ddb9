#pragma once

#include <cstdint>
#include <vector>

#include "perco/env.hpp"
#include "perco/geometry.hpp"

namespace perco {

bool well_connected_box(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts);

namespace detail {

// Breadth-first labelling of the open components of a box with reusable
// buffers. Coordinates in Component are local to the box.
class Labeler {
 public:
  struct Component {
    std::int64_t size = 0;
    std::int64_t first = 0;  // local index of the smallest vertex
    std::uint8_t faces = 0;  // bit 2i: low face of axis i, bit 2i+1: high face
    bool marked = false;     // holds a vertex flagged in the mask
    std::array<int, kMaxDim> lo{};
    std::array<int, kMaxDim> hi{};
  };

  void run(const Environment& env, const Box& box, const std::uint8_t* mask = nullptr);

  std::uint8_t all_faces() const;
  int crossing_component() const;
  int largest_component() const;
  bool crossable() const;
  std::vector<Point> members(int comp) const;

  std::vector<std::int32_t> label;
  std::vector<Component> comps;

 private:
  Box box_{};
  int dim_ = 2;
  std::vector<std::int64_t> queue_;
};

Labeler& thread_labeler();

}  // namespace detail
}  // namespace perco
