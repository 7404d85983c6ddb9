#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perco/env.hpp"
#include "perco/lattice.hpp"

namespace perco {

// Triadic cube of scale n: side 3^n, centre in 3^n Z^d.
struct TriadicCube {
  int dim = 2;
  int scale = 0;
  Point center{};

  std::int64_t size() const { return pow3(scale); }
  int half() const { return static_cast<int>((size() - 1) / 2); }
  Box box() const;
  bool contains(const Point& x) const;
  bool contains(const TriadicCube& other) const;
  bool disjoint(const TriadicCube& other) const;

  TriadicCube predecessor() const;
  // The 3^d cubes of scale n - 1 tiling this cube, in lexicographic order of centres.
  std::vector<TriadicCube> successors() const;
  // Centre-preserving dilation r * cube = {x : |x - z|_inf < r * size / 2}.
  Box dilated(double r) const;

  static TriadicCube cube_of(int dim, const Point& x, int scale);
  bool operator==(const TriadicCube&) const = default;
};

std::string to_string(const TriadicCube& c);

// Connected open subgraph with compressed adjacency. Edges are listed once,
// oriented from the lexicographically smaller endpoint (the lower index).
class ClusterGraph {
 public:
  struct Edge {
    std::int32_t tail = 0;
    std::int32_t head = 0;
    int axis = 0;  // head = tail + e_axis for lattice clusters
    double conductance = 0.0;
  };

  ClusterGraph() = default;
  // Graph on explicit lattice points; edges given as (tail, head, conductance)
  // with tail < head. Throws TopologyError when the result is disconnected.
  static ClusterGraph from_edges(int dim, std::vector<Point> points, std::vector<Edge> edges);

  int dim() const { return dim_; }
  std::int32_t num_vertices() const { return static_cast<std::int32_t>(points_.size()); }
  std::int32_t num_edges() const { return static_cast<std::int32_t>(edges_.size()); }
  bool empty() const { return points_.empty(); }

  const std::vector<Point>& points() const { return points_; }
  const Point& point(std::int32_t i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::int32_t k) const { return edges_[static_cast<std::size_t>(k)]; }
  EdgeRef edge_ref(std::int32_t k) const;

  // Adjacency of vertex i: incident edge ids, neighbour ids in parallel.
  std::span<const std::int32_t> neighbors(std::int32_t i) const;
  std::span<const std::int32_t> incident_edges(std::int32_t i) const;

  // -1 when x is not a vertex.
  std::int32_t index_of(const Point& x) const;
  bool contains(const Point& x) const { return index_of(x) >= 0; }
  // -1 when the bond is not an edge of the graph.
  std::int32_t edge_index(const EdgeRef& e) const;
  std::int32_t edge_between(std::int32_t i, std::int32_t j) const;

  const Box& bounding_box() const { return bbox_; }

 private:
  friend ClusterGraph build_cluster_graph(const Environment& env, std::vector<Point> points);
  void finalize();

  int dim_ = 2;
  std::vector<Point> points_;
  std::vector<Edge> edges_;
  std::vector<std::int32_t> offsets_;
  std::vector<std::int32_t> adj_vertex_;
  std::vector<std::int32_t> adj_edge_;
  Box bbox_{};
  std::vector<std::int32_t> lookup_;
};

// Induced open subgraph of env on the given points (which must form one
// open component for the result to be valid).
ClusterGraph build_cluster_graph(const Environment& env, std::vector<Point> points);

// Open components of the subgraph induced on region, each sorted
// lexicographically, listed in order of their smallest vertex.
std::vector<std::vector<Point>> open_clusters(const Environment& env, const Box& region);
std::vector<std::vector<Point>> open_clusters(const Environment& env, std::span<const Point> region);

// Largest component; ties go to the one holding the lexicographically smallest
// vertex. Throws EmptyClusterError when the region has no open edge.
ClusterGraph maximal_cluster(const Environment& env, const Box& region);
ClusterGraph maximal_cluster(const Environment& env, std::span<const Point> region);

bool is_crossable(const Environment& env, const Box& cube);
bool is_crossable(const Environment& env, const TriadicCube& cube);

// Largest open component inside the cube meeting all 2d faces, sorted.
std::optional<std::vector<Point>> crossing_cluster(const Environment& env, const Box& cube);
std::optional<std::vector<Point>> crossing_cluster(const Environment& env, const TriadicCube& cube);

enum class SubcubeFamily { sparse, exhaustive };

struct WellConnectedOptions {
  SubcubeFamily family = SubcubeFamily::sparse;
  // Resolution t = max(ceil(fraction * size), min_resolution). Sub-cubes of
  // side in [t, floor(size / 2)] are tested and components of extent >= t
  // must reach the crossing cluster. fraction = 1/10 with min_resolution = 1
  // is the asymptotic definition; a larger floor discards sub-cubes too small
  // to be crossed reliably at finite size.
  double fraction = 0.1;
  int min_resolution = 1;
};

// Throws PreconditionError when size(cube) < 3 or the cube leaves the box.
bool is_well_connected(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts = {});
bool is_good(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts = {});

// Well-connectedness and goodness of every triadic cube of scale 1..M inside
// the environment box, evaluated once per cube.
class GoodnessMap {
 public:
  explicit GoodnessMap(const Environment& env, const WellConnectedOptions& opts = {});

  int dim() const { return dim_; }
  int top_scale() const { return top_scale_; }
  // Cubes per axis at scale n.
  int count(int scale) const { return static_cast<int>(pow3(top_scale_ - scale)); }
  bool in_box(const TriadicCube& c) const;
  bool well_connected(const TriadicCube& c) const;
  bool good(const TriadicCube& c) const;
  std::vector<TriadicCube> cubes(int scale) const;

  // Recompute the flags of every cube containing a bond endpoint; used after a
  // single-bond change of the environment.
  void update_edge(const Environment& env, const EdgeRef& e);

  void write_csv(std::ostream& out) const;

 private:
  std::size_t slot(const TriadicCube& c) const;
  void evaluate(const Environment& env, const TriadicCube& c);

  int dim_;
  int top_scale_;
  WellConnectedOptions opts_;
  std::vector<std::size_t> offset_;  // per scale, into the flag arrays
  std::vector<std::uint8_t> wc_;
  std::vector<std::uint8_t> good_;
};

}  // namespace perco
