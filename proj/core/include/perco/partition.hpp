#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perco/env.hpp"
#include "perco/geometry.hpp"
#include "perco/grid.hpp"

namespace perco {

struct PartitionOptions {
  // A cube at scale m is admissible when every scale-m cube of the box within
  // l_inf distance neighbor_factor * 3^m is good, and so is its predecessor.
  double neighbor_factor = 1.0;
  WellConnectedOptions goodness;
};

// Disjoint cover of the box by good triadic cubes whose strict ancestors are
// all good and whose adjacent cells differ in size by at most a factor 3.
class Partition {
 public:
  // Cells taken as given; representatives are computed but nothing is
  // verified. Used for fixtures and by the builder.
  static Partition from_cells(const Environment& env, std::vector<TriadicCube> cells);

  int dim() const { return dim_; }
  int top_scale() const { return top_scale_; }
  const Box& box() const { return indexer_.box(); }
  const std::vector<TriadicCube>& cells() const { return cells_; }
  std::size_t num_cells() const { return cells_.size(); }

  // Cell index per box vertex in indexer order; -1 where uncovered.
  std::span<const std::int32_t> lookup() const { return lookup_; }
  std::int32_t cell_index(const Point& x) const;
  const TriadicCube& cell_of(const Point& x) const;
  std::int64_t size_at(const Point& x) const { return cell_of(x).size(); }

  // Point of the crossing cluster of the cell closest to its centre in l1,
  // lexicographically smallest among ties.
  const Point& representative(const TriadicCube& cell) const;
  const Point& representative(std::size_t cell) const;
  bool has_representative(std::size_t cell) const { return reps_[cell].has_value(); }

  // Order-sensitive hash of the cell list.
  std::uint64_t fingerprint() const;

  // Rows: scale, centre coordinates, representative coordinates.
  void write_csv(std::ostream& out) const;
  // Cell index per vertex as little-endian int32, indexer order.
  void write_lookup(std::ostream& out) const;

  bool operator==(const Partition& other) const { return cells_ == other.cells_ && reps_ == other.reps_; }

 private:
  Partition(const Environment& env, std::vector<TriadicCube> cells);

  int dim_ = 2;
  int top_scale_ = 0;
  BoxIndexer indexer_;
  std::vector<TriadicCube> cells_;
  std::vector<std::optional<Point>> reps_;
  std::vector<std::int32_t> lookup_;
};

struct PartitionCheck {
  std::int64_t uncovered = 0;
  std::int64_t overlaps = 0;
  std::int64_t bad_cells = 0;           // cells of scale < 1 or not good
  std::int64_t bad_ancestors = 0;       // strict in-box ancestors that are not good
  std::int64_t size_jumps = 0;          // adjacent cells with size ratio above 3
  std::int64_t missing_representatives = 0;
  std::vector<std::string> messages;    // first few violations, human readable

  std::int64_t violations() const {
    return uncovered + overlaps + bad_cells + bad_ancestors + size_jumps + missing_representatives;
  }
  bool ok() const { return violations() == 0; }
};

PartitionCheck check_partition(const Partition& p, const GoodnessMap& goodness);

// Throws UnresolvableRegionError when the box itself is not admissible and
// ConstructionError when the result fails check_partition.
Partition build_partition(const Environment& env, const PartitionOptions& opts = {});
Partition build_partition(const Environment& env, const GoodnessMap& goodness, const PartitionOptions& opts = {});

// Smallest admissible scale n*(x) per box vertex before the size repair.
std::vector<int> minimal_admissible_scales(const GoodnessMap& goodness, const PartitionOptions& opts = {});

struct CoarseFunction {
  std::vector<double> values;  // per box vertex, indexer order
  std::uint64_t source = 0;    // fingerprint of the partition
};

// [u]_P(x) = u(representative of the cell of x). u is given on the vertices of
// g; throws DataError when a representative is not a vertex of g.
CoarseFunction coarsen(const Partition& p, const ClusterGraph& g, std::span<const double> u);

enum class KernelFamily { polynomial_bump, truncated_gaussian };

struct MollifierSpec {
  KernelFamily family = KernelFamily::polynomial_bump;
  double support_radius = 0.5;
  double resolution = 1.0 / 64.0;  // quadrature sub-grid step
};

// Separable mollifier: eta(y) = prod phi(y_i) with phi supported in
// (-1/2, 1/2) and of unit mass. window(s) is the mass of phi over
// [s - 1/2, s + 1/2], i.e. the convolution of phi with a unit box.
class Mollifier {
 public:
  explicit Mollifier(const MollifierSpec& spec);

  const MollifierSpec& spec() const { return spec_; }
  double profile(double t) const;  // normalised phi
  double window(double s) const;
  double window_derivative(double s) const { return profile(s + 0.5) - profile(s - 0.5); }
  double mass() const;  // quadrature mass of the normalised profile

 private:
  double raw(double t) const;
  double integrate(double a, double b) const;

  MollifierSpec spec_;
  double norm_ = 1.0;
};

// Values (components = 1) and gradients (components = d) of the piecewise
// constant extension of f convolved with eta, sampled on grid. The grid must
// stay within the box shrunk by 1.
struct MollifiedField {
  GridField value;
  GridField gradient;
};
MollifiedField mollify(const Partition& p, const CoarseFunction& f, const Mollifier& eta, const GridSpec& grid);

// Ratio of sum over C_*(region) of |w - [w]_P|^s to the sum of
// size(cell)^{s d} |grad w|^s, where |grad w|(x) = (1/2 sum_y |w(x)-w(y)|^2)^{1/2}
// over open cluster neighbours. 0/0 returns 0.
double coarsening_ratio(const Environment& env, const Partition& p, const ClusterGraph& g, std::span<const double> w,
                        double s, const TriadicCube& region);
// Ratio of sum over box bonds inside region of |grad [w]_P|^s to the sum over
// C_*(region) of size(cell)^{s d - 1} |grad w|^s.
double gradient_coarsening_ratio(const Environment& env, const Partition& p, const ClusterGraph& g,
                                 std::span<const double> w, double s, const TriadicCube& region);

struct CoarsenessStatistics {
  std::vector<std::int64_t> thresholds;  // t values: 1, 3, 9, ...
  std::vector<double> exceedance;        // fraction of partitions with size(cell of 0) > t
  std::vector<std::int64_t> sizes_at_origin;
  // Per partition: smallest m such that the average of size^moment over
  // every box cube of scale >= m containing 0 stays below threshold; -1 if none.
  std::vector<int> stabilisation_scale;
  double moment = 1.0;
  double threshold = 0.0;
};
CoarsenessStatistics coarseness_statistics(std::span<const Partition> ensemble, double moment, double threshold);

struct ResampleStability {
  float old_value = 0.0f;
  float new_value = 0.0f;
  std::int64_t size_near = 0;         // size of the cell of the edge base before resampling
  double max_ratio_near = 1.0;        // max over cells within reach of the edge, new size / old size (either way)
  bool far_cells_equal = true;        // cells farther than far_factor * size_near agree
  std::int64_t far_mismatches = 0;
};
ResampleStability partition_resample_stability(const Environment& env, const EdgeRef& e, std::uint64_t aux_seed,
                                               double far_factor, const PartitionOptions& opts = {});
ResampleStability compare_partitions(const Partition& before, const Partition& after, const EdgeRef& e,
                                     double far_factor);

}  // namespace perco
