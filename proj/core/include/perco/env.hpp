#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "perco/lattice.hpp"

namespace perco {

enum class ConductanceLaw : std::uint32_t { constant_one = 0, uniform = 1 };

std::string to_string(ConductanceLaw law);
ConductanceLaw parse_law(const std::string& name);

// Bond percolation thresholds used to refuse subcritical configurations.
// The d = 3 value is a numerical estimate.
inline constexpr double kPercolationThreshold2d = 0.5;
inline constexpr double kPercolationThreshold3d = 0.2488;
double percolation_threshold(int dim);

struct EnvironmentSpec {
  int dim = 2;
  int scale = 3;  // box is the triadic cube of side 3^scale centred at 0
  double open_probability = 0.75;
  double ellipticity = 0.5;  // lower bound lambda of open conductances
  ConductanceLaw law = ConductanceLaw::uniform;
  std::uint64_t seed = 0;
  bool allow_subcritical = false;

  // Throws ConfigError on invalid or subcritical input.
  void validate() const;
  int side() const;
  bool operator==(const EnvironmentSpec&) const = default;
};

// Nearest-neighbour bond stored canonically as (base, axis): the bond joins
// base and base + e_axis, so base is the lexicographically smaller endpoint.
struct EdgeRef {
  Point base{};
  int axis = 0;

  Point tip() const;
  static EdgeRef between(const Point& x, const Point& y, int dim);
  bool operator==(const EdgeRef&) const = default;
};

// Conductances of every bond inside the box. Bonds leaving the box are absent.
// Immutable; the modifying operations return copies.
class Environment {
 public:
  static Environment generate(const EnvironmentSpec& spec);
  // All in-box bonds set to `value` (0 or in [lambda, 1]).
  static Environment constant(const EnvironmentSpec& spec, float value);
  // Values indexed by bond slot (vertex * dim + axis); slots of absent bonds must be 0.
  static Environment from_values(const EnvironmentSpec& spec, std::vector<float> values);

  const EnvironmentSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  int side() const { return side_; }
  int half() const { return (side_ - 1) / 2; }
  const Box& box() const { return indexer_.box(); }
  const BoxIndexer& indexer() const { return indexer_; }
  std::int64_t num_vertices() const { return indexer_.size(); }
  std::int64_t num_bonds() const;  // in-box bonds only
  float lambda_floor() const { return lambda_f_; }

  bool contains(const Point& x) const { return box().contains(x); }
  std::int64_t vertex_index(const Point& x) const { return indexer_.index(x); }
  Point vertex_point(std::int64_t v) const { return indexer_.point(v); }

  bool has_bond(std::int64_t v, int axis) const;
  bool has_bond(const EdgeRef& e) const;
  // Conductance of the bond (v, v + e_axis); 0 when closed or absent.
  float conductance(std::int64_t v, int axis) const { return values_[static_cast<std::size_t>(v) * spec_.dim + axis]; }
  float conductance(const EdgeRef& e) const;
  // Conductance between neighbours x and y in any order; 0 if either leaves the box.
  float conductance_between(const Point& x, const Point& y) const;
  bool is_open(const EdgeRef& e) const { return conductance(e) > 0.0f; }

  std::int64_t bond_slot(const EdgeRef& e) const;
  EdgeRef bond_at(std::int64_t slot) const;
  std::span<const float> values() const { return values_; }

  std::int64_t count_open() const;
  // Copy with a single bond replaced.
  Environment with_edge(const EdgeRef& e, float value) const;

  // Binary dump of the header and in-box conductances as 32-bit floats.
  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Environment load(std::istream& in);
  static Environment load(const std::string& path);

  bool operator==(const Environment& other) const;

 private:
  Environment(const EnvironmentSpec& spec, std::vector<float> values);
  void check_values() const;

  EnvironmentSpec spec_;
  int side_ = 0;
  BoxIndexer indexer_;
  float lambda_f_ = 0.0f;
  std::vector<float> values_;
};

// Draw a conductance from the single-bond law of an EnvironmentSpec.
float draw_conductance(const EnvironmentSpec& spec, class Rng& rng);

// Copy of env with bond e redrawn independently from the single-bond law.
Environment resample_edge(const Environment& env, const EdgeRef& e, std::uint64_t aux_seed);

// Environment on the triadic box of scale m whose bond at x equals the bond of
// env at x + shift.
Environment translate(const Environment& env, const Point& shift, int scale);

}  // namespace perco
