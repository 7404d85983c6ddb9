#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "perco/env.hpp"
#include "perco/geometry.hpp"

namespace perco {

// One value per vertex of a ClusterGraph.
using LatticeFunction = std::vector<double>;

// One value per edge of a ClusterGraph, oriented tail -> head, so the value on
// (head, tail) is the negative. Inner products sum over unordered edges; the
// sum over ordered pairs is twice that.
struct VectorField {
  std::vector<double> values;

  double at(const ClusterGraph& g, std::int32_t x, std::int32_t y) const;
};

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;   // final true residual, Euclidean norm over unknowns
  double tolerance = 0.0;  // absolute threshold tol * (1 + |rhs|)
  bool converged = false;
};

std::string to_json(const SolveReport& r);

struct SolverOptions {
  double tolerance = 1e-10;
  int max_iterations = 0;  // 0 selects 20 sqrt(n) + 500
};

// (-div a grad u)(x) = sum_y a(x,y) (u(x) - u(y)) over graph neighbours.
LatticeFunction apply_operator(const ClusterGraph& g, std::span<const double> u);

// grad u(x,y) = u(x) - u(y) on every graph edge.
VectorField gradient(const ClusterGraph& g, std::span<const double> u);
VectorField a_gradient(const ClusterGraph& g, std::span<const double> u);

// Sum over unordered edges.
double inner(const VectorField& f, const VectorField& h);
double inner(const ClusterGraph& g, const VectorField& f, const VectorField& h, bool weighted);

// |F|(x) = (1/2 sum_{y ~ x} F(x,y)^2)^{1/2}.
std::vector<double> vertex_magnitude(const ClusterGraph& g, const VectorField& f);

// Loads b(x) = sum_{y ~ x} xi(x,y).
LatticeFunction divergence_loads(const ClusterGraph& g, const VectorField& xi);

// Solves (-div a grad u) = rhs on the vertices outside `boundary`, with
// u = boundary_values on `boundary`. Jacobi-preconditioned conjugate gradients
// on the interior block; converged when the true residual is at most
// tol * (1 + |b|), b the reduced right-hand side. Throws SolverError on
// reaching the iteration cap.
std::pair<LatticeFunction, SolveReport> solve_dirichlet(const ClusterGraph& g, std::span<const std::int32_t> boundary,
                                                        std::span<const double> boundary_values,
                                                        std::span<const double> rhs, const SolverOptions& opts = {});

struct CorrectorResult {
  ClusterGraph graph;                 // maximal cluster of the region
  std::vector<std::int32_t> layer;    // Dirichlet vertices
  LatticeFunction chi;                // chi_p = u - p.x, zero on the layer
  SolveReport report;
};

// Vertices of the cluster with an open bond leaving the region, together with
// those on the faces of the environment box (whose outer bonds are unknown).
std::vector<std::int32_t> dirichlet_layer(const Environment& env, const ClusterGraph& g, const Box& region);

CorrectorResult corrector(const Environment& env, const Box& region, const std::array<double, kMaxDim>& p,
                          const SolverOptions& opts = {});
// Reuses the cluster and layer of an earlier solve.
CorrectorResult corrector(const CorrectorResult& base, const std::array<double, kMaxDim>& p,
                          const SolverOptions& opts = {});

// Gradient of G solving (-div a grad G) = delta_x - delta_y, e = (x, y), with
// G(ground) = 0. Throws TopologyError when an endpoint is not in g.
VectorField greens_gradient(const ClusterGraph& g, const EdgeRef& e, std::int32_t ground,
                            const SolverOptions& opts = {});
// Same with the ground at vertex 0, the lexicographically smallest.
VectorField greens_gradient(const ClusterGraph& g, const EdgeRef& e, const SolverOptions& opts = {});

// w with <grad w, a grad h> = <xi, grad h> for every h, w(0) = 0.
std::pair<LatticeFunction, SolveReport> solve_divergence_rhs(const ClusterGraph& g, const VectorField& xi,
                                                             const SolverOptions& opts = {});

// Smallest ladder radius r such that for all ladder radii r <= r1 <= r2,
// |grad u|_{L2avg(C cap B_r1)} <= c0 |grad u|_{L2avg(C cap B_r2)} for each
// witness u = x_i + chi_{e_i}. Balls are centred at the region centre.
double regularity_scale(const ClusterGraph& g, std::span<const LatticeFunction> witnesses, const Point& center,
                        double c0, std::span<const double> ladder);
double regularity_scale(const Environment& env, const TriadicCube& region, double c0, std::span<const double> ladder,
                        const SolverOptions& opts = {});

void write_csv(std::ostream& out, const ClusterGraph& g, std::span<const double> u);
void write_csv(std::ostream& out, const ClusterGraph& g, const VectorField& f);

}  // namespace perco
