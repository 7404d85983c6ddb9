#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perco/env.hpp"
#include "perco/geometry.hpp"
#include "perco/grid.hpp"
#include "perco/partition.hpp"
#include "perco/solver.hpp"

namespace perco {

// sup - inf. Throws PreconditionError on an empty set.
double osc(std::span<const double> values);

enum class LqNormalization {
  average,  // (1/|A| sum |v - mean|^q)^{1/q}
  radius,   // (R^{-d} sum |v - mean|^q)^{1/q}
};

// Centred L^q norm of the values about their mean.
double lq_centered(std::span<const double> values, double q, LqNormalization norm = LqNormalization::average,
                   double radius = 1.0, int dim = 2);

// Values of u at graph vertices x with |x - center|_inf <= radius.
std::vector<double> restrict_to_ball(const ClusterGraph& g, std::span<const double> u, const Point& center,
                                     double radius);

// Heat kernel r^{-d} exp(-|x|^2 / r^2), Euclidean |x|; total mass pi^{d/2}.
double heat_kernel(double r, std::span<const double> x);

// sum over grid points with |x - x0| <= 6r of Phi_r(x - x0) F(x) h^d, one entry
// per component. Throws BoundsError if that ball leaves the grid and
// PreconditionError if r < h.
std::vector<double> gaussian_average(const GridField& f, double r, std::span<const double> x0);

// Phi_R * grad [f]^eta evaluated at x0 through the separable structure of the
// kernels: one-dimensional quadratures against the window of eta and its
// derivative, then a lattice sum over |x - x0|_inf <= truncation.
std::vector<double> smoothed_coarse_gradient(const Partition& p, const CoarseFunction& f, const Mollifier& eta,
                                             double R, const Point& x0, double truncation);

struct MultiscaleOptions {
  int r_nodes = 32;
  double weight_cutoff = 12.0;  // spatial weight truncated at |x| <= cutoff * R
};

// || u - (u)_{B_R} ||_{L^q avg(B_R)} over grid points of the Euclidean ball
// B_R about the grid centre.
double multiscale_lhs(const GridField& u, double R, double q);
// ( sum_x h^d R^{-d} e^{-|x|/(2R)} (int_0^{2R} r |Phi_r * grad u(x)|^2 dr)^{q/2} )^{1/q},
// x about the grid centre. grad u by central differences; the r integral uses
// log-spaced nodes on [h, 2R] and the constant extrapolation below h. Needs
// a grid covering |x| <= 2 cutoff R.
double multiscale_rhs(const GridField& u, double R, double q, const MultiscaleOptions& opts = {});

// Meyers ratio for each exponent 2 + eps: the (2+eps)-average of |grad v| over
// the cube divided by the 2-average of |grad v| plus the (2+eps)-average of
// |xi| over the dilated cube 4/3 cube. g is the cluster v and xi live on.
std::vector<double> meyers_ratio(const ClusterGraph& g, std::span<const double> v, const VectorField& xi,
                                 const TriadicCube& cube, std::span<const double> eps);

// Caccioppoli ratio sum_{C cap V} |grad u|^2 over
// r^{-2} sum_{C cap (U \ V)} u^2 + sum_{C cap U} |xi|^2.
double caccioppoli_ratio(const ClusterGraph& g, std::span<const double> u, const VectorField& xi, const Box& outer,
                         const Box& inner, double r);

struct MomentEstimate {
  double s = 1.0;
  double theta = 0.0;
  std::int64_t count = 0;
  double achieved = 0.0;  // empirical mean of exp((X/theta)^s)
  bool degenerate = false;  // all samples zero
};

// Smallest theta with mean exp((X_i/theta)^s) <= 2, by bisection on
// [max/50, 50 max] to relative 1e-6. Needs >= 30 nonnegative samples.
MomentEstimate estimate_Os(std::span<const double> samples, double s);

// Slope of log(-log P(X > t)) against log t over the upper quartile of the
// samples. Needs >= 100 samples and a nondegenerate tail.
double tail_exponent(std::span<const double> samples);

struct SensitivityResult {
  double value = 0.0;              // sum over edges of (X - mean_k X_e^k)^2
  std::vector<double> per_edge;
  double base = 0.0;               // X(env)
  std::vector<std::string> warnings;
};

using EnvFunctional = std::function<double(const Environment&)>;

// Throws EstimationError when K < 8 in strict mode; warns otherwise.
SensitivityResult resampling_sensitivity(const Environment& env, const EnvFunctional& functional,
                                         std::span<const EdgeRef> edges, int resamples, std::uint64_t aux_seed,
                                         bool strict = false);

// One result per component of a vector-valued functional, sharing the
// resampled environments. Resamples that leave the environment unchanged reuse
// the base value.
using EnvVectorFunctional = std::function<std::vector<double>(const Environment&)>;
std::vector<SensitivityResult> resampling_sensitivity(const Environment& env, const EnvVectorFunctional& functional,
                                                      std::span<const EdgeRef> edges, int resamples,
                                                      std::uint64_t aux_seed, bool strict = false);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace perco
