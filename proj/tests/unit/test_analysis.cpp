#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "perco/analysis.hpp"
#include "perco/error.hpp"
#include "perco/rng.hpp"

using namespace perco;
using perco::testing::spec_of;

namespace {

GridField sampled(int dim, double half_width, double h, const std::function<double(const std::array<double, kMaxDim>&)>& f) {
  GridField u(GridSpec::centered(dim, {0.0, 0.0, 0.0}, half_width, h), 1);
  for (std::int64_t k = 0; k < u.grid.size(); ++k) u.at(k) = f(u.grid.position(k));
  return u;
}

// Tail fit written out with explicit counting: for each distinct value t of
// the upper quartile, p(t) = #{x > t} / n, then least squares of
// log(-log p) on log t.
double tail_oracle(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const double q = x[static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(n - 1)))];
  std::vector<double> ts;
  for (double v : x) {
    if (v >= q && (ts.empty() || ts.back() != v)) ts.push_back(v);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
  for (double t : ts) {
    std::size_t above = 0;
    for (double v : x) above += v > t ? 1 : 0;
    if (above == 0) continue;
    const double p = static_cast<double>(above) / static_cast<double>(n);
    const double lx = std::log(t);
    const double ly = std::log(-std::log(p));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    m += 1;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

TEST(Analysis, OscAndCentredNorms) {
  const std::vector<double> v{1, 2, 3, 6};
  EXPECT_EQ(osc(v), 5.0);
  EXPECT_NEAR(lq_centered(v, 2.0), std::sqrt(3.5), 1e-14);
  EXPECT_NEAR(lq_centered(v, 2.0, LqNormalization::radius, 1.0, 2), std::sqrt(14.0), 1e-14);
  EXPECT_NEAR(lq_centered(v, 1.0), 1.5, 1e-14);
  EXPECT_EQ(lq_centered(std::vector<double>(5, 4.0), 3.0), 0.0);
  EXPECT_THROW(osc(std::vector<double>{}), PreconditionError);
}

TEST(Analysis, RestrictToBall) {
  const Environment env = Environment::constant(spec_of(2, 2), 1.0f);
  const ClusterGraph g = maximal_cluster(env, env.box());
  std::vector<double> u(static_cast<std::size_t>(g.num_vertices()), 1.0);
  EXPECT_EQ(restrict_to_ball(g, u, Point{}, 1.0).size(), 9u);
  EXPECT_EQ(restrict_to_ball(g, u, Point{4, 4, 0}, 2.0).size(), 9u);
}

TEST(Analysis, HeatKernelValueAndMass) {
  const std::vector<double> x{1.0, 1.0};
  EXPECT_NEAR(heat_kernel(2.0, x), 0.25 * std::exp(-0.5), 1e-15);
  for (int d : {2, 3}) {
    const GridField one = sampled(d, 30.0, d == 2 ? 0.25 : 0.5, [](const auto&) { return 1.0; });
    const std::vector<double> x0(static_cast<std::size_t>(d), 0.0);
    EXPECT_NEAR(gaussian_average(one, 4.0, x0)[0], std::pow(std::numbers::pi, d / 2.0), 1e-8);
  }
}

TEST(Analysis, GaussianAverageIsLinearAndChecksBounds) {
  const GridField f = sampled(2, 20.0, 0.5, [](const auto& y) { return std::sin(y[0]) + y[1]; });
  const GridField g = sampled(2, 20.0, 0.5, [](const auto& y) { return y[0] * y[1]; });
  GridField h = f;
  for (std::size_t k = 0; k < h.values.size(); ++k) h.values[k] = 2.0 * f.values[k] - 3.0 * g.values[k];
  const std::vector<double> x0{1.0, -0.5};
  EXPECT_NEAR(gaussian_average(h, 2.0, x0)[0], 2.0 * gaussian_average(f, 2.0, x0)[0] - 3.0 * gaussian_average(g, 2.0, x0)[0], 1e-10);
  EXPECT_THROW(gaussian_average(f, 4.0, x0), BoundsError);
  EXPECT_THROW(gaussian_average(f, 0.25, x0), PreconditionError);
}

TEST(Analysis, SmoothedCoarseGradientMatchesGridQuadrature) {
  const Environment env = Environment::generate(spec_of(2, 4, 0.9, ConductanceLaw::uniform, 3));
  PartitionOptions opts;
  opts.goodness.min_resolution = 9;
  const Partition p = build_partition(env, opts);
  const ClusterGraph g = maximal_cluster(env, env.box());
  std::vector<double> u(static_cast<std::size_t>(g.num_vertices()));
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    const Point& x = g.point(i);
    u[static_cast<std::size_t>(i)] = std::sin(0.2 * x[0]) + 0.05 * x[0] * x[1];
  }
  const CoarseFunction f = coarsen(p, g, u);
  const Mollifier eta(MollifierSpec{});
  const double R = 2.0;
  const auto fast = smoothed_coarse_gradient(p, f, eta, R, Point{1, -1, 0}, 6.0 * R);
  const MollifiedField m = mollify(p, f, eta, GridSpec::centered(2, {1.0, -1.0, 0.0}, 6.0 * R + 0.5, 1.0 / 16.0));
  const std::vector<double> x0{1.0, -1.0};
  const auto slow = gaussian_average(m.gradient, R, x0);
  ASSERT_EQ(fast.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(fast[static_cast<std::size_t>(i)], slow[static_cast<std::size_t>(i)], 1e-4 * (1.0 + std::abs(slow[static_cast<std::size_t>(i)])));
  EXPECT_THROW(smoothed_coarse_gradient(p, f, eta, R, Point{30, 0, 0}, 12.0), BoundsError);

  const CoarseFunction c = coarsen(p, g, std::vector<double>(u.size(), 7.0));
  for (double v : smoothed_coarse_gradient(p, c, eta, R, Point{}, 12.0)) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Analysis, MultiscaleInvariantUnderConstants) {
  const double R = 2.0;
  const auto fn = [](const auto& y) { return std::sin(0.4 * y[0]) * std::cos(0.3 * y[1]); };
  const GridField u = sampled(2, 24.0 * R, 1.0, fn);
  GridField v = u;
  for (double& x : v.values) x += 5.0;
  EXPECT_NEAR(multiscale_lhs(v, R, 2.0), multiscale_lhs(u, R, 2.0), 1e-12);
  const double ru = multiscale_rhs(u, R, 2.0);
  EXPECT_GT(ru, 0.0);
  EXPECT_NEAR(multiscale_rhs(v, R, 2.0), ru, 1e-9 * ru);
  GridField w = u;
  for (double& x : w.values) x *= 3.0;
  EXPECT_NEAR(multiscale_rhs(w, R, 2.0), 3.0 * ru, 1e-9 * ru);
  EXPECT_NEAR(multiscale_lhs(w, R, 2.0), 3.0 * multiscale_lhs(u, R, 2.0), 1e-12);
  EXPECT_EQ(multiscale_rhs(sampled(2, 24.0 * R, 1.0, [](const auto&) { return 1.0; }), R, 2.0), 0.0);
}

TEST(Analysis, MeyersAndCaccioppoliOnLinearFunctions) {
  const Environment env = Environment::constant(spec_of(2, 3), 1.0f);
  const ClusterGraph g = maximal_cluster(env, env.box());
  std::vector<double> v(static_cast<std::size_t>(g.num_vertices()));
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) v[static_cast<std::size_t>(i)] = g.point(i)[0];
  const VectorField zero{std::vector<double>(static_cast<std::size_t>(g.num_edges()), 0.0)};
  const std::vector<double> eps{0.05, 0.2};
  for (double r : meyers_ratio(g, v, zero, TriadicCube{2, 2, Point{}}, eps)) EXPECT_NEAR(r, 1.0, 1e-12);
  const std::vector<double> c(v.size(), 1.0);
  EXPECT_EQ(meyers_ratio(g, c, zero, TriadicCube{2, 2, Point{}}, eps)[0], 0.0);
  const Box outer = Box::ball(2, Point{}, 6);
  const Box inner = Box::ball(2, Point{}, 3);
  EXPECT_EQ(caccioppoli_ratio(g, std::vector<double>(v.size(), 0.0), zero, outer, inner, 3.0), 0.0);
  // |grad v|^2 = 1 on the 49 inner points; v^2 sums to 13 * 182 - 7 * 28 = 2170 over the shell.
  EXPECT_NEAR(caccioppoli_ratio(g, v, zero, outer, inner, 3.0), 49.0 / (2170.0 / 9.0), 1e-12);
}

TEST(MomentEstimate, ConstantSamples) {
  const std::vector<double> c(40, 3.0);
  EXPECT_NEAR(estimate_Os(c, 1.0).theta, 3.0 / std::log(2.0), 1e-5);
  EXPECT_NEAR(estimate_Os(c, 2.0).theta, 3.0 / std::sqrt(std::log(2.0)), 1e-5);
  const auto z = estimate_Os(std::vector<double>(40, 0.0), 1.0);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.theta, 0.0);
  EXPECT_THROW(estimate_Os(std::vector<double>(29, 1.0), 1.0), EstimationError);
  EXPECT_THROW(estimate_Os(std::vector<double>(40, -1.0), 1.0), DataError);
}

TEST(MomentEstimate, ScalesLinearly) {
  Rng rng(3);
  std::vector<double> x(500);
  for (double& v : x) v = std::abs(rng.normal());
  const double t = estimate_Os(x, 2.0).theta;
  for (double& v : x) v *= 7.5;
  EXPECT_NEAR(estimate_Os(x, 2.0).theta, 7.5 * t, 1e-5 * 7.5 * t);
}

TEST(MomentEstimate, ExponentialSamples) {
  // E exp(X / theta) = theta / (theta - 1) for X ~ Exp(1), which equals 2 at theta = 2.
  Rng rng(11);
  std::vector<double> x(100000);
  for (double& v : x) v = -std::log(1.0 - rng.uniform());
  const auto est = estimate_Os(x, 1.0);
  EXPECT_NEAR(est.theta, 2.0, 0.1);
  EXPECT_NEAR(est.achieved, 2.0, 1e-4);
}

TEST(TailExponent, MatchesCountingOracle) {
  Rng rng(19);
  std::vector<double> x(2000);
  for (double& v : x) v = std::sqrt(-std::log(1.0 - rng.uniform()));  // P(X > t) = exp(-t^2)
  const double got = tail_exponent(x);
  EXPECT_NEAR(got, tail_oracle(x), 1e-10);
  EXPECT_NEAR(got, 2.0, 0.3);
  for (double& v : x) v = -std::log(1.0 - rng.uniform());
  EXPECT_NEAR(tail_exponent(x), tail_oracle(x), 1e-10);
  EXPECT_NEAR(tail_exponent(x), 1.0, 0.15);
  // The upper quartile of |N| sits where log P(|N| > t) is still far from -t^2/2.
  for (double& v : x) v = std::abs(rng.normal());
  EXPECT_NEAR(tail_exponent(x), tail_oracle(x), 1e-10);
  EXPECT_NEAR(tail_exponent(x), 1.5, 0.15);
  EXPECT_THROW(tail_exponent(std::vector<double>(99, 1.0)), EstimationError);
  EXPECT_THROW(tail_exponent(std::vector<double>(200, 1.0)), EstimationError);
}

TEST(Sensitivity, ZeroForEdgeIndependentFunctionals) {
  const Environment env = Environment::generate(spec_of(2, 2, 0.7, ConductanceLaw::uniform, 1));
  const std::vector<EdgeRef> edges{{{0, 0, 0}, 0}, {{1, -2, 0}, 1}, {{-3, 3, 0}, 0}};
  const auto r = resampling_sensitivity(env, [](const Environment&) { return 4.0; }, edges, 8, 5);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.base, 4.0);
  ASSERT_EQ(r.per_edge.size(), 3u);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Sensitivity, LocalisedOnTheEdgeThatMatters) {
  const Environment env = Environment::generate(spec_of(2, 2, 0.7, ConductanceLaw::uniform, 2));
  const EdgeRef target{{1, 1, 0}, 1};
  const std::vector<EdgeRef> edges{{{0, 0, 0}, 0}, target, {{-3, 3, 0}, 0}};
  const auto fn = [&](const Environment& e) { return static_cast<double>(e.conductance(target)); };
  const auto r = resampling_sensitivity(env, fn, edges, 16, 9);
  EXPECT_EQ(r.per_edge[0], 0.0);
  EXPECT_EQ(r.per_edge[2], 0.0);
  EXPECT_GT(r.per_edge[1], 0.0);
  EXPECT_LE(r.per_edge[1], 1.0);
  EXPECT_EQ(r.value, r.per_edge[1]);
  const auto again = resampling_sensitivity(env, fn, edges, 16, 9);
  EXPECT_EQ(again.value, r.value);
  EXPECT_EQ(resampling_sensitivity(env, fn, edges, 4, 9).warnings.size(), 1u);
  EXPECT_THROW(resampling_sensitivity(env, fn, edges, 4, 9, true), EstimationError);
}

TEST(Sensitivity, VectorOverloadAgreesWithScalar) {
  const Environment env = Environment::generate(spec_of(2, 2, 0.7, ConductanceLaw::uniform, 4));
  const std::vector<EdgeRef> edges{{{0, 0, 0}, 0}, {{0, 0, 0}, 1}};
  const auto f0 = [](const Environment& e) { return static_cast<double>(e.conductance(EdgeRef{{0, 0, 0}, 0})); };
  const auto f1 = [](const Environment& e) { return static_cast<double>(e.count_open()); };
  const auto vec = resampling_sensitivity(
      env, [&](const Environment& e) { return std::vector<double>{f0(e), f1(e)}; }, edges, 10, 3);
  ASSERT_EQ(vec.size(), 2u);
  EXPECT_EQ(vec[0].value, resampling_sensitivity(env, f0, edges, 10, 3).value);
  EXPECT_EQ(vec[1].value, resampling_sensitivity(env, f1, edges, 10, 3).value);
}

TEST(FitLine, ExactLine) {
  const std::vector<double> x{0, 1, 2, 3, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(-1.5 * v + 2.0);
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, -1.5, 1e-14);
  EXPECT_NEAR(f.intercept, 2.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-7);
}
