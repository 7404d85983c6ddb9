#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "perco/error.hpp"
#include "perco/geometry.hpp"
#include "perco/rng.hpp"

using namespace perco;
using perco::testing::bfs_components;
using perco::testing::make_env;
using perco::testing::spec_of;

namespace {

std::set<Point> as_set(const std::vector<Point>& v) { return {v.begin(), v.end()}; }

bool touches_all_faces(const std::set<Point>& comp, const Box& b, int d) {
  for (int a = 0; a < d; ++a) {
    bool lo = false;
    bool hi = false;
    for (const auto& x : comp) {
      lo = lo || x[a] == b.lo[a];
      hi = hi || x[a] == b.hi[a];
    }
    if (!lo || !hi) return false;
  }
  return true;
}

// Crossing test by search: for each axis, is some vertex on the low face joined
// to a vertex on the high face inside the box?
bool crossable_oracle(const Environment& env, const Box& b) {
  const auto comps = bfs_components(env, b);
  for (int a = 0; a < env.dim(); ++a) {
    bool any = false;
    for (const auto& c : comps) {
      bool lo = false;
      bool hi = false;
      for (const auto& x : c) {
        lo = lo || x[a] == b.lo[a];
        hi = hi || x[a] == b.hi[a];
      }
      any = any || (lo && hi && c.size() > 1);
    }
    if (!any) return false;
  }
  return true;
}

}  // namespace

TEST(TriadicCube, PredecessorAndSuccessors) {
  const TriadicCube c{2, 1, Point{}};
  EXPECT_EQ(c.predecessor(), (TriadicCube{2, 2, Point{}}));
  const auto succ = c.successors();
  ASSERT_EQ(succ.size(), 9u);
  std::set<Point> centers;
  for (const auto& s : succ) {
    EXPECT_EQ(s.scale, 0);
    centers.insert(s.center);
  }
  for (int x = -1; x <= 1; ++x) {
    for (int y = -1; y <= 1; ++y) EXPECT_TRUE(centers.count(Point{x, y, 0}));
  }
  EXPECT_EQ(TriadicCube({3, 2, Point{9, 0, -9}}).successors().size(), 27u);
}

TEST(TriadicCube, CubeOfPicksTheCoveringCube) {
  EXPECT_EQ(TriadicCube::cube_of(2, Point{4, 4, 0}, 2), (TriadicCube{2, 2, Point{}}));
  EXPECT_EQ(TriadicCube::cube_of(2, Point{5, -5, 0}, 2), (TriadicCube{2, 2, Point{9, -9, 0}}));
  EXPECT_EQ(TriadicCube::cube_of(2, Point{1, 2, 0}, 1).center, (Point{0, 3, 0}));
  const TriadicCube c{2, 2, Point{9, 0, 0}};
  EXPECT_EQ(c.box().volume(), 81);
  EXPECT_EQ(c.box().lo, (Point{5, -4, 0}));
}

TEST(TriadicCube, DichotomyExhaustive) {
  std::vector<TriadicCube> cubes;
  for (int n = 0; n <= 3; ++n) {
    const int s = static_cast<int>(pow3(n));
    for (int x = -27; x <= 27; x += s) {
      for (int y = -27; y <= 27; y += s) cubes.push_back({2, n, Point{x, y, 0}});
    }
  }
  for (const auto& a : cubes) {
    for (const auto& b : cubes) {
      const bool nested = a.contains(b) || b.contains(a);
      const bool disjoint = !a.box().intersects(b.box());
      ASSERT_TRUE(nested != disjoint) << to_string(a) << " " << to_string(b);
      ASSERT_EQ(disjoint, a.disjoint(b));
    }
  }
}

TEST(TriadicCube, SuccessorsTilePredecessor) {
  for (int d : {2, 3}) {
    const TriadicCube c{d, 2, Point{}};
    std::set<Point> covered;
    std::int64_t total = 0;
    for (const auto& s : c.successors()) {
      EXPECT_EQ(s.predecessor(), c);
      const BoxIndexer idx(s.box());
      for (std::int64_t i = 0; i < idx.size(); ++i) covered.insert(idx.point(i));
      total += idx.size();
    }
    EXPECT_EQ(total, c.box().volume());
    EXPECT_EQ(static_cast<std::int64_t>(covered.size()), c.box().volume());
  }
}

TEST(TriadicCube, Dilation) {
  const TriadicCube c{2, 2, Point{}};
  // 3/4 of side 9 gives |x| < 3.375.
  EXPECT_EQ(c.dilated(0.75), Box::ball(2, Point{}, 3));
  EXPECT_EQ(c.dilated(1.0), c.box());
  EXPECT_EQ(c.dilated(4.0 / 3.0), Box::ball(2, Point{}, 5));
}

TEST(Clusters, FullyOpenAndFullyClosed) {
  const auto s = spec_of(2, 2);
  const Environment open = Environment::constant(s, 1.0f);
  const Environment closed = Environment::constant(s, 0.0f);
  EXPECT_EQ(open_clusters(open, open.box()).size(), 1u);
  EXPECT_EQ(open_clusters(open, open.box()).front().size(), 81u);
  const auto singles = open_clusters(closed, closed.box());
  EXPECT_EQ(singles.size(), 81u);
  EXPECT_THROW(maximal_cluster(closed, closed.box()), EmptyClusterError);
  EXPECT_EQ(maximal_cluster(open, open.box()).num_vertices(), 81);
}

TEST(Clusters, TwoIslands) {
  // Open bonds only inside {x <= -2} and {x >= 2}; the column x in {-1,0,1} is cut.
  const auto s = spec_of(2, 2);
  const Environment env = make_env(s, [](const EdgeRef& e) {
    const Point t = e.tip();
    const bool left = e.base[0] <= -2 && t[0] <= -2;
    const bool right = e.base[0] >= 2 && t[0] >= 2;
    return (left || right) ? 1.0f : 0.0f;
  });
  const auto comps = open_clusters(env, env.box());
  std::vector<std::size_t> sizes;
  for (const auto& c : comps) sizes.push_back(c.size());
  std::sort(sizes.rbegin(), sizes.rend());
  ASSERT_GE(sizes.size(), 2u);
  EXPECT_EQ(sizes[0], 27u);
  EXPECT_EQ(sizes[1], 27u);
  EXPECT_EQ(sizes[2], 1u);
  // Equal sizes: the island holding the lexicographically smallest vertex wins.
  const ClusterGraph g = maximal_cluster(env, env.box());
  EXPECT_EQ(g.point(0), (Point{-4, -4, 0}));
}

TEST(Clusters, MatchesSearchOracleOnRandomEnvironments) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Environment env = Environment::generate(spec_of(2, 3, 0.55, ConductanceLaw::uniform, seed));
    const Box region = Box::ball(2, Point{2, -1, 0}, 7);
    const auto got = open_clusters(env, region);
    const auto want = bfs_components(env, region);
    ASSERT_EQ(got.size(), want.size());
    std::set<std::set<Point>> a;
    for (const auto& c : got) {
      EXPECT_TRUE(std::is_sorted(c.begin(), c.end(), [](const Point& x, const Point& y) { return lex_less(x, y, 2); }));
      a.insert(as_set(c));
    }
    std::set<std::set<Point>> b(want.begin(), want.end());
    EXPECT_EQ(a, b);
  }
}

TEST(ClusterGraph, StructureAndLookup) {
  const Environment env = Environment::generate(spec_of(2, 3, 0.7, ConductanceLaw::uniform, 4));
  const ClusterGraph g = maximal_cluster(env, env.box());
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    EXPECT_EQ(g.index_of(g.point(i)), i);
    for (std::int32_t k : g.incident_edges(i)) {
      const auto& e = g.edge(k);
      EXPECT_TRUE(e.tail == i || e.head == i);
      EXPECT_LT(e.tail, e.head);
      EXPECT_GE(e.conductance, env.lambda_floor());
      EXPECT_EQ(static_cast<float>(e.conductance), env.conductance_between(g.point(e.tail), g.point(e.head)));
      EXPECT_EQ(g.edge_index(g.edge_ref(k)), k);
    }
  }
  EXPECT_EQ(g.index_of(Point{100, 0, 0}), -1);
}

TEST(ClusterGraph, FromEdgesRejectsDisconnected) {
  std::vector<Point> pts{{0, 0, 0}, {1, 0, 0}, {5, 0, 0}, {6, 0, 0}};
  std::vector<ClusterGraph::Edge> edges{{0, 1, 0, 1.0}, {2, 3, 0, 1.0}};
  EXPECT_THROW(ClusterGraph::from_edges(2, pts, edges), TopologyError);
  pts = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_NO_THROW(ClusterGraph::from_edges(2, pts, {{0, 1, 0, 1.0}}));
}

TEST(Crossability, ExplicitConfigurations) {
  const auto s = spec_of(2, 2);
  const Environment open = Environment::constant(s, 1.0f);
  EXPECT_TRUE(is_crossable(open, open.box()));
  EXPECT_FALSE(is_crossable(Environment::constant(s, 0.0f), open.box()));
  // All vertical bonds of the column x = 0 closed: vertices stay reachable horizontally.
  const Environment cut_vertical = make_env(s, [](const EdgeRef& e) { return (e.axis == 1 && e.base[0] == 0) ? 0.0f : 1.0f; });
  EXPECT_TRUE(is_crossable(cut_vertical, open.box()));
  EXPECT_TRUE(crossable_oracle(cut_vertical, open.box()));
  // Every bond touching the column x = 0 closed: no horizontal crossing.
  const Environment cut_column = make_env(s, [](const EdgeRef& e) { return (e.base[0] == 0 || e.tip()[0] == 0) ? 0.0f : 1.0f; });
  EXPECT_FALSE(is_crossable(cut_column, open.box()));
  EXPECT_FALSE(crossable_oracle(cut_column, open.box()));
}

TEST(Crossability, MatchesOracleAndIsMonotone) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = spec_of(2, 2, 1.0);
    Environment env = Environment::constant(s, 0.0f);
    bool was = false;
    std::vector<EdgeRef> bonds;
    for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
      for (int a = 0; a < 2; ++a) {
        if (env.has_bond(v, a)) bonds.push_back({env.vertex_point(v), a});
      }
    }
    for (std::size_t i = bonds.size(); i > 1; --i) std::swap(bonds[i - 1], bonds[rng.below(i)]);
    for (const auto& e : bonds) {
      env = env.with_edge(e, 1.0f);
      const bool now = is_crossable(env, env.box());
      ASSERT_EQ(now, crossable_oracle(env, env.box()));
      ASSERT_FALSE(was && !now);
      was = now;
    }
    EXPECT_TRUE(was);
  }
}

TEST(CrossingCluster, OpenClosedAndOracle) {
  const auto s = spec_of(2, 2);
  const Environment open = Environment::constant(s, 1.0f);
  const auto all = crossing_cluster(open, open.box());
  ASSERT_TRUE(all.has_value());
  EXPECT_EQ(all->size(), 81u);
  EXPECT_FALSE(crossing_cluster(Environment::constant(s, 0.0f), open.box()).has_value());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Environment env = Environment::generate(spec_of(2, 2, 0.6, ConductanceLaw::uniform, seed));
    std::optional<std::set<Point>> best;
    for (const auto& c : bfs_components(env, env.box())) {
      if (!touches_all_faces(c, env.box(), 2)) continue;
      if (!best || c.size() > best->size()) best = c;
    }
    const auto got = crossing_cluster(env, env.box());
    ASSERT_EQ(got.has_value(), best.has_value());
    if (got) EXPECT_EQ(as_set(*got), *best);
  }
}

TEST(WellConnected, ExplicitConfigurations) {
  const auto s = spec_of(2, 3);
  const Environment open = Environment::constant(s, 1.0f);
  EXPECT_TRUE(is_well_connected(open, TriadicCube{2, 2, Point{}}));
  EXPECT_TRUE(is_well_connected(open, TriadicCube{2, 3, Point{}}));
  EXPECT_FALSE(is_well_connected(Environment::constant(s, 0.0f), TriadicCube{2, 2, Point{}}));
  EXPECT_THROW(is_well_connected(open, TriadicCube{2, 0, Point{}}), PreconditionError);
  // A 4 x 4 pocket walled off by closed bonds in a size-27 cube: the pocket
  // has extent 3 = ceil(27 / 10) and never reaches the crossing cluster.
  const auto in_pocket = [](const Point& x) { return x[0] >= 2 && x[0] <= 5 && x[1] >= 2 && x[1] <= 5; };
  const Environment pocket = make_env(s, [&](const EdgeRef& e) { return in_pocket(e.base) == in_pocket(e.tip()) ? 1.0f : 0.0f; });
  EXPECT_FALSE(is_well_connected(pocket, TriadicCube{2, 3, Point{}}));
  WellConnectedOptions ex;
  ex.family = SubcubeFamily::exhaustive;
  EXPECT_FALSE(is_well_connected(pocket, TriadicCube{2, 3, Point{}}, ex));
  EXPECT_TRUE(is_well_connected(open, TriadicCube{2, 3, Point{}}, ex));
}

TEST(Goodness, ExplicitConfigurations) {
  const Environment open = Environment::constant(spec_of(2, 3), 1.0f);
  EXPECT_TRUE(is_good(open, TriadicCube{2, 2, Point{}}));
  EXPECT_FALSE(is_good(open, TriadicCube{2, 0, Point{}}));
  EXPECT_TRUE(is_good(open, TriadicCube{2, 1, Point{3, -3, 0}}));
}

TEST(Goodness, MapAgreesWithPredicate) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Environment env = Environment::generate(spec_of(2, 3, 0.75, ConductanceLaw::uniform, seed));
    const GoodnessMap gm(env);
    for (int n = 1; n <= 3; ++n) {
      for (const auto& c : gm.cubes(n)) {
        ASSERT_EQ(gm.good(c), is_good(env, c)) << to_string(c);
        ASSERT_EQ(gm.well_connected(c), is_well_connected(env, c)) << to_string(c);
      }
    }
  }
}

TEST(Goodness, UpdateEdgeMatchesRecompute) {
  const Environment env = Environment::generate(spec_of(2, 3, 0.7, ConductanceLaw::uniform, 8));
  GoodnessMap gm(env);
  Rng rng(2);
  Environment cur = env;
  for (int k = 0; k < 15; ++k) {
    const EdgeRef e{{static_cast<int>(rng.below(26)) - 13, static_cast<int>(rng.below(27)) - 13, 0}, 0};
    cur = cur.with_edge(e, cur.is_open(e) ? 0.0f : 1.0f);
    gm.update_edge(cur, e);
  }
  const GoodnessMap fresh(cur);
  for (int n = 1; n <= 3; ++n) {
    for (const auto& c : fresh.cubes(n)) ASSERT_EQ(gm.good(c), fresh.good(c)) << to_string(c);
  }
}

TEST(Goodness, FrequencyNondecreasingInP) {
  // Coupled environments: bond e is open at level p iff u_e < p.
  const double levels[] = {0.6, 0.7, 0.8, 0.9};
  int count[4] = {0, 0, 0, 0};
  const int n = 150;
  for (int k = 0; k < n; ++k) {
    Rng rng(sample_seed(900, k));
    const auto s = spec_of(2, 2);
    std::vector<double> u;
    const Environment base = Environment::constant(s, 1.0f);
    for (std::size_t i = 0; i < base.values().size(); ++i) u.push_back(rng.uniform());
    for (int l = 0; l < 4; ++l) {
      std::vector<float> v(base.values().begin(), base.values().end());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] > 0.0f && u[i] < levels[l]) ? 1.0f : 0.0f;
      auto sp = s;
      sp.open_probability = levels[l];
      count[l] += is_good(Environment::from_values(sp, v), TriadicCube{2, 2, Point{}}) ? 1 : 0;
    }
  }
  for (int l = 0; l + 1 < 4; ++l) EXPECT_LE(count[l], count[l + 1] + 3) << levels[l];
  EXPECT_LT(count[0], count[3]);
}

TEST(Goodness, CrossingClusterUniqueMaximalOnGoodCubes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Environment env = Environment::generate(spec_of(2, 3, 0.75, ConductanceLaw::uniform, seed));
    const GoodnessMap gm(env);
    for (int n = 1; n <= 3; ++n) {
      for (const auto& c : gm.cubes(n)) {
        if (!gm.good(c)) continue;
        const auto cc = crossing_cluster(env, c);
        ASSERT_TRUE(cc.has_value());
        for (const auto& comp : bfs_components(env, c.box())) {
          if (comp == as_set(*cc)) continue;
          if (touches_all_faces(comp, c.box(), 2)) EXPECT_LT(comp.size(), cc->size());
        }
      }
    }
  }
}
