#pragma once

#include <functional>
#include <queue>
#include <set>
#include <vector>

#include "perco/env.hpp"
#include "perco/lattice.hpp"

namespace perco::testing {

inline EnvironmentSpec spec_of(int dim, int scale, double p = 1.0, ConductanceLaw law = ConductanceLaw::constant_one,
                               std::uint64_t seed = 0) {
  EnvironmentSpec s;
  s.dim = dim;
  s.scale = scale;
  s.open_probability = p;
  s.law = law;
  s.seed = seed;
  return s;
}

// Environment with a(e) = value(e) for every in-box bond.
inline Environment make_env(const EnvironmentSpec& spec, const std::function<float(const EdgeRef&)>& value) {
  const Environment base = Environment::constant(spec, 1.0f);
  std::vector<float> v(base.values().begin(), base.values().end());
  for (std::int64_t i = 0; i < base.num_vertices(); ++i) {
    for (int a = 0; a < spec.dim; ++a) {
      if (base.has_bond(i, a)) v[static_cast<std::size_t>(i * spec.dim + a)] = value(EdgeRef{base.vertex_point(i), a});
    }
  }
  return Environment::from_values(spec, std::move(v));
}

// Components of the open subgraph induced on region by breadth-first search.
inline std::vector<std::set<Point>> bfs_components(const Environment& env, const Box& region) {
  const int d = env.dim();
  std::set<Point> seen;
  std::vector<std::set<Point>> out;
  const BoxIndexer idx(region);
  for (std::int64_t k = 0; k < idx.size(); ++k) {
    const Point s = idx.point(k);
    if (seen.count(s)) continue;
    std::set<Point> comp{s};
    std::queue<Point> q;
    q.push(s);
    seen.insert(s);
    while (!q.empty()) {
      const Point x = q.front();
      q.pop();
      for (int a = 0; a < d; ++a) {
        for (int sgn : {-1, 1}) {
          Point y = x;
          y[a] += sgn;
          if (!region.contains(y) || seen.count(y)) continue;
          if (env.conductance_between(x, y) > 0.0f) {
            seen.insert(y);
            comp.insert(y);
            q.push(y);
          }
        }
      }
    }
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace perco::testing
