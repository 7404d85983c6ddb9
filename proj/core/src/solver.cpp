#include "perco/solver.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "perco/error.hpp"

namespace perco {

double VectorField::at(const ClusterGraph& g, std::int32_t x, std::int32_t y) const {
  const std::int32_t k = g.edge_between(x, y);
  if (k < 0) return 0.0;
  const double v = values[static_cast<std::size_t>(k)];
  return g.edge(k).tail == x ? v : -v;
}

std::string to_json(const SolveReport& r) {
  nlohmann::json j{{"iterations", r.iterations},
                   {"residual", r.residual},
                   {"tolerance", r.tolerance},
                   {"converged", r.converged}};
  return j.dump();
}

namespace {

void require_length(const ClusterGraph& g, std::span<const double> u) {
  if (u.size() != static_cast<std::size_t>(g.num_vertices())) throw DataError("function length does not match the cluster");
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

LatticeFunction apply_operator(const ClusterGraph& g, std::span<const double> u) {
  require_length(g, u);
  LatticeFunction out(u.size(), 0.0);
  for (const auto& e : g.edges()) {
    const double flux = e.conductance * (u[static_cast<std::size_t>(e.tail)] - u[static_cast<std::size_t>(e.head)]);
    out[static_cast<std::size_t>(e.tail)] += flux;
    out[static_cast<std::size_t>(e.head)] -= flux;
  }
  return out;
}

VectorField gradient(const ClusterGraph& g, std::span<const double> u) {
  require_length(g, u);
  VectorField f;
  f.values.reserve(g.edges().size());
  for (const auto& e : g.edges()) f.values.push_back(u[static_cast<std::size_t>(e.tail)] - u[static_cast<std::size_t>(e.head)]);
  return f;
}

VectorField a_gradient(const ClusterGraph& g, std::span<const double> u) {
  VectorField f = gradient(g, u);
  for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] *= g.edges()[k].conductance;
  return f;
}

double inner(const VectorField& f, const VectorField& h) {
  if (f.values.size() != h.values.size()) throw DataError("vector fields of different length");
  double s = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) s += f.values[k] * h.values[k];
  return s;
}

double inner(const ClusterGraph& g, const VectorField& f, const VectorField& h, bool weighted) {
  if (f.values.size() != static_cast<std::size_t>(g.num_edges()) || h.values.size() != f.values.size()) {
    throw DataError("vector field length does not match the cluster");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) s += f.values[k] * h.values[k] * (weighted ? g.edges()[k].conductance : 1.0);
  return s;
}

std::vector<double> vertex_magnitude(const ClusterGraph& g, const VectorField& f) {
  std::vector<double> out(static_cast<std::size_t>(g.num_vertices()), 0.0);
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    const auto& e = g.edges()[k];
    const double v2 = f.values[k] * f.values[k];
    out[static_cast<std::size_t>(e.tail)] += v2;
    out[static_cast<std::size_t>(e.head)] += v2;
  }
  for (double& v : out) v = std::sqrt(0.5 * v);
  return out;
}

LatticeFunction divergence_loads(const ClusterGraph& g, const VectorField& xi) {
  if (xi.values.size() != static_cast<std::size_t>(g.num_edges())) throw DataError("vector field length does not match the cluster");
  LatticeFunction b(static_cast<std::size_t>(g.num_vertices()), 0.0);
  for (std::size_t k = 0; k < xi.values.size(); ++k) {
    const auto& e = g.edges()[k];
    b[static_cast<std::size_t>(e.tail)] += xi.values[k];
    b[static_cast<std::size_t>(e.head)] -= xi.values[k];
  }
  return b;
}

std::pair<LatticeFunction, SolveReport> solve_dirichlet(const ClusterGraph& g, std::span<const std::int32_t> boundary,
                                                        std::span<const double> boundary_values,
                                                        std::span<const double> rhs, const SolverOptions& opts) {
  const auto n = static_cast<std::size_t>(g.num_vertices());
  require_length(g, rhs);
  if (boundary.empty()) throw PreconditionError("Dirichlet solve needs a nonempty boundary");
  if (boundary.size() != boundary_values.size()) throw DataError("boundary values do not match the boundary");

  LatticeFunction u(n, 0.0);
  std::vector<std::int32_t> slot(n, 0);
  std::vector<char> fixed(n, 0);
  for (std::size_t k = 0; k < boundary.size(); ++k) {
    const std::int32_t v = boundary[k];
    if (v < 0 || static_cast<std::size_t>(v) >= n) throw BoundsError("boundary vertex out of range");
    fixed[static_cast<std::size_t>(v)] = 1;
    u[static_cast<std::size_t>(v)] = boundary_values[k];
  }
  std::vector<std::int32_t> interior;
  for (std::size_t v = 0; v < n; ++v) {
    if (!fixed[v]) {
      slot[v] = static_cast<std::int32_t>(interior.size());
      interior.push_back(static_cast<std::int32_t>(v));
    }
  }
  SolveReport report;
  report.tolerance = 0.0;
  if (interior.empty()) {
    report.converged = true;
    return {u, report};
  }

  // Reduced system A x = b on the interior block.
  const std::size_t m = interior.size();
  std::vector<double> diag(m, 0.0);
  std::vector<double> b(m, 0.0);
  std::vector<std::int32_t> offsets(m + 1, 0);
  std::vector<std::int32_t> cols;
  std::vector<double> vals;
  for (std::size_t i = 0; i < m; ++i) {
    const std::int32_t v = interior[i];
    b[i] = rhs[static_cast<std::size_t>(v)];
    const auto nb = g.neighbors(v);
    const auto inc = g.incident_edges(v);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double a = g.edge(inc[k]).conductance;
      diag[i] += a;
      const auto w = static_cast<std::size_t>(nb[k]);
      if (fixed[w]) {
        b[i] += a * u[w];
      } else {
        cols.push_back(slot[w]);
        vals.push_back(-a);
      }
    }
    offsets[i + 1] = static_cast<std::int32_t>(cols.size());
  }
  auto matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = diag[i] * x[i];
      for (auto k = offsets[i]; k < offsets[i + 1]; ++k) s += vals[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])];
      y[i] = s;
    }
  };

  const double threshold = opts.tolerance * (1.0 + norm2(b));
  report.tolerance = threshold;
  const int cap = opts.max_iterations > 0 ? opts.max_iterations
                                          : static_cast<int>(20.0 * std::sqrt(static_cast<double>(n)) + 500.0);
  std::vector<double> x(m, 0.0);
  std::vector<double> r = b;
  std::vector<double> z(m);
  std::vector<double> p(m);
  std::vector<double> q(m);
  for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = 0.0;
  for (std::size_t i = 0; i < m; ++i) rz += r[i] * z[i];
  double rnorm = norm2(r);
  int it = 0;
  while (rnorm > threshold && it < cap) {
    matvec(p, q);
    double pq = 0.0;
    for (std::size_t i = 0; i < m; ++i) pq += p[i] * q[i];
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < m; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    ++it;
    // Refresh the recursive residual now and then to curb drift.
    if (it % 200 == 0) {
      matvec(x, q);
      for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - q[i];
    }
    rnorm = norm2(r);
    double rz_new = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      z[i] = r[i] / diag[i];
      rz_new += r[i] * z[i];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
  }
  matvec(x, q);
  for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - q[i];
  report.iterations = it;
  report.residual = norm2(r);
  report.converged = report.residual <= threshold;
  if (!report.converged) {
    std::ostringstream msg;
    msg << "conjugate gradients stopped after " << it << " iterations with residual " << report.residual
        << " above " << threshold;
    throw SolverError(msg.str());
  }
  for (std::size_t i = 0; i < m; ++i) u[static_cast<std::size_t>(interior[i])] = x[i];
  return {u, report};
}

std::vector<std::int32_t> dirichlet_layer(const Environment& env, const ClusterGraph& g, const Box& region) {
  std::vector<std::int32_t> layer;
  const int d = env.dim();
  const Box& box = env.box();
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    const Point& x = g.point(i);
    bool on_layer = false;
    for (int a = 0; a < d && !on_layer; ++a) {
      if (x[a] == box.lo[a] || x[a] == box.hi[a]) on_layer = true;
      for (int sign : {1, -1}) {
        Point y = x;
        y[a] += sign;
        if (!region.contains(y) && env.contains(y) && env.conductance_between(x, y) > 0.0f) on_layer = true;
      }
    }
    if (on_layer) layer.push_back(i);
  }
  return layer;
}

namespace {

double affine(const std::array<double, kMaxDim>& p, const Point& x, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += p[i] * x[i];
  return s;
}

}  // namespace

CorrectorResult corrector(const CorrectorResult& base, const std::array<double, kMaxDim>& p, const SolverOptions& opts) {
  const ClusterGraph& g = base.graph;
  if (base.layer.empty()) throw PreconditionError("corrector region has an empty Dirichlet layer");
  const int d = g.dim();
  std::vector<double> values;
  values.reserve(base.layer.size());
  for (std::int32_t v : base.layer) values.push_back(affine(p, g.point(v), d));
  const std::vector<double> rhs(static_cast<std::size_t>(g.num_vertices()), 0.0);
  auto [u, report] = solve_dirichlet(g, base.layer, values, rhs, opts);
  CorrectorResult out{g, base.layer, {}, report};
  out.chi.resize(u.size());
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) out.chi[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)] - affine(p, g.point(i), d);
  for (std::int32_t v : out.layer) out.chi[static_cast<std::size_t>(v)] = 0.0;
  return out;
}

CorrectorResult corrector(const Environment& env, const Box& region, const std::array<double, kMaxDim>& p,
                          const SolverOptions& opts) {
  CorrectorResult base;
  base.graph = maximal_cluster(env, region);
  base.layer = dirichlet_layer(env, base.graph, region);
  return corrector(base, p, opts);
}

VectorField greens_gradient(const ClusterGraph& g, const EdgeRef& e, std::int32_t ground, const SolverOptions& opts) {
  const std::int32_t x = g.index_of(e.base);
  const std::int32_t y = g.index_of(e.tip());
  if (x < 0 || y < 0) throw TopologyError("edge endpoints are not both in the cluster");
  if (ground < 0 || ground >= g.num_vertices()) throw BoundsError("ground vertex out of range");
  std::vector<double> rhs(static_cast<std::size_t>(g.num_vertices()), 0.0);
  rhs[static_cast<std::size_t>(x)] += 1.0;
  rhs[static_cast<std::size_t>(y)] -= 1.0;
  const std::int32_t bnd[1] = {ground};
  const double val[1] = {0.0};
  auto [u, report] = solve_dirichlet(g, bnd, val, rhs, opts);
  return gradient(g, u);
}

VectorField greens_gradient(const ClusterGraph& g, const EdgeRef& e, const SolverOptions& opts) {
  return greens_gradient(g, e, 0, opts);
}

std::pair<LatticeFunction, SolveReport> solve_divergence_rhs(const ClusterGraph& g, const VectorField& xi,
                                                             const SolverOptions& opts) {
  LatticeFunction b = divergence_loads(g, xi);
  // Loads sum to zero by construction; remove rounding drift so the grounded
  // vertex absorbs nothing.
  double mean = 0.0;
  for (double v : b) mean += v;
  mean /= static_cast<double>(b.size());
  for (double& v : b) v -= mean;
  const std::int32_t bnd[1] = {0};
  const double val[1] = {0.0};
  return solve_dirichlet(g, bnd, val, b, opts);
}

double regularity_scale(const ClusterGraph& g, std::span<const LatticeFunction> witnesses, const Point& center,
                        double c0, std::span<const double> ladder) {
  if (ladder.empty()) throw PreconditionError("empty radius ladder");
  std::vector<double> radii(ladder.begin(), ladder.end());
  std::sort(radii.begin(), radii.end());
  const int d = g.dim();
  // Averages of |grad u|^2 over C cap B_r for every witness and radius.
  std::vector<std::vector<double>> avg(witnesses.size(), std::vector<double>(radii.size(), 0.0));
  for (std::size_t w = 0; w < witnesses.size(); ++w) {
    const auto mag = vertex_magnitude(g, gradient(g, witnesses[w]));
    for (std::size_t k = 0; k < radii.size(); ++k) {
      double s = 0.0;
      std::int64_t count = 0;
      for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
        if (linf_norm(sub(g.point(i), center), d) <= radii[k]) {
          s += mag[static_cast<std::size_t>(i)] * mag[static_cast<std::size_t>(i)];
          ++count;
        }
      }
      avg[w][k] = count > 0 ? std::sqrt(s / static_cast<double>(count)) : 0.0;
    }
  }
  auto holds_from = [&](std::size_t k0) {
    for (const auto& a : avg) {
      for (std::size_t i = k0; i < radii.size(); ++i) {
        for (std::size_t j = i; j < radii.size(); ++j) {
          if (a[i] > c0 * a[j] * (1.0 + 1e-12)) return false;
        }
      }
    }
    return true;
  };
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (holds_from(k)) return radii[k];
  }
  return radii.back();
}

double regularity_scale(const Environment& env, const TriadicCube& region, double c0, std::span<const double> ladder,
                        const SolverOptions& opts) {
  const int d = env.dim();
  const Box rb = region.box();
  CorrectorResult base;
  base.graph = maximal_cluster(env, rb);
  base.layer = dirichlet_layer(env, base.graph, rb);
  std::vector<LatticeFunction> witnesses;
  for (int i = 0; i < d; ++i) {
    std::array<double, kMaxDim> p{};
    p[i] = 1.0;
    const CorrectorResult c = corrector(base, p, opts);
    LatticeFunction u(c.chi.size());
    for (std::int32_t v = 0; v < c.graph.num_vertices(); ++v) u[static_cast<std::size_t>(v)] = c.chi[static_cast<std::size_t>(v)] + c.graph.point(v)[i];
    witnesses.push_back(std::move(u));
  }
  return regularity_scale(base.graph, witnesses, region.center, c0, ladder);
}

void write_csv(std::ostream& out, const ClusterGraph& g, std::span<const double> u) {
  require_length(g, u);
  const int d = g.dim();
  for (int i = 0; i < d; ++i) out << 'x' << i << ',';
  out << "value\n";
  out.precision(17);
  for (std::int32_t v = 0; v < g.num_vertices(); ++v) {
    for (int i = 0; i < d; ++i) out << g.point(v)[i] << ',';
    out << u[static_cast<std::size_t>(v)] << '\n';
  }
}

void write_csv(std::ostream& out, const ClusterGraph& g, const VectorField& f) {
  if (f.values.size() != static_cast<std::size_t>(g.num_edges())) throw DataError("vector field length does not match the cluster");
  const int d = g.dim();
  for (int i = 0; i < d; ++i) out << 'x' << i << ',';
  for (int i = 0; i < d; ++i) out << 'y' << i << ',';
  out << "value\n";
  out.precision(17);
  for (std::int32_t k = 0; k < g.num_edges(); ++k) {
    const auto& e = g.edge(k);
    for (int i = 0; i < d; ++i) out << g.point(e.tail)[i] << ',';
    for (int i = 0; i < d; ++i) out << g.point(e.head)[i] << ',';
    out << f.values[static_cast<std::size_t>(k)] << '\n';
  }
}

}  // namespace perco
