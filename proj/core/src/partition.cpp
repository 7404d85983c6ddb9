#include "perco/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <limits>
#include <set>

#include "perco/error.hpp"
#include "perco/rng.hpp"
#include "labeling.hpp"

namespace perco {

namespace {

bool cube_less(const TriadicCube& a, const TriadicCube& b) {
  if (a.scale != b.scale) return a.scale > b.scale;
  return lex_less(a.center, b.center, a.dim);
}

// Offsets (in units of 3^m) of the scale-m cubes within l_inf distance
// factor * 3^m of a given one. Distance between cubes whose centres differ by
// K cube widths is (K - 1) 3^m + 1.
int neighbor_reach(double factor, int scale) {
  const double s = static_cast<double>(pow3(scale));
  int k = 0;
  while ((k * s + 1.0) <= factor * s + 1e-9) ++k;
  return k;
}

// Admissibility flags B*(Q) per scale, indexed like the cube lists of the map.
class Admissibility {
 public:
  Admissibility(const GoodnessMap& gm, double factor) : gm_(gm) {
    const int m_top = gm.top_scale();
    flags_.resize(static_cast<std::size_t>(m_top) + 1);
    for (int m = m_top; m >= 1; --m) {
      const auto cubes = gm.cubes(m);
      auto& f = flags_[static_cast<std::size_t>(m)];
      f.assign(cubes.size(), 0);
      const int reach = neighbor_reach(factor, m);
      const int per = gm.count(m);
      const int lim = (per - 1) / 2;
      const int s = static_cast<int>(pow3(m));
      for (std::size_t k = 0; k < cubes.size(); ++k) {
        const TriadicCube& q = cubes[k];
        bool ok = m == m_top || at(q.predecessor());
        if (ok) {
          std::array<int, kMaxDim> base{};
          for (int i = 0; i < gm.dim(); ++i) base[i] = q.center[i] / s;
          std::array<int, kMaxDim> off{};
          for (int i = 0; i < gm.dim(); ++i) off[i] = -reach;
          while (ok) {
            TriadicCube nb{gm.dim(), m, {}};
            bool inside = true;
            for (int i = 0; i < gm.dim(); ++i) {
              const int c = base[i] + off[i];
              if (c < -lim || c > lim) inside = false;
              nb.center[i] = c * s;
            }
            if (inside && !gm.good(nb)) ok = false;
            int i = gm.dim() - 1;
            while (i >= 0 && ++off[i] > reach) {
              off[i] = -reach;
              --i;
            }
            if (i < 0) break;
          }
        }
        f[k] = ok ? 1 : 0;
      }
    }
  }

  bool at(const TriadicCube& q) const {
    const int per = gm_.count(q.scale);
    const int lim = (per - 1) / 2;
    const int s = static_cast<int>(pow3(q.scale));
    std::size_t idx = 0;
    for (int i = 0; i < gm_.dim(); ++i) idx = idx * static_cast<std::size_t>(per) + static_cast<std::size_t>(q.center[i] / s + lim);
    return flags_[static_cast<std::size_t>(q.scale)][idx] != 0;
  }

 private:
  const GoodnessMap& gm_;
  std::vector<std::vector<std::uint8_t>> flags_;
};

void collect_cells(const Admissibility& adm, const TriadicCube& q, std::vector<TriadicCube>& out) {
  if (q.scale == 1) {
    out.push_back(q);
    return;
  }
  const auto succ = q.successors();
  for (const TriadicCube& s : succ) {
    if (!adm.at(s)) {
      out.push_back(q);
      return;
    }
  }
  for (const TriadicCube& s : succ) collect_cells(adm, s, out);
}

// All offsets v != 0 with |v|_inf = 1 and v lexicographically positive, so each
// unordered l_inf-neighbour pair is visited once.
std::vector<Point> half_neighbourhood(int dim) {
  std::vector<Point> out;
  const int n = dim == 2 ? 9 : 27;
  for (int k = 0; k < n; ++k) {
    Point v{};
    int rest = k;
    for (int i = dim - 1; i >= 0; --i) {
      v[i] = rest % 3 - 1;
      rest /= 3;
    }
    bool positive = false;
    for (int i = 0; i < dim; ++i) {
      if (v[i] != 0) {
        positive = v[i] > 0;
        break;
      }
    }
    if (positive) out.push_back(v);
  }
  return out;
}

// Merge cells until l_inf-adjacent cells differ by at most one scale. The
// smaller cell of an offending pair is replaced by its ancestor one scale
// below the larger cell; ancestors of admissible cubes are admissible, so the
// result stays inside the admissible family.
std::vector<TriadicCube> repair_sizes(const Box& box, std::vector<TriadicCube> cells) {
  const int d = box.dim;
  const BoxIndexer idx(box);
  const auto nbhd = half_neighbourhood(d);
  std::vector<std::int8_t> scale_at(static_cast<std::size_t>(idx.size()));
  while (true) {
    for (const TriadicCube& c : cells) {
      const Box cb = c.box();
      const BoxIndexer ci(cb);
      for (std::int64_t k = 0; k < ci.size(); ++k) scale_at[static_cast<std::size_t>(idx.index(ci.point(k)))] = static_cast<std::int8_t>(c.scale);
    }
    std::vector<TriadicCube> targets;
    for (std::int64_t v = 0; v < idx.size(); ++v) {
      const Point x = idx.point(v);
      for (const Point& off : nbhd) {
        const Point y = add(x, off);
        if (!box.contains(y)) continue;
        const int sx = scale_at[static_cast<std::size_t>(v)];
        const int sy = scale_at[static_cast<std::size_t>(idx.index(y))];
        if (sx >= sy + 2) targets.push_back(TriadicCube::cube_of(d, y, sx - 1));
        if (sy >= sx + 2) targets.push_back(TriadicCube::cube_of(d, x, sy - 1));
      }
    }
    if (targets.empty()) return cells;
    std::sort(targets.begin(), targets.end(), cube_less);
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    std::vector<TriadicCube> maximal;
    for (const TriadicCube& t : targets) {
      bool covered = false;
      for (const TriadicCube& m : maximal) {
        if (m.contains(t)) {
          covered = true;
          break;
        }
      }
      if (!covered) maximal.push_back(t);
    }
    std::erase_if(cells, [&](const TriadicCube& c) {
      for (const TriadicCube& m : maximal) {
        if (m.contains(c)) return true;
      }
      return false;
    });
    cells.insert(cells.end(), maximal.begin(), maximal.end());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(const Environment& env, std::vector<TriadicCube> cells)
    : dim_(env.dim()), top_scale_(env.spec().scale), indexer_(env.box()), cells_(std::move(cells)) {
  std::sort(cells_.begin(), cells_.end(), [&](const TriadicCube& a, const TriadicCube& b) {
    return lex_less(a.center, b.center, dim_) || (a.center == b.center && a.scale < b.scale);
  });
  lookup_.assign(static_cast<std::size_t>(indexer_.size()), -1);
  reps_.resize(cells_.size());
  auto& lab = detail::thread_labeler();
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    const TriadicCube& c = cells_[k];
    const Box cb = c.box().intersect(box());
    if (cb.empty()) continue;
    const BoxIndexer ci(cb);
    for (std::int64_t li = 0; li < ci.size(); ++li) {
      lookup_[static_cast<std::size_t>(indexer_.index(ci.point(li)))] = static_cast<std::int32_t>(k);
    }
    if (!(cb == c.box()) || c.scale < 1) continue;
    lab.run(env, cb);
    const int comp = lab.crossing_component();
    if (comp < 0) continue;
    int best = -1;
    Point arg{};
    for (std::int64_t li = 0; li < ci.size(); ++li) {
      if (lab.label[static_cast<std::size_t>(li)] != comp) continue;
      const Point x = ci.point(li);
      const int dist = l1_norm(sub(x, c.center), dim_);
      if (best < 0 || dist < best) {
        best = dist;
        arg = x;
      }
    }
    reps_[k] = arg;
  }
}

Partition Partition::from_cells(const Environment& env, std::vector<TriadicCube> cells) {
  return Partition(env, std::move(cells));
}

std::int32_t Partition::cell_index(const Point& x) const {
  if (!box().contains(x)) throw BoundsError("point " + to_string(x, dim_) + " is outside the box");
  return lookup_[static_cast<std::size_t>(indexer_.index(x))];
}

const TriadicCube& Partition::cell_of(const Point& x) const {
  const std::int32_t k = cell_index(x);
  if (k < 0) throw ConstructionError("point " + to_string(x, dim_) + " is not covered by the partition");
  return cells_[static_cast<std::size_t>(k)];
}

const Point& Partition::representative(std::size_t cell) const {
  if (cell >= cells_.size()) throw PreconditionError("cell index out of range");
  if (!reps_[cell]) throw ConstructionError(to_string(cells_[cell]) + " has no crossing cluster");
  return *reps_[cell];
}

const Point& Partition::representative(const TriadicCube& cell) const {
  const std::int32_t k = cell_index(cell.center);
  if (k < 0 || !(cells_[static_cast<std::size_t>(k)] == cell)) throw PreconditionError(to_string(cell) + " is not a cell");
  return representative(static_cast<std::size_t>(k));
}

std::uint64_t Partition::fingerprint() const {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(cells_.size()));
  for (const TriadicCube& c : cells_) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(c.scale));
    for (int i = 0; i < dim_; ++i) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(c.center[i])));
  }
  return h;
}

void Partition::write_csv(std::ostream& out) const {
  out << "scale";
  for (int i = 0; i < dim_; ++i) out << ",z" << i;
  for (int i = 0; i < dim_; ++i) out << ",rep" << i;
  out << '\n';
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    out << cells_[k].scale;
    for (int i = 0; i < dim_; ++i) out << ',' << cells_[k].center[i];
    for (int i = 0; i < dim_; ++i) {
      out << ',';
      if (reps_[k]) out << (*reps_[k])[i];
    }
    out << '\n';
  }
}

void Partition::write_lookup(std::ostream& out) const {
  for (std::int32_t v : lookup_) {
    const auto u = static_cast<std::uint32_t>(v);
    const char bytes[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                           static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
    out.write(bytes, 4);
  }
}

// ---------------------------------------------------------------------------
// Verification

PartitionCheck check_partition(const Partition& p, const GoodnessMap& goodness) {
  PartitionCheck r;
  const int d = p.dim();
  const BoxIndexer idx(p.box());
  auto note = [&](const std::string& msg) {
    if (r.messages.size() < 20) r.messages.push_back(msg);
  };
  std::vector<std::int32_t> cover(static_cast<std::size_t>(idx.size()), 0);
  std::vector<std::int8_t> scale_at(static_cast<std::size_t>(idx.size()), -1);
  for (std::size_t k = 0; k < p.cells().size(); ++k) {
    const TriadicCube& c = p.cells()[k];
    if (c.scale < 1 || !goodness.in_box(c)) {
      ++r.bad_cells;
      note(to_string(c) + " is not a scale >= 1 cube of the box");
      continue;
    }
    if (!goodness.good(c)) {
      ++r.bad_cells;
      note(to_string(c) + " is not good");
    }
    for (TriadicCube a = c.predecessor(); a.scale <= goodness.top_scale(); a = a.predecessor()) {
      if (!goodness.good(a)) {
        ++r.bad_ancestors;
        note("ancestor " + to_string(a) + " of " + to_string(c) + " is not good");
      }
    }
    if (!p.has_representative(k)) {
      ++r.missing_representatives;
      note(to_string(c) + " has no representative");
    }
    const BoxIndexer ci(c.box());
    for (std::int64_t li = 0; li < ci.size(); ++li) {
      const auto v = static_cast<std::size_t>(idx.index(ci.point(li)));
      ++cover[v];
      scale_at[v] = static_cast<std::int8_t>(c.scale);
    }
  }
  for (std::size_t v = 0; v < cover.size(); ++v) {
    if (cover[v] == 0) {
      ++r.uncovered;
      note("vertex " + to_string(idx.point(static_cast<std::int64_t>(v)), d) + " is uncovered");
    } else if (cover[v] > 1) {
      ++r.overlaps;
      note("vertex " + to_string(idx.point(static_cast<std::int64_t>(v)), d) + " is covered more than once");
    }
  }
  // Size jumps, counted once per ordered pair of distinct cells.
  std::set<std::pair<std::int32_t, std::int32_t>> seen;
  const auto nbhd = half_neighbourhood(d);
  for (std::int64_t v = 0; v < idx.size(); ++v) {
    const Point x = idx.point(v);
    for (const Point& off : nbhd) {
      const Point y = add(x, off);
      if (!p.box().contains(y)) continue;
      const int sx = scale_at[static_cast<std::size_t>(v)];
      const int sy = scale_at[static_cast<std::size_t>(idx.index(y))];
      if (sx < 0 || sy < 0 || std::abs(sx - sy) <= 1) continue;
      const auto key = std::minmax(p.cell_index(x), p.cell_index(y));
      if (seen.insert(key).second) {
        ++r.size_jumps;
        note("adjacent cells at " + to_string(x, d) + " and " + to_string(y, d) + " differ by more than a factor 3");
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Construction

std::vector<int> minimal_admissible_scales(const GoodnessMap& goodness, const PartitionOptions& opts) {
  const Admissibility adm(goodness, opts.neighbor_factor);
  const int m_top = goodness.top_scale();
  const int d = goodness.dim();
  const int half = static_cast<int>((pow3(m_top) - 1) / 2);
  Box box{d, {}, {}};
  for (int i = 0; i < d; ++i) {
    box.lo[i] = -half;
    box.hi[i] = half;
  }
  const BoxIndexer idx(box);
  std::vector<int> out(static_cast<std::size_t>(idx.size()), m_top);
  for (std::int64_t v = 0; v < idx.size(); ++v) {
    const Point x = idx.point(v);
    for (int n = 1; n <= m_top; ++n) {
      if (adm.at(TriadicCube::cube_of(d, x, n))) {
        out[static_cast<std::size_t>(v)] = n;
        break;
      }
    }
  }
  return out;
}

Partition build_partition(const Environment& env, const GoodnessMap& goodness, const PartitionOptions& opts) {
  if (goodness.top_scale() < 1) throw PreconditionError("partition needs a box of scale >= 1");
  const Admissibility adm(goodness, opts.neighbor_factor);
  const TriadicCube top{env.dim(), goodness.top_scale(), {}};
  if (!adm.at(top)) throw UnresolvableRegionError("the box " + to_string(top) + " is not good");
  std::vector<TriadicCube> cells;
  collect_cells(adm, top, cells);
  cells = repair_sizes(env.box(), std::move(cells));
  Partition p = Partition::from_cells(env, std::move(cells));
  const PartitionCheck check = check_partition(p, goodness);
  if (!check.ok()) {
    std::string msg = "partition failed verification with " + std::to_string(check.violations()) + " violations";
    if (!check.messages.empty()) msg += ": " + check.messages.front();
    throw ConstructionError(msg);
  }
  return p;
}

Partition build_partition(const Environment& env, const PartitionOptions& opts) {
  const GoodnessMap goodness(env, opts.goodness);
  return build_partition(env, goodness, opts);
}

// ---------------------------------------------------------------------------
// Coarsening

CoarseFunction coarsen(const Partition& p, const ClusterGraph& g, std::span<const double> u) {
  if (u.size() != static_cast<std::size_t>(g.num_vertices())) throw DataError("function length does not match the cluster");
  std::vector<double> at_cell(p.num_cells());
  for (std::size_t k = 0; k < p.num_cells(); ++k) {
    const Point& z = p.representative(k);
    const std::int32_t i = g.index_of(z);
    if (i < 0) throw DataError("representative " + to_string(z, p.dim()) + " is not a vertex of the cluster");
    at_cell[k] = u[static_cast<std::size_t>(i)];
  }
  CoarseFunction f;
  f.source = p.fingerprint();
  f.values.resize(p.lookup().size());
  for (std::size_t v = 0; v < f.values.size(); ++v) {
    const std::int32_t k = p.lookup()[v];
    if (k < 0) throw ConstructionError("partition does not cover the box");
    f.values[v] = at_cell[static_cast<std::size_t>(k)];
  }
  return f;
}

// ---------------------------------------------------------------------------
// Mollifier

namespace {

constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                               0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                 0.4786286704993665, 0.2369268850561891};

}  // namespace

Mollifier::Mollifier(const MollifierSpec& spec) : spec_(spec) {
  if (!(spec.support_radius > 0.0 && spec.support_radius <= 0.5)) throw ConfigError("mollifier support radius must lie in (0, 1/2]");
  if (!(spec.resolution > 0.0 && spec.resolution <= spec.support_radius)) throw ConfigError("mollifier resolution out of range");
  norm_ = 1.0;
  norm_ = 1.0 / integrate(-spec.support_radius, spec.support_radius);
}

double Mollifier::raw(double t) const {
  const double r = spec_.support_radius;
  if (std::abs(t) >= r) return 0.0;
  const double u = t / r;
  if (spec_.family == KernelFamily::polynomial_bump) {
    const double w = 1.0 - u * u;
    return w * w * w;
  }
  return std::exp(-4.5 * u * u);  // sigma = r / 3
}

double Mollifier::profile(double t) const { return norm_ * raw(t); }

// Composite 5-point Gauss-Legendre on panels of width `resolution`, aligned
// to the support so every panel sees a smooth integrand.
double Mollifier::integrate(double a, double b) const {
  const double r = spec_.support_radius;
  a = std::max(a, -r);
  b = std::min(b, r);
  if (b <= a) return 0.0;
  const double h = spec_.resolution;
  double total = 0.0;
  const double first = -r + h * std::floor((a + r) / h);
  for (double lo = first; lo < b; lo += h) {
    const double pa = std::max(lo, a);
    const double pb = std::min(lo + h, b);
    if (pb <= pa) continue;
    const double mid = 0.5 * (pa + pb);
    const double half = 0.5 * (pb - pa);
    double s = 0.0;
    for (std::size_t k = 0; k < kGaussNodes.size(); ++k) s += kGaussWeights[k] * raw(mid + half * kGaussNodes[k]);
    total += half * s;
  }
  return norm_ * total;
}

double Mollifier::window(double s) const { return integrate(s - 0.5, s + 0.5); }

double Mollifier::mass() const {
  // Independent check on a grid twice as fine.
  MollifierSpec fine = spec_;
  fine.resolution = spec_.resolution / 2.0;
  Mollifier m(fine);
  m.norm_ = norm_;
  return m.integrate(-spec_.support_radius, spec_.support_radius);
}

MollifiedField mollify(const Partition& p, const CoarseFunction& f, const Mollifier& eta, const GridSpec& grid) {
  const int d = p.dim();
  if (grid.dim != d) throw PreconditionError("grid dimension does not match the partition");
  if (f.values.size() != p.lookup().size()) throw DataError("coarse function does not match the partition");
  if (f.source != p.fingerprint()) throw DataError("coarse function was built from a different partition");
  const Box& box = p.box();
  for (int i = 0; i < d; ++i) {
    const double lo = grid.origin[i];
    const double hi = grid.origin[i] + grid.spacing * (grid.count[i] - 1);
    if (lo < box.lo[i] + 1 - 1e-12 || hi > box.hi[i] - 1 + 1e-12) throw BoundsError("sample grid touches the box boundary");
  }
  const BoxIndexer idx(box);
  MollifiedField out{GridField(grid, 1), GridField(grid, d)};
  for (std::int64_t g = 0; g < grid.size(); ++g) {
    const auto y = grid.position(g);
    std::array<std::array<int, 3>, kMaxDim> xs{};
    std::array<std::array<double, 3>, kMaxDim> w{};
    std::array<std::array<double, 3>, kMaxDim> dw{};
    std::array<int, kMaxDim> nx{};
    for (int i = 0; i < d; ++i) {
      nx[i] = 0;
      for (int x = static_cast<int>(std::ceil(y[i] - 1.0)); x <= static_cast<int>(std::floor(y[i] + 1.0)); ++x) {
        const double s = y[i] - x;
        if (std::abs(s) >= 1.0) continue;
        xs[i][nx[i]] = x;
        w[i][nx[i]] = eta.window(s);
        dw[i][nx[i]] = eta.window_derivative(s);
        ++nx[i];
      }
    }
    std::array<int, kMaxDim> k{};
    double val = 0.0;
    std::array<double, kMaxDim> grad{};
    while (true) {
      Point x{};
      for (int i = 0; i < d; ++i) x[i] = xs[i][k[i]];
      const double fx = f.values[static_cast<std::size_t>(idx.index(x))];
      double prod = 1.0;
      for (int i = 0; i < d; ++i) prod *= w[i][k[i]];
      val += fx * prod;
      for (int i = 0; i < d; ++i) {
        double term = dw[i][k[i]];
        for (int j = 0; j < d; ++j) {
          if (j != i) term *= w[j][k[j]];
        }
        grad[i] += fx * term;
      }
      int i = d - 1;
      while (i >= 0 && ++k[i] >= nx[i]) {
        k[i] = 0;
        --i;
      }
      if (i < 0) break;
    }
    out.value.at(g) = val;
    for (int i = 0; i < d; ++i) out.gradient.at(g, i) = grad[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coarsening inequalities

namespace {

double vertex_gradient_norm(const ClusterGraph& g, std::span<const double> w, std::int32_t i) {
  double s = 0.0;
  for (std::int32_t j : g.neighbors(i)) {
    const double diff = w[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(j)];
    s += diff * diff;
  }
  return std::sqrt(0.5 * s);
}

std::vector<std::int32_t> crossing_vertices(const Environment& env, const ClusterGraph& g, const TriadicCube& region) {
  const auto cc = crossing_cluster(env, region);
  std::vector<std::int32_t> out;
  if (!cc) return out;
  for (const Point& x : *cc) {
    const std::int32_t i = g.index_of(x);
    if (i < 0) throw DataError("crossing cluster of " + to_string(region) + " leaves the cluster graph");
    out.push_back(i);
  }
  return out;
}

double safe_ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

double coarsening_ratio(const Environment& env, const Partition& p, const ClusterGraph& g, std::span<const double> w,
                        double s, const TriadicCube& region) {
  if (w.size() != static_cast<std::size_t>(g.num_vertices())) throw DataError("function length does not match the cluster");
  const CoarseFunction cw = coarsen(p, g, w);
  const BoxIndexer idx(p.box());
  const int d = p.dim();
  double num = 0.0;
  double den = 0.0;
  for (std::int32_t i : crossing_vertices(env, g, region)) {
    const Point& x = g.point(i);
    const double diff = w[static_cast<std::size_t>(i)] - cw.values[static_cast<std::size_t>(idx.index(x))];
    num += std::pow(std::abs(diff), s);
    const double size = static_cast<double>(p.size_at(x));
    den += std::pow(size, s * d) * std::pow(vertex_gradient_norm(g, w, i), s);
  }
  return safe_ratio(num, den);
}

double gradient_coarsening_ratio(const Environment& env, const Partition& p, const ClusterGraph& g,
                                 std::span<const double> w, double s, const TriadicCube& region) {
  if (w.size() != static_cast<std::size_t>(g.num_vertices())) throw DataError("function length does not match the cluster");
  const CoarseFunction cw = coarsen(p, g, w);
  const BoxIndexer idx(p.box());
  const int d = p.dim();
  const Box rb = region.box().intersect(p.box());
  const BoxIndexer ri(rb);
  double num = 0.0;
  for (std::int64_t li = 0; li < ri.size(); ++li) {
    const Point x = ri.point(li);
    for (int a = 0; a < d; ++a) {
      const Point y = add(x, unit(a));
      if (!rb.contains(y)) continue;
      const double diff = cw.values[static_cast<std::size_t>(idx.index(x))] - cw.values[static_cast<std::size_t>(idx.index(y))];
      num += std::pow(std::abs(diff), s);
    }
  }
  double den = 0.0;
  for (std::int32_t i : crossing_vertices(env, g, region)) {
    const double size = static_cast<double>(p.size_at(g.point(i)));
    den += std::pow(size, s * d - 1.0) * std::pow(vertex_gradient_norm(g, w, i), s);
  }
  return safe_ratio(num, den);
}

// ---------------------------------------------------------------------------
// Statistics

CoarsenessStatistics coarseness_statistics(std::span<const Partition> ensemble, double moment, double threshold) {
  if (ensemble.empty()) throw PreconditionError("empty partition ensemble");
  CoarsenessStatistics st;
  st.moment = moment;
  st.threshold = threshold;
  int m_top = 0;
  for (const Partition& p : ensemble) m_top = std::max(m_top, p.top_scale());
  for (int n = 0; n <= m_top; ++n) st.thresholds.push_back(pow3(n));
  st.exceedance.assign(st.thresholds.size(), 0.0);
  for (const Partition& p : ensemble) {
    const std::int64_t size0 = p.size_at(Point{});
    st.sizes_at_origin.push_back(size0);
    for (std::size_t k = 0; k < st.thresholds.size(); ++k) {
      if (size0 > st.thresholds[k]) st.exceedance[k] += 1.0;
    }
    std::vector<double> avg(static_cast<std::size_t>(p.top_scale()) + 1, 0.0);
    for (int m = 1; m <= p.top_scale(); ++m) {
      const TriadicCube q{p.dim(), m, {}};
      const BoxIndexer qi(q.box());
      double s = 0.0;
      for (std::int64_t li = 0; li < qi.size(); ++li) s += std::pow(static_cast<double>(p.size_at(qi.point(li))), moment);
      avg[static_cast<std::size_t>(m)] = s / static_cast<double>(qi.size());
    }
    int stab = -1;
    for (int m = p.top_scale(); m >= 1; --m) {
      if (avg[static_cast<std::size_t>(m)] > threshold) break;
      stab = m;
    }
    st.stabilisation_scale.push_back(stab);
  }
  for (double& e : st.exceedance) e /= static_cast<double>(ensemble.size());
  return st;
}

ResampleStability compare_partitions(const Partition& before, const Partition& after, const EdgeRef& e,
                                     double far_factor) {
  if (!(before.box() == after.box())) throw PreconditionError("partitions live on different boxes");
  ResampleStability r;
  r.size_near = before.size_at(e.base);
  const double reach = far_factor * static_cast<double>(r.size_near);
  const BoxIndexer idx(before.box());
  const int d = before.dim();
  for (std::int64_t v = 0; v < idx.size(); ++v) {
    const Point x = idx.point(v);
    const int dist = std::min(linf_norm(sub(x, e.base), d), linf_norm(sub(x, e.tip()), d));
    const TriadicCube& a = before.cell_of(x);
    const TriadicCube& b = after.cell_of(x);
    if (dist <= reach) {
      const double ratio = static_cast<double>(std::max(a.size(), b.size())) / static_cast<double>(std::min(a.size(), b.size()));
      r.max_ratio_near = std::max(r.max_ratio_near, ratio);
    } else if (!(a == b)) {
      ++r.far_mismatches;
    }
  }
  r.far_cells_equal = r.far_mismatches == 0;
  return r;
}

ResampleStability partition_resample_stability(const Environment& env, const EdgeRef& e, std::uint64_t aux_seed,
                                               double far_factor, const PartitionOptions& opts) {
  const Environment resampled = resample_edge(env, e, aux_seed);
  const Partition before = build_partition(env, opts);
  const Partition after = build_partition(resampled, opts);
  ResampleStability r = compare_partitions(before, after, e, far_factor);
  r.old_value = env.conductance(e);
  r.new_value = resampled.conductance(e);
  return r;
}

}  // namespace perco
