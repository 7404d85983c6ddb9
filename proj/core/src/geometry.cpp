#include "perco/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "perco/error.hpp"
#include "labeling.hpp"

namespace perco {

Box TriadicCube::box() const {
  Box b{dim, {}, {}};
  const int h = half();
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = center[i] - h;
    b.hi[i] = center[i] + h;
  }
  return b;
}

bool TriadicCube::contains(const Point& x) const {
  const int h = half();
  for (int i = 0; i < dim; ++i) {
    if (x[i] < center[i] - h || x[i] > center[i] + h) return false;
  }
  return true;
}

bool TriadicCube::contains(const TriadicCube& other) const {
  return other.scale <= scale && box().contains(other.box());
}

bool TriadicCube::disjoint(const TriadicCube& other) const { return !box().intersects(other.box()); }

TriadicCube TriadicCube::predecessor() const { return cube_of(dim, center, scale + 1); }

std::vector<TriadicCube> TriadicCube::successors() const {
  if (scale == 0) throw PreconditionError("a scale-0 cube has no successors");
  const int step = static_cast<int>(pow3(scale - 1));
  std::vector<TriadicCube> out;
  const int n = dim == 2 ? 9 : 27;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    TriadicCube c{dim, scale - 1, center};
    int rest = k;
    for (int i = dim - 1; i >= 0; --i) {
      c.center[i] += step * (rest % 3 - 1);
      rest /= 3;
    }
    out.push_back(c);
  }
  return out;
}

Box TriadicCube::dilated(double r) const {
  // Largest integer k with k < r * size / 2.
  const double bound = r * static_cast<double>(size()) / 2.0;
  int k = static_cast<int>(std::ceil(bound)) - 1;
  if (k < 0) k = -1;
  Box b{dim, {}, {}};
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = center[i] - k;
    b.hi[i] = center[i] + k;
  }
  return b;
}

TriadicCube TriadicCube::cube_of(int dim, const Point& x, int scale) {
  const std::int64_t s = pow3(scale);
  TriadicCube c{dim, scale, {}};
  for (int i = 0; i < dim; ++i) {
    c.center[i] = static_cast<int>(s * floor_div(x[i] + (s - 1) / 2, s));
  }
  return c;
}

std::string to_string(const TriadicCube& c) {
  std::ostringstream os;
  os << "cube(scale=" << c.scale << ", center=" << to_string(c.center, c.dim) << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// ClusterGraph

void ClusterGraph::finalize() {
  const auto n = static_cast<std::size_t>(points_.size());
  bbox_ = Box{dim_, points_.empty() ? Point{} : points_[0], points_.empty() ? Point{} : points_[0]};
  for (const Point& p : points_) {
    for (int i = 0; i < dim_; ++i) {
      bbox_.lo[i] = std::min(bbox_.lo[i], p[i]);
      bbox_.hi[i] = std::max(bbox_.hi[i], p[i]);
    }
  }
  lookup_.assign(points_.empty() ? 0 : static_cast<std::size_t>(bbox_.volume()), -1);
  if (!points_.empty()) {
    const BoxIndexer idx(bbox_);
    for (std::size_t k = 0; k < n; ++k) {
      auto& slot = lookup_[static_cast<std::size_t>(idx.index(points_[k]))];
      if (slot >= 0) throw DataError("duplicate vertex " + to_string(points_[k], dim_));
      slot = static_cast<std::int32_t>(k);
    }
  }
  std::vector<std::int32_t> degree(n, 0);
  for (const Edge& e : edges_) {
    if (e.tail < 0 || e.head < 0 || static_cast<std::size_t>(e.tail) >= n || static_cast<std::size_t>(e.head) >= n ||
        e.tail >= e.head) {
      throw DataError("malformed edge list");
    }
    ++degree[static_cast<std::size_t>(e.tail)];
    ++degree[static_cast<std::size_t>(e.head)];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
  adj_vertex_.assign(static_cast<std::size_t>(offsets_[n]), 0);
  adj_edge_.assign(static_cast<std::size_t>(offsets_[n]), 0);
  std::vector<std::int32_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    auto put = [&](std::int32_t from, std::int32_t to) {
      const auto pos = static_cast<std::size_t>(fill[static_cast<std::size_t>(from)]++);
      adj_vertex_[pos] = to;
      adj_edge_[pos] = static_cast<std::int32_t>(k);
    };
    put(e.tail, e.head);
    put(e.head, e.tail);
  }
}

ClusterGraph ClusterGraph::from_edges(int dim, std::vector<Point> points, std::vector<Edge> edges) {
  ClusterGraph g;
  g.dim_ = dim;
  g.points_ = std::move(points);
  g.edges_ = std::move(edges);
  for (const Edge& e : g.edges_) {
    if (!(e.conductance > 0.0)) throw DataError("cluster edges must have positive conductance");
  }
  g.finalize();
  // Connectivity check by search from vertex 0.
  if (g.num_vertices() > 0) {
    std::vector<char> seen(g.points_.size(), 0);
    std::vector<std::int32_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::int32_t v = stack.back();
      stack.pop_back();
      for (std::int32_t w : g.neighbors(v)) {
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          ++reached;
          stack.push_back(w);
        }
      }
    }
    if (reached != g.points_.size()) throw TopologyError("cluster graph is not connected");
  }
  return g;
}

EdgeRef ClusterGraph::edge_ref(std::int32_t k) const {
  const Edge& e = edge(k);
  return {point(e.tail), e.axis};
}

std::span<const std::int32_t> ClusterGraph::neighbors(std::int32_t i) const {
  const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(i)]);
  const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(i) + 1]);
  return {adj_vertex_.data() + b, e - b};
}

std::span<const std::int32_t> ClusterGraph::incident_edges(std::int32_t i) const {
  const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(i)]);
  const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(i) + 1]);
  return {adj_edge_.data() + b, e - b};
}

std::int32_t ClusterGraph::index_of(const Point& x) const {
  if (points_.empty() || !bbox_.contains(x)) return -1;
  const BoxIndexer idx(bbox_);
  return lookup_[static_cast<std::size_t>(idx.index(x))];
}

std::int32_t ClusterGraph::edge_between(std::int32_t i, std::int32_t j) const {
  const auto nb = neighbors(i);
  const auto inc = incident_edges(i);
  for (std::size_t k = 0; k < nb.size(); ++k) {
    if (nb[k] == j) return inc[k];
  }
  return -1;
}

std::int32_t ClusterGraph::edge_index(const EdgeRef& e) const {
  const std::int32_t i = index_of(e.base);
  if (i < 0) return -1;
  const std::int32_t j = index_of(e.tip());
  if (j < 0) return -1;
  return edge_between(i, j);
}

ClusterGraph build_cluster_graph(const Environment& env, std::vector<Point> points) {
  std::sort(points.begin(), points.end(), [&](const Point& a, const Point& b) { return lex_less(a, b, env.dim()); });
  ClusterGraph g;
  g.dim_ = env.dim();
  g.points_ = std::move(points);
  g.finalize();
  const int d = env.dim();
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    const Point& x = g.point(i);
    const std::int64_t v = env.vertex_index(x);
    for (int a = 0; a < d; ++a) {
      if (!env.has_bond(v, a)) continue;
      const float c = env.conductance(v, a);
      if (c <= 0.0f) continue;
      const std::int32_t j = g.index_of(add(x, unit(a)));
      if (j < 0) continue;
      g.edges_.push_back({i, j, a, static_cast<double>(c)});
    }
  }
  g.finalize();
  return g;
}

// ---------------------------------------------------------------------------
// Components

namespace detail {

void Labeler::run(const Environment& env, const Box& box, const std::uint8_t* mask) {
  box_ = box;
  dim_ = env.dim();
  const BoxIndexer local(box);
  const std::int64_t n = local.size();
  label.assign(static_cast<std::size_t>(n), -1);
  comps.clear();
  queue_.resize(static_cast<std::size_t>(n));
  std::array<std::int64_t, kMaxDim> lstride{};
  std::array<std::int64_t, kMaxDim> gstride{};
  std::array<int, kMaxDim> side{};
  for (int i = 0; i < dim_; ++i) {
    lstride[i] = local.stride(i);
    gstride[i] = env.indexer().stride(i);
    side[i] = box.side(i);
  }
  const std::int64_t gbase = env.vertex_index(box.lo);
  const float* a = env.values().data();

  for (std::int64_t start = 0; start < n; ++start) {
    if (label[static_cast<std::size_t>(start)] >= 0) continue;
    const auto id = static_cast<std::int32_t>(comps.size());
    Component comp;
    comp.first = start;
    for (int i = 0; i < dim_; ++i) {
      comp.lo[i] = side[i];
      comp.hi[i] = -1;
    }
    std::size_t head = 0;
    std::size_t tail = 0;
    queue_[tail++] = start;
    label[static_cast<std::size_t>(start)] = id;
    while (head < tail) {
      const std::int64_t li = queue_[head++];
      ++comp.size;
      std::array<int, kMaxDim> c{};
      std::int64_t rest = li;
      std::int64_t g = gbase;
      for (int i = 0; i < dim_; ++i) {
        c[i] = static_cast<int>(rest / lstride[i]);
        rest %= lstride[i];
        g += c[i] * gstride[i];
      }
      if (mask && mask[li]) comp.marked = true;
      for (int i = 0; i < dim_; ++i) {
        comp.lo[i] = std::min(comp.lo[i], c[i]);
        comp.hi[i] = std::max(comp.hi[i], c[i]);
        if (c[i] == 0) comp.faces |= static_cast<std::uint8_t>(1u << (2 * i));
        if (c[i] == side[i] - 1) comp.faces |= static_cast<std::uint8_t>(1u << (2 * i + 1));
        if (c[i] + 1 < side[i] && a[g * dim_ + i] > 0.0f) {
          const std::int64_t nb = li + lstride[i];
          if (label[static_cast<std::size_t>(nb)] < 0) {
            label[static_cast<std::size_t>(nb)] = id;
            queue_[tail++] = nb;
          }
        }
        if (c[i] > 0 && a[(g - gstride[i]) * dim_ + i] > 0.0f) {
          const std::int64_t nb = li - lstride[i];
          if (label[static_cast<std::size_t>(nb)] < 0) {
            label[static_cast<std::size_t>(nb)] = id;
            queue_[tail++] = nb;
          }
        }
      }
    }
    comps.push_back(comp);
  }
}

std::uint8_t Labeler::all_faces() const { return static_cast<std::uint8_t>((1u << (2 * dim_)) - 1u); }

int Labeler::crossing_component() const {
  int best = -1;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (comps[k].faces != all_faces()) continue;
    // Components are discovered in order of their smallest vertex, so a strict
    // comparison keeps the lexicographic tie-break.
    if (best < 0 || comps[k].size > comps[static_cast<std::size_t>(best)].size) best = static_cast<int>(k);
  }
  return best;
}

int Labeler::largest_component() const {
  int best = -1;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (best < 0 || comps[k].size > comps[static_cast<std::size_t>(best)].size) best = static_cast<int>(k);
  }
  return best;
}

bool Labeler::crossable() const {
  for (int i = 0; i < dim_; ++i) {
    const auto both = static_cast<std::uint8_t>(3u << (2 * i));
    bool ok = false;
    for (const Component& c : comps) {
      if ((c.faces & both) == both) {
        ok = true;
        break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

std::vector<Point> Labeler::members(int comp) const {
  const BoxIndexer local(box_);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(comps[static_cast<std::size_t>(comp)].size));
  for (std::int64_t li = comps[static_cast<std::size_t>(comp)].first; li < local.size(); ++li) {
    if (label[static_cast<std::size_t>(li)] == comp) out.push_back(local.point(li));
  }
  return out;
}

Labeler& thread_labeler() {
  thread_local Labeler labeler;
  return labeler;
}

}  // namespace detail

namespace {

void require_in_box(const Environment& env, const Box& b) {
  if (b.empty() || !env.box().contains(b)) throw BoundsError("region is not inside the environment box");
}

// Components of an arbitrary point set, by search restricted to the set.
std::vector<std::vector<Point>> components_of_set(const Environment& env, std::span<const Point> region) {
  const int d = env.dim();
  std::vector<Point> pts(region.begin(), region.end());
  for (const Point& p : pts) {
    if (!env.contains(p)) throw BoundsError("region point " + to_string(p, d) + " is outside the box");
  }
  std::sort(pts.begin(), pts.end(), [&](const Point& a, const Point& b) { return lex_less(a, b, d); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<std::int32_t> in_set(static_cast<std::size_t>(env.num_vertices()), -1);
  for (std::size_t k = 0; k < pts.size(); ++k) in_set[static_cast<std::size_t>(env.vertex_index(pts[k]))] = static_cast<std::int32_t>(k);
  std::vector<char> seen(pts.size(), 0);
  std::vector<std::vector<Point>> out;
  std::vector<std::int32_t> stack;
  for (std::size_t s = 0; s < pts.size(); ++s) {
    if (seen[s]) continue;
    std::vector<Point> comp;
    seen[s] = 1;
    stack.assign(1, static_cast<std::int32_t>(s));
    while (!stack.empty()) {
      const Point x = pts[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      comp.push_back(x);
      for (int a = 0; a < d; ++a) {
        for (int sign : {1, -1}) {
          Point y = x;
          y[a] += sign;
          if (!env.contains(y) || env.conductance_between(x, y) <= 0.0f) continue;
          const std::int32_t k = in_set[static_cast<std::size_t>(env.vertex_index(y))];
          if (k >= 0 && !seen[static_cast<std::size_t>(k)]) {
            seen[static_cast<std::size_t>(k)] = 1;
            stack.push_back(k);
          }
        }
      }
    }
    std::sort(comp.begin(), comp.end(), [&](const Point& a, const Point& b) { return lex_less(a, b, d); });
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace

std::vector<std::vector<Point>> open_clusters(const Environment& env, const Box& region) {
  require_in_box(env, region);
  auto& lab = detail::thread_labeler();
  lab.run(env, region);
  std::vector<std::vector<Point>> out(lab.comps.size());
  for (auto& c : out) c.reserve(4);
  const BoxIndexer local(region);
  for (std::int64_t li = 0; li < local.size(); ++li) {
    out[static_cast<std::size_t>(lab.label[static_cast<std::size_t>(li)])].push_back(local.point(li));
  }
  return out;
}

std::vector<std::vector<Point>> open_clusters(const Environment& env, std::span<const Point> region) {
  return components_of_set(env, region);
}

namespace {

ClusterGraph pick_maximal(const Environment& env, std::vector<std::vector<Point>> comps) {
  std::size_t best = comps.size();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (best == comps.size() || comps[k].size() > comps[best].size()) best = k;
  }
  if (best == comps.size() || comps[best].size() < 2) throw EmptyClusterError("region contains no open edge");
  return build_cluster_graph(env, std::move(comps[best]));
}

}  // namespace

ClusterGraph maximal_cluster(const Environment& env, const Box& region) {
  require_in_box(env, region);
  auto& lab = detail::thread_labeler();
  lab.run(env, region);
  const int best = lab.largest_component();
  if (best < 0 || lab.comps[static_cast<std::size_t>(best)].size < 2) throw EmptyClusterError("region contains no open edge");
  return build_cluster_graph(env, lab.members(best));
}

ClusterGraph maximal_cluster(const Environment& env, std::span<const Point> region) {
  if (region.empty()) throw PreconditionError("region is empty");
  return pick_maximal(env, components_of_set(env, region));
}

bool is_crossable(const Environment& env, const Box& cube) {
  require_in_box(env, cube);
  auto& lab = detail::thread_labeler();
  lab.run(env, cube);
  return lab.crossable();
}

bool is_crossable(const Environment& env, const TriadicCube& cube) { return is_crossable(env, cube.box()); }

std::optional<std::vector<Point>> crossing_cluster(const Environment& env, const Box& cube) {
  require_in_box(env, cube);
  auto& lab = detail::thread_labeler();
  lab.run(env, cube);
  const int c = lab.crossing_component();
  if (c < 0) return std::nullopt;
  return lab.members(c);
}

std::optional<std::vector<Point>> crossing_cluster(const Environment& env, const TriadicCube& cube) {
  return crossing_cluster(env, cube.box());
}

// ---------------------------------------------------------------------------
// Well-connectedness

namespace {

int resolution(int size, const WellConnectedOptions& opts) {
  return std::max({1, opts.min_resolution, static_cast<int>(std::ceil(opts.fraction * size - 1e-9))});
}

std::vector<int> subcube_sides(int size, const WellConnectedOptions& opts) {
  const int t = resolution(size, opts);
  const int cap = size / 2;
  std::vector<int> sides;
  if (opts.family == SubcubeFamily::exhaustive) {
    for (int s = t; s <= cap; ++s) sides.push_back(s);
  } else {
    for (int k = 1; k <= 5; ++k) sides.push_back(std::min(k * t, cap));
    std::sort(sides.begin(), sides.end());
    sides.erase(std::unique(sides.begin(), sides.end()), sides.end());
  }
  std::erase_if(sides, [&](int s) { return s < std::max(2, t); });
  return sides;
}

std::vector<int> anchors(int lo, int hi, int side, int step) {
  std::vector<int> out;
  const int last = hi - side + 1;
  if (last < lo) return out;
  for (int a = lo; a <= last; a += step) out.push_back(a);
  if (out.back() != last) out.push_back(last);
  return out;
}

}  // namespace

bool well_connected_box(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts) {
  const int size = static_cast<int>(cube.size());
  const int d = env.dim();
  const Box qb = cube.box();
  detail::Labeler outer;
  outer.run(env, qb);
  const int c = outer.crossing_component();
  if (c < 0) return false;

  // Membership in the crossing cluster, indexed over the cube.
  const BoxIndexer qidx(qb);
  std::vector<std::uint8_t> in_c(static_cast<std::size_t>(qidx.size()), 0);
  for (std::size_t li = 0; li < in_c.size(); ++li) in_c[li] = outer.label[li] == c ? 1 : 0;

  const int t = resolution(size, opts);
  const Box core = cube.dilated(0.75);
  const int step = opts.family == SubcubeFamily::exhaustive ? 1 : t;
  auto& lab = detail::thread_labeler();
  std::vector<std::uint8_t> sub_mask;

  for (const int s : subcube_sides(size, opts)) {
    std::array<std::vector<int>, kMaxDim> grid;
    for (int i = 0; i < d; ++i) grid[i] = anchors(qb.lo[i], qb.hi[i], s, step);
    std::array<std::size_t, kMaxDim> pos{};
    while (true) {
      Box sb{d, {}, {}};
      for (int i = 0; i < d; ++i) {
        sb.lo[i] = grid[i][pos[i]];
        sb.hi[i] = sb.lo[i] + s - 1;
      }
      if (sb.intersects(core)) {
        const BoxIndexer sidx(sb);
        sub_mask.resize(static_cast<std::size_t>(sidx.size()));
        for (std::int64_t li = 0; li < sidx.size(); ++li) {
          sub_mask[static_cast<std::size_t>(li)] = in_c[static_cast<std::size_t>(qidx.index(sidx.point(li)))];
        }
        lab.run(env, sb, sub_mask.data());
        if (!lab.crossable()) return false;
        for (const auto& comp : lab.comps) {
          if (comp.marked) continue;
          int extent = 0;
          for (int i = 0; i < d; ++i) extent = std::max(extent, comp.hi[i] - comp.lo[i]);
          if (extent >= t) return false;
        }
      }
      int i = d - 1;
      while (i >= 0 && ++pos[i] == grid[i].size()) {
        pos[i] = 0;
        --i;
      }
      if (i < 0) break;
    }
  }
  return true;
}

bool is_well_connected(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts) {
  if (cube.size() < 3) throw PreconditionError("well-connectedness needs size >= 3");
  require_in_box(env, cube.box());
  return well_connected_box(env, cube, opts);
}

bool is_good(const Environment& env, const TriadicCube& cube, const WellConnectedOptions& opts) {
  if (cube.size() < 3) return false;
  if (!is_well_connected(env, cube, opts)) return false;
  if (cube.scale == 1) return true;
  for (const TriadicCube& s : cube.successors()) {
    if (!well_connected_box(env, s, opts)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// GoodnessMap

GoodnessMap::GoodnessMap(const Environment& env, const WellConnectedOptions& opts)
    : dim_(env.dim()), top_scale_(env.spec().scale), opts_(opts) {
  offset_.assign(static_cast<std::size_t>(top_scale_) + 2, 0);
  for (int n = 1; n <= top_scale_; ++n) {
    std::size_t per = 1;
    for (int i = 0; i < dim_; ++i) per *= static_cast<std::size_t>(count(n));
    offset_[static_cast<std::size_t>(n) + 1] = offset_[static_cast<std::size_t>(n)] + per;
  }
  wc_.assign(offset_.back(), 0);
  good_.assign(offset_.back(), 0);
  for (int n = 1; n <= top_scale_; ++n) {
    for (const TriadicCube& c : cubes(n)) wc_[slot(c)] = well_connected_box(env, c, opts_) ? 1 : 0;
  }
  for (int n = 1; n <= top_scale_; ++n) {
    for (const TriadicCube& c : cubes(n)) evaluate(env, c);
  }
}

bool GoodnessMap::in_box(const TriadicCube& c) const {
  if (c.dim != dim_ || c.scale < 1 || c.scale > top_scale_) return false;
  const std::int64_t s = c.size();
  const std::int64_t lim = (count(c.scale) - 1) / 2;
  for (int i = 0; i < dim_; ++i) {
    if (c.center[i] % s != 0) return false;
    const std::int64_t k = c.center[i] / s;
    if (k < -lim || k > lim) return false;
  }
  return true;
}

std::size_t GoodnessMap::slot(const TriadicCube& c) const {
  if (!in_box(c)) throw BoundsError(to_string(c) + " is not a scale 1..M cube of the box");
  const std::int64_t s = c.size();
  const std::int64_t lim = (count(c.scale) - 1) / 2;
  std::size_t idx = 0;
  for (int i = 0; i < dim_; ++i) {
    idx = idx * static_cast<std::size_t>(count(c.scale)) + static_cast<std::size_t>(c.center[i] / s + lim);
  }
  return offset_[static_cast<std::size_t>(c.scale)] + idx;
}

bool GoodnessMap::well_connected(const TriadicCube& c) const { return wc_[slot(c)] != 0; }
bool GoodnessMap::good(const TriadicCube& c) const { return good_[slot(c)] != 0; }

std::vector<TriadicCube> GoodnessMap::cubes(int scale) const {
  std::vector<TriadicCube> out;
  const int per = count(scale);
  const int lim = (per - 1) / 2;
  const int s = static_cast<int>(pow3(scale));
  std::size_t total = 1;
  for (int i = 0; i < dim_; ++i) total *= static_cast<std::size_t>(per);
  out.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    TriadicCube c{dim_, scale, {}};
    std::size_t rest = k;
    for (int i = dim_ - 1; i >= 0; --i) {
      c.center[i] = s * (static_cast<int>(rest % static_cast<std::size_t>(per)) - lim);
      rest /= static_cast<std::size_t>(per);
    }
    out.push_back(c);
  }
  return out;
}

void GoodnessMap::evaluate(const Environment&, const TriadicCube& c) {
  bool g = wc_[slot(c)] != 0;
  if (g && c.scale > 1) {
    for (const TriadicCube& s : c.successors()) {
      if (!wc_[slot(s)]) {
        g = false;
        break;
      }
    }
  }
  good_[slot(c)] = g ? 1 : 0;
}

void GoodnessMap::update_edge(const Environment& env, const EdgeRef& e) {
  std::vector<TriadicCube> touched;
  for (int n = 1; n <= top_scale_; ++n) {
    const TriadicCube a = TriadicCube::cube_of(dim_, e.base, n);
    const TriadicCube b = TriadicCube::cube_of(dim_, e.tip(), n);
    touched.push_back(a);
    if (!(b == a) && in_box(b)) touched.push_back(b);
  }
  for (const TriadicCube& c : touched) wc_[slot(c)] = well_connected_box(env, c, opts_) ? 1 : 0;
  for (const TriadicCube& c : touched) {
    evaluate(env, c);
    if (c.scale < top_scale_) evaluate(env, c.predecessor());
  }
}

void GoodnessMap::write_csv(std::ostream& out) const {
  out << "scale";
  for (int i = 0; i < dim_; ++i) out << ",z" << i;
  out << ",well_connected,good\n";
  for (int n = 1; n <= top_scale_; ++n) {
    for (const TriadicCube& c : cubes(n)) {
      out << n;
      for (int i = 0; i < dim_; ++i) out << ',' << c.center[i];
      out << ',' << int(wc_[slot(c)]) << ',' << int(good_[slot(c)]) << '\n';
    }
  }
}

}  // namespace perco
