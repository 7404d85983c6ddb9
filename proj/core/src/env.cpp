#include "perco/env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "perco/error.hpp"
#include "perco/rng.hpp"

namespace perco {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'O', 'E', 'N', 'V', '0', '1'};

float lambda_as_float(double lambda) {
  float f = static_cast<float>(lambda);
  if (static_cast<double>(f) < lambda) f = std::nextafter(f, 2.0f);
  return f;
}

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw DataError("environment file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

Box triadic_box(int dim, int scale) {
  const int half = static_cast<int>((pow3(scale) - 1) / 2);
  Box b{dim, {}, {}};
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = -half;
    b.hi[i] = half;
  }
  return b;
}

}  // namespace

std::string to_string(ConductanceLaw law) {
  return law == ConductanceLaw::constant_one ? "constant-one" : "uniform";
}

ConductanceLaw parse_law(const std::string& name) {
  if (name == "constant-one" || name == "constant_one" || name == "constant") return ConductanceLaw::constant_one;
  if (name == "uniform") return ConductanceLaw::uniform;
  throw ConfigError("unknown conductance law '" + name + "'");
}

double percolation_threshold(int dim) {
  switch (dim) {
    case 2:
      return kPercolationThreshold2d;
    case 3:
      return kPercolationThreshold3d;
    default:
      throw ConfigError("dimension must be 2 or 3");
  }
}

void EnvironmentSpec::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("dimension must be 2 or 3");
  if (scale < 0 || scale > (dim == 2 ? 8 : 5)) throw ConfigError("box scale out of supported range");
  if (!(open_probability > 0.0 && open_probability <= 1.0)) throw ConfigError("open probability must lie in (0, 1]");
  if (!(ellipticity > 0.0 && ellipticity <= 1.0)) throw ConfigError("ellipticity must lie in (0, 1]");
  if (!allow_subcritical && open_probability <= percolation_threshold(dim)) {
    std::ostringstream msg;
    msg << "open probability " << open_probability << " does not exceed p_c(" << dim
        << ") = " << percolation_threshold(dim) << " (set allow_subcritical to override)";
    throw ConfigError(msg.str());
  }
}

int EnvironmentSpec::side() const { return static_cast<int>(pow3(scale)); }

Point EdgeRef::tip() const { return add(base, unit(axis)); }

EdgeRef EdgeRef::between(const Point& x, const Point& y, int dim) {
  const Point d = sub(y, x);
  if (l1_norm(d, dim) != 1) throw PreconditionError("edge endpoints are not nearest neighbours");
  for (int i = 0; i < dim; ++i) {
    if (d[i] == 1) return {x, i};
    if (d[i] == -1) return {y, i};
  }
  throw PreconditionError("edge endpoints are not nearest neighbours");
}

Environment::Environment(const EnvironmentSpec& spec, std::vector<float> values)
    : spec_(spec),
      side_(spec.side()),
      indexer_(triadic_box(spec.dim, spec.scale)),
      lambda_f_(lambda_as_float(spec.ellipticity)),
      values_(std::move(values)) {}

float draw_conductance(const EnvironmentSpec& spec, Rng& rng) {
  if (rng.uniform() >= spec.open_probability) return 0.0f;
  if (spec.law == ConductanceLaw::constant_one) return 1.0f;
  const float lo = lambda_as_float(spec.ellipticity);
  const auto v = static_cast<float>(rng.uniform(spec.ellipticity, 1.0));
  return std::clamp(v, lo, 1.0f);
}

Environment Environment::generate(const EnvironmentSpec& spec) {
  spec.validate();
  Environment env(spec, {});
  env.values_.assign(static_cast<std::size_t>(env.num_vertices()) * spec.dim, 0.0f);
  Rng rng(spec.seed);
  for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
    for (int a = 0; a < spec.dim; ++a) {
      if (env.has_bond(v, a)) env.values_[static_cast<std::size_t>(v) * spec.dim + a] = draw_conductance(spec, rng);
    }
  }
  return env;
}

Environment Environment::constant(const EnvironmentSpec& spec, float value) {
  spec.validate();
  Environment env(spec, {});
  env.values_.assign(static_cast<std::size_t>(env.num_vertices()) * spec.dim, 0.0f);
  for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
    for (int a = 0; a < spec.dim; ++a) {
      if (env.has_bond(v, a)) env.values_[static_cast<std::size_t>(v) * spec.dim + a] = value;
    }
  }
  env.check_values();
  return env;
}

Environment Environment::from_values(const EnvironmentSpec& spec, std::vector<float> values) {
  spec.validate();
  Environment env(spec, std::move(values));
  if (env.values_.size() != static_cast<std::size_t>(env.num_vertices()) * spec.dim) {
    throw DataError("conductance array has wrong length");
  }
  env.check_values();
  return env;
}

void Environment::check_values() const {
  for (std::int64_t v = 0; v < num_vertices(); ++v) {
    for (int a = 0; a < dim(); ++a) {
      const float c = conductance(v, a);
      if (!has_bond(v, a)) {
        if (c != 0.0f) throw DataError("absent bond carries a conductance");
        continue;
      }
      if (!(c == 0.0f || (c >= lambda_f_ && c <= 1.0f))) {
        throw DataError("conductance outside {0} u [lambda, 1]");
      }
    }
  }
}

std::int64_t Environment::num_bonds() const {
  std::int64_t per_axis = 1;
  for (int i = 0; i < dim() - 1; ++i) per_axis *= side_;
  return per_axis * (side_ - 1) * dim();
}

bool Environment::has_bond(std::int64_t v, int axis) const {
  const std::int64_t coord = (v / indexer_.stride(axis)) % side_;
  return coord < side_ - 1;
}

bool Environment::has_bond(const EdgeRef& e) const {
  return e.axis >= 0 && e.axis < dim() && contains(e.base) && contains(e.tip());
}

float Environment::conductance(const EdgeRef& e) const {
  if (!has_bond(e)) throw BoundsError("edge " + to_string(e.base, dim()) + " axis " + std::to_string(e.axis) + " is outside the box");
  return conductance(vertex_index(e.base), e.axis);
}

float Environment::conductance_between(const Point& x, const Point& y) const {
  if (!contains(x) || !contains(y)) return 0.0f;
  return conductance(EdgeRef::between(x, y, dim()));
}

std::int64_t Environment::bond_slot(const EdgeRef& e) const {
  if (!has_bond(e)) throw BoundsError("edge outside the box");
  return vertex_index(e.base) * dim() + e.axis;
}

EdgeRef Environment::bond_at(std::int64_t slot) const {
  return {vertex_point(slot / dim()), static_cast<int>(slot % dim())};
}

std::int64_t Environment::count_open() const {
  return std::count_if(values_.begin(), values_.end(), [](float c) { return c > 0.0f; });
}

Environment Environment::with_edge(const EdgeRef& e, float value) const {
  Environment copy = *this;
  copy.values_[static_cast<std::size_t>(bond_slot(e))] = value;
  if (!(value == 0.0f || (value >= lambda_f_ && value <= 1.0f))) throw DataError("conductance outside {0} u [lambda, 1]");
  return copy;
}

bool Environment::operator==(const Environment& other) const {
  return spec_ == other.spec_ && values_ == other.values_;
}

void Environment::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec_.dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec_.scale));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec_.law));
  put<std::uint32_t>(out, spec_.allow_subcritical ? 1u : 0u);
  put<double>(out, spec_.open_probability);
  put<double>(out, spec_.ellipticity);
  put<std::uint64_t>(out, spec_.seed);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(num_bonds()));
  for (std::int64_t v = 0; v < num_vertices(); ++v) {
    for (int a = 0; a < dim(); ++a) {
      if (has_bond(v, a)) put<float>(out, conductance(v, a));
    }
  }
  if (!out) throw DataError("failed to write environment");
}

void Environment::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  save(out);
}

Environment Environment::load(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not an environment file");
  EnvironmentSpec spec;
  spec.dim = static_cast<int>(get<std::uint32_t>(in));
  spec.scale = static_cast<int>(get<std::uint32_t>(in));
  const auto law = get<std::uint32_t>(in);
  if (law > 1) throw DataError("unknown conductance law tag");
  spec.law = static_cast<ConductanceLaw>(law);
  spec.allow_subcritical = (get<std::uint32_t>(in) & 1u) != 0;
  spec.open_probability = get<double>(in);
  spec.ellipticity = get<double>(in);
  spec.seed = get<std::uint64_t>(in);
  const auto count = get<std::uint64_t>(in);
  spec.validate();
  Environment env(spec, {});
  if (count != static_cast<std::uint64_t>(env.num_bonds())) throw DataError("bond count does not match header");
  env.values_.assign(static_cast<std::size_t>(env.num_vertices()) * spec.dim, 0.0f);
  for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
    for (int a = 0; a < spec.dim; ++a) {
      if (env.has_bond(v, a)) env.values_[static_cast<std::size_t>(v) * spec.dim + a] = get<float>(in);
    }
  }
  env.check_values();
  return env;
}

Environment Environment::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load(in);
}

Environment resample_edge(const Environment& env, const EdgeRef& e, std::uint64_t aux_seed) {
  const std::int64_t slot = env.bond_slot(e);
  Rng rng(splitmix64(aux_seed) ^ static_cast<std::uint64_t>(slot));
  return env.with_edge(e, draw_conductance(env.spec(), rng));
}

Environment translate(const Environment& env, const Point& shift, int scale) {
  EnvironmentSpec spec = env.spec();
  spec.scale = scale;
  const Box target = triadic_box(env.dim(), scale);
  Box shifted = target;
  for (int i = 0; i < env.dim(); ++i) {
    shifted.lo[i] += shift[i];
    shifted.hi[i] += shift[i];
  }
  if (!env.box().contains(shifted)) throw BoundsError("translated sub-box escapes the environment box");
  const BoxIndexer idx(target);
  std::vector<float> values(static_cast<std::size_t>(idx.size()) * env.dim(), 0.0f);
  const int half = static_cast<int>((pow3(scale) - 1) / 2);
  for (std::int64_t v = 0; v < idx.size(); ++v) {
    const Point x = idx.point(v);
    const std::int64_t src = env.vertex_index(add(x, shift));
    for (int a = 0; a < env.dim(); ++a) {
      if (x[a] < half) values[static_cast<std::size_t>(v) * env.dim() + a] = env.conductance(src, a);
    }
  }
  return Environment::from_values(spec, std::move(values));
}

}  // namespace perco
