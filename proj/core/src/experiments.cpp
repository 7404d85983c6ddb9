#include "perco/experiments.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "perco/analysis.hpp"
#include "perco/error.hpp"
#include "perco/grid.hpp"
#include "perco/rng.hpp"
#include "perco/solver.hpp"

#ifndef PERCO_VERSION
#define PERCO_VERSION "0.0.0"
#endif

namespace perco {

std::string code_version() { return std::string("perco ") + PERCO_VERSION; }

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    try {
      out.push_back(std::stod(item.substr(b)));
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

template <class T>
T parse_number(const std::string& v) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(v, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      out = std::stoull(v, &used);
    } else {
      out = static_cast<T>(std::stol(v, &used));
    }
    if (used != v.size()) throw ConfigError("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + v + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (samples < 1) throw ConfigError("samples must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (resamples < 1 || edge_samples < 1) throw ConfigError("resamples and edge_samples must be >= 1");
  if (pointwise_points < 0) throw ConfigError("pointwise_points must be >= 0");
  for (double q : q_list) {
    if (!(q >= 1.0)) throw ConfigError("every q must be >= 1");
  }
  EnvironmentSpec s = env;
  s.validate();
  double norm = 0.0;
  for (int i = 0; i < env.dim; ++i) norm += direction[i] * direction[i];
  if (norm == 0.0) throw ConfigError("direction must be nonzero");
  const bool uses_radii = experiment == "scaling" || experiment == "decay" || experiment == "sensitivity";
  if (uses_radii) {
    if (radii.empty()) throw ConfigError("radius ladder is empty");
    const double half = static_cast<double>((pow3(env.scale) - 1) / 2);
    for (double r : radii) {
      if (!(r >= 1.0) || r > half - 2.0) {
        throw ConfigError("radius " + std::to_string(r) + " does not fit in the box of half-width " +
                          std::to_string(static_cast<int>(half)));
      }
    }
  }
}

std::uint64_t RunConfig::sample_seed_of(int index) const { return sample_seed(seed, static_cast<std::uint64_t>(index)); }

EnvironmentSpec RunConfig::sample_spec(int index) const {
  EnvironmentSpec s = env;
  s.seed = sample_seed_of(index);
  return s;
}

RunConfig RunConfig::parse(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig c;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> keys = {
      {"run.experiment", [&](const std::string& v) { c.experiment = v; }},
      {"run.seed", [&](const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"run.samples", [&](const std::string& v) { c.samples = parse_number<int>(v); }},
      {"run.workers", [&](const std::string& v) { c.workers = parse_number<int>(v); }},
      {"run.output", [&](const std::string& v) { c.output_dir = v; }},
      {"run.strict", [&](const std::string& v) { c.strict = parse_bool(v); }},
      {"environment.dim", [&](const std::string& v) { c.env.dim = parse_number<int>(v); }},
      {"environment.scale", [&](const std::string& v) { c.env.scale = parse_number<int>(v); }},
      {"environment.open_probability", [&](const std::string& v) { c.env.open_probability = parse_number<double>(v); }},
      {"environment.ellipticity", [&](const std::string& v) { c.env.ellipticity = parse_number<double>(v); }},
      {"environment.law", [&](const std::string& v) { c.env.law = parse_law(v); }},
      {"environment.allow_subcritical", [&](const std::string& v) { c.env.allow_subcritical = parse_bool(v); }},
      {"analysis.radii", [&](const std::string& v) { c.radii = parse_list(v); }},
      {"analysis.direction",
       [&](const std::string& v) {
         const auto d = parse_list(v);
         if (d.empty() || d.size() > kMaxDim) throw ConfigError("direction needs 1 to 3 entries");
         c.direction = {0.0, 0.0, 0.0};
         for (std::size_t i = 0; i < d.size(); ++i) c.direction[i] = d[i];
       }},
      {"analysis.q", [&](const std::string& v) { c.q_list = parse_list(v); }},
      {"analysis.tolerance", [&](const std::string& v) { c.tolerance = parse_number<double>(v); }},
      {"analysis.moment_exponent", [&](const std::string& v) { c.moment_exponent = parse_number<double>(v); }},
      {"analysis.pointwise_points", [&](const std::string& v) { c.pointwise_points = parse_number<int>(v); }},
      {"partition.min_resolution", [&](const std::string& v) { c.partition.goodness.min_resolution = parse_number<int>(v); }},
      {"partition.fraction", [&](const std::string& v) { c.partition.goodness.fraction = parse_number<double>(v); }},
      {"partition.neighbor_factor", [&](const std::string& v) { c.partition.neighbor_factor = parse_number<double>(v); }},
      {"partition.family",
       [&](const std::string& v) {
         if (v == "sparse") {
           c.partition.goodness.family = SubcubeFamily::sparse;
         } else if (v == "exhaustive") {
           c.partition.goodness.family = SubcubeFamily::exhaustive;
         } else {
           throw ConfigError("unknown sub-cube family '" + v + "'");
         }
       }},
      {"mollifier.family",
       [&](const std::string& v) {
         if (v == "polynomial_bump") {
           c.mollifier.family = KernelFamily::polynomial_bump;
         } else if (v == "truncated_gaussian") {
           c.mollifier.family = KernelFamily::truncated_gaussian;
         } else {
           throw ConfigError("unknown kernel family '" + v + "'");
         }
       }},
      {"mollifier.resolution", [&](const std::string& v) { c.mollifier.resolution = parse_number<double>(v); }},
      {"sensitivity.resamples", [&](const std::string& v) { c.resamples = parse_number<int>(v); }},
      {"sensitivity.edge_samples", [&](const std::string& v) { c.edge_samples = parse_number<int>(v); }},
  };
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto it = keys.find(section + "." + key);
      if (it == keys.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      it->second(value.get_value<std::string>());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

// ---------------------------------------------------------------------------
// Records

double SampleRecord::find(const std::string& name, double param) const {
  for (const auto& m : metrics) {
    if (m.name == name && m.param == param) return m.value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

bool RunRecord::passed() const {
  for (const auto& c : checks) {
    if (c.hard && !c.passed) return false;
  }
  return true;
}

std::vector<double> RunRecord::column(const std::string& name, double param) const {
  std::vector<double> out;
  for (const auto& s : samples) {
    if (!s.ok) continue;
    const double v = s.find(name, param);
    if (!std::isnan(v)) out.push_back(v);
  }
  return out;
}

namespace {

nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["samples"] = c.samples;
  j["workers"] = c.workers;
  j["output"] = c.output_dir;
  j["strict"] = c.strict;
  j["environment"] = {{"dim", c.env.dim},
                      {"scale", c.env.scale},
                      {"open_probability", c.env.open_probability},
                      {"ellipticity", c.env.ellipticity},
                      {"law", to_string(c.env.law)},
                      {"allow_subcritical", c.env.allow_subcritical}};
  j["analysis"] = {{"radii", c.radii},
                   {"direction", std::vector<double>(c.direction.begin(), c.direction.begin() + c.env.dim)},
                   {"q", c.q_list},
                   {"tolerance", c.tolerance},
                   {"moment_exponent", c.moment_exponent},
                   {"pointwise_points", c.pointwise_points}};
  j["partition"] = {{"min_resolution", c.partition.goodness.min_resolution},
                    {"fraction", c.partition.goodness.fraction},
                    {"neighbor_factor", c.partition.neighbor_factor},
                    {"family", c.partition.goodness.family == SubcubeFamily::sparse ? "sparse" : "exhaustive"}};
  j["mollifier"] = {
      {"family", c.mollifier.family == KernelFamily::polynomial_bump ? "polynomial_bump" : "truncated_gaussian"},
      {"resolution", c.mollifier.resolution}};
  j["sensitivity"] = {{"resamples", c.resamples}, {"edge_samples", c.edge_samples}};
  return j;
}

}  // namespace

std::string to_json(const RunRecord& r) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["code_version"] = r.code_version;
  j["config"] = config_json(r.config);
  j["failures"] = r.failures;
  j["wall_seconds"] = r.wall_seconds;
  j["passed"] = r.passed();
  j["warnings"] = r.warnings;
  j["fits"] = r.fits;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : r.checks) {
    j["checks"].push_back({{"name", c.name},
                           {"passed", c.passed},
                           {"hard", c.hard},
                           {"measured", c.measured},
                           {"bound", c.bound},
                           {"detail", c.detail}});
  }
  j["samples"] = nlohmann::json::array();
  for (const auto& s : r.samples) {
    nlohmann::json js{{"index", s.index}, {"seed", s.seed}, {"ok", s.ok}};
    if (!s.ok) js["error"] = s.error;
    js["metrics"] = nlohmann::json::array();
    for (const auto& m : s.metrics) js["metrics"].push_back({{"name", m.name}, {"param", m.param}, {"value", m.value}});
    j["samples"].push_back(std::move(js));
  }
  return j.dump(2);
}

void write_curves_csv(std::ostream& out, const RunRecord& r) {
  out << "seed,index,param,metric,value\n";
  out.precision(17);
  for (const auto& s : r.samples) {
    for (const auto& m : s.metrics) out << s.seed << ',' << s.index << ',' << m.param << ',' << m.name << ',' << m.value << '\n';
  }
}

void write_run(const RunRecord& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream json(dir / "record.json");
  json << to_json(r) << '\n';
  std::ofstream csv(dir / "curves.csv");
  write_curves_csv(csv, r);
  if (!json || !csv) throw DataError("cannot write run output under " + dir.string());
}

SampleRecord run_sample(const RunConfig& cfg, int index,
                        const std::function<void(const Environment&, SampleRecord&)>& body) {
  SampleRecord rec;
  rec.index = index;
  rec.seed = cfg.sample_seed_of(index);
  try {
    const Environment env = Environment::generate(cfg.sample_spec(index));
    body(env, rec);
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.metrics.clear();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

using Clock = std::chrono::steady_clock;

RunRecord start_record(const RunConfig& cfg) {
  cfg.validate();
  RunRecord r;
  r.code_version = code_version();
  r.config = cfg;
  return r;
}

void collect(RunRecord& r, std::vector<SampleRecord> samples, Clock::time_point t0) {
  r.samples = std::move(samples);
  for (const auto& s : r.samples) r.failures += s.ok ? 0 : 1;
  if (r.failures > 0) r.warnings.push_back(std::to_string(r.failures) + " samples failed");
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<SampleRecord> run_all(const RunConfig& cfg, const std::function<void(const Environment&, SampleRecord&)>& body) {
  return parallel_map<SampleRecord>(cfg.samples, cfg.workers, [&](int i) { return run_sample(cfg, i, body); });
}

std::string key(const std::string& name, double param) {
  std::ostringstream os;
  os << name << "@" << param;
  return os.str();
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void store_fit(RunRecord& r, const std::string& name, const LinearFit& f) {
  r.fits[name + ".slope"] = f.slope;
  r.fits[name + ".intercept"] = f.intercept;
  r.fits[name + ".r2"] = f.r2;
  r.fits[name + ".slope_stderr"] = f.slope_stderr;
}

// Vertex of g closest to x in l1, lexicographically smallest among ties.
std::int32_t nearest_vertex(const ClusterGraph& g, const Point& x) {
  const std::int32_t direct = g.index_of(x);
  if (direct >= 0) return direct;
  std::int32_t best = -1;
  int best_d = std::numeric_limits<int>::max();
  for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
    const int dist = l1_norm(sub(g.point(i), x), g.dim());
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  if (best < 0) throw EmptyClusterError("empty cluster");
  return best;
}

double truncation_for(const Environment& env, double R) { return std::min(6.0 * R, env.half() - 2.0); }

std::uint64_t aux_seed_for(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1))); }

}  // namespace

// ---------------------------------------------------------------------------
// Corrector scaling

RunRecord run_corrector_scaling(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  RunRecord r = start_record(cfg);
  const SolverOptions so{cfg.tolerance, 0};
  auto body = [&](const Environment& env, SampleRecord& rec) {
    const CorrectorResult c = corrector(env, env.box(), cfg.direction, so);
    rec.add("iterations", 0, c.report.iterations);
    const std::int32_t o = nearest_vertex(c.graph, Point{});
    const double chi0 = c.chi[static_cast<std::size_t>(o)];
    for (double R : cfg.radii) {
      const auto v = restrict_to_ball(c.graph, c.chi, Point{}, R);
      if (v.empty()) throw EmptyClusterError("cluster misses the ball of radius " + std::to_string(R));
      const double o_sc = osc(v);
      rec.add("osc_sq", R, o_sc * o_sc);
      for (double q : cfg.q_list) rec.add(key("lq", q), R, lq_centered(v, q));
      std::vector<std::int32_t> ring;
      for (std::int32_t i = 0; i < c.graph.num_vertices(); ++i) {
        if (linf_norm(c.graph.point(i), env.dim()) == static_cast<int>(R)) ring.push_back(i);
      }
      if (!ring.empty() && cfg.pointwise_points > 0) {
        Rng rng(aux_seed_for(rec.seed, static_cast<std::uint64_t>(R)));
        double acc = 0.0;
        for (int k = 0; k < cfg.pointwise_points; ++k) {
          const std::int32_t x = ring[static_cast<std::size_t>(rng.below(ring.size()))];
          const double diff = c.chi[static_cast<std::size_t>(x)] - chi0;
          acc += diff * diff;
        }
        rec.add("pointwise_sq", R, acc / cfg.pointwise_points);
      }
    }
  };
  collect(r, run_all(cfg, body), t0);

  std::vector<std::string> stats{"osc_sq", "pointwise_sq"};
  for (double q : cfg.q_list) stats.push_back(key("lq", q));
  // Squared statistics at or below this level are solver noise.
  const auto noise = [&](double R) { return std::pow(1e3 * cfg.tolerance * R, 2); };
  bool degenerate = true;
  for (const auto& name : stats) {
    const bool squared = name.rfind("lq", 0) == 0;
    std::vector<double> lx;
    std::vector<double> ly;
    for (double R : cfg.radii) {
      auto col = r.column(name, R);
      if (col.empty()) continue;
      if (squared) {
        for (double& v : col) v *= v;
      }
      const double m = mean(col);
      r.fits[key(name + (squared ? ".sq_mean" : ".mean"), R)] = m;
      lx.push_back(std::log(R));
      ly.push_back(m);
      if (m > noise(R)) degenerate = false;
    }
    if (lx.size() < 2) continue;
    if (cfg.env.dim == 2) {
      bool flat = true;
      for (std::size_t k = 0; k < ly.size(); ++k) flat = flat && ly[k] <= noise(std::exp(lx[k]));
      if (!flat) store_fit(r, name, fit_line(lx, ly));
    } else {
      const double mid = ly[(ly.size() - 1) / 2];
      r.fits[name + ".plateau_ratio"] = mid > 0.0 ? ly.back() / mid : std::numeric_limits<double>::quiet_NaN();
    }
  }
  r.fits["degenerate"] = degenerate ? 1.0 : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Spatial averages of the coarsened corrector gradient

namespace {

// |Phi_R * grad [chi_p]_P^eta (0)| components per radius, concatenated.
std::vector<double> coarse_gradient_averages(const Environment& env, const RunConfig& cfg, const SolverOptions& so) {
  const Partition part = build_partition(env, cfg.partition);
  const CorrectorResult c = corrector(env, env.box(), cfg.direction, so);
  const CoarseFunction f = coarsen(part, c.graph, c.chi);
  const Mollifier eta(cfg.mollifier);
  std::vector<double> out;
  for (double R : cfg.radii) {
    const auto v = smoothed_coarse_gradient(part, f, eta, R, Point{}, truncation_for(env, R));
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace

RunRecord run_spatial_average_decay(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  RunRecord r = start_record(cfg);
  const SolverOptions so{cfg.tolerance, 0};
  const int d = cfg.env.dim;
  auto body = [&](const Environment& env, SampleRecord& rec) {
    const auto v = coarse_gradient_averages(env, cfg, so);
    for (std::size_t k = 0; k < cfg.radii.size(); ++k) {
      double n2 = 0.0;
      for (int i = 0; i < d; ++i) n2 += v[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] * v[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
      rec.add("spatial_average", cfg.radii[k], std::sqrt(n2));
    }
  };
  collect(r, run_all(cfg, body), t0);

  std::vector<double> lx;
  std::vector<double> ly;
  bool degenerate = true;
  for (double R : cfg.radii) {
    const auto col = r.column("spatial_average", R);
    if (col.empty()) continue;
    double s = 0.0;
    for (double v : col) s += v * v;
    const double rms = std::sqrt(s / static_cast<double>(col.size()));
    r.fits[key("spatial_average.rms", R)] = rms;
    if (rms > 1e3 * cfg.tolerance) {
      degenerate = false;
      lx.push_back(std::log(R));
      ly.push_back(std::log(rms));
    }
    if (col.size() >= 30) {
      const MomentEstimate m = estimate_Os(col, cfg.moment_exponent);
      r.fits[key("spatial_average.theta", R)] = m.theta;
    }
    if (col.size() >= 100) {
      try {
        r.fits[key("spatial_average.tail_exponent", R)] = tail_exponent(col);
      } catch (const EstimationError& e) {
        r.warnings.push_back(std::string("tail exponent at R=") + std::to_string(R) + ": " + e.what());
      }
    }
  }
  if (!degenerate && lx.size() >= 2) store_fit(r, "spatial_average.rms_loglog", fit_line(lx, ly));
  r.fits["degenerate"] = degenerate ? 1.0 : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Partition statistics

RunRecord run_partition_stats(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  RunRecord r = start_record(cfg);
  const int M = cfg.env.scale;
  auto body = [&](const Environment& env, SampleRecord& rec) {
    const GoodnessMap gm(env, cfg.partition.goodness);
    for (int n = 1; n <= M; ++n) {
      const auto cubes = gm.cubes(n);
      std::int64_t good = 0;
      for (const auto& c : cubes) good += gm.good(c) ? 1 : 0;
      rec.add("good_fraction", n, static_cast<double>(good) / static_cast<double>(cubes.size()));
      const TriadicCube c0 = TriadicCube::cube_of(env.dim(), Point{}, n);
      double density = 0.0;
      try {
        density = static_cast<double>(maximal_cluster(env, c0.box()).num_vertices()) / static_cast<double>(c0.box().volume());
      } catch (const EmptyClusterError&) {
      }
      rec.add("cluster_density", n, density);
    }
    try {
      const Partition p = build_partition(env, gm, cfg.partition);
      const PartitionCheck check = check_partition(p, gm);
      rec.add("unresolvable", 0, 0);
      rec.add("violations", 0, static_cast<double>(check.violations()));
      rec.add("cell_size", 0, static_cast<double>(p.size_at(Point{})));
      rec.add("num_cells", 0, static_cast<double>(p.num_cells()));
    } catch (const UnresolvableRegionError&) {
      rec.add("unresolvable", 0, 1);
    } catch (const ConstructionError&) {
      rec.add("unresolvable", 0, 0);
      rec.add("violations", 0, 1);
    }
  };
  collect(r, run_all(cfg, body), t0);

  for (int n = 1; n <= M; ++n) {
    const auto g = r.column("good_fraction", n);
    const auto c = r.column("cluster_density", n);
    r.fits[key("good_fraction.mean", n)] = mean(g);
    r.fits[key("cluster_density.mean", n)] = mean(c);
    r.fits[key("cluster_density.min", n)] = c.empty() ? 0.0 : *std::min_element(c.begin(), c.end());
  }
  const auto unresolved = r.column("unresolvable");
  const auto violations = r.column("violations");
  double nu = 0.0;
  for (double v : unresolved) nu += v;
  double nv = 0.0;
  for (double v : violations) nv += v;
  r.fits["unresolvable"] = nu;
  r.fits["violations"] = nv;
  const auto sizes = r.column("cell_size");
  std::vector<double> lx;
  std::vector<double> ly;
  for (int n = 0; n <= M; ++n) {
    const double t = static_cast<double>(pow3(n));
    double above = 0.0;
    for (double s : sizes) above += s > t ? 1.0 : 0.0;
    const double ex = sizes.empty() ? 0.0 : above / static_cast<double>(sizes.size());
    r.fits[key("exceedance", t)] = ex;
    if (ex > 0.0) {
      lx.push_back(t);
      ly.push_back(std::log(ex));
    }
  }
  if (lx.size() >= 2) store_fit(r, "exceedance.exp_fit", fit_line(lx, ly));
  r.checks.push_back({"partition invariants", nv == 0.0, true, nv, 0.0, "violations over resolved partitions"});
  return r;
}

// ---------------------------------------------------------------------------
// Resampling sensitivity

RunRecord run_sensitivity_scaling(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  RunRecord r = start_record(cfg);
  const SolverOptions so{cfg.tolerance, 0};
  const int d = cfg.env.dim;
  auto body = [&](const Environment& env, SampleRecord& rec) {
    // Importance density over in-box bonds: equal mixture over the ladder of
    // (R + |b|_inf)^{-(d+1)}, b the bond base.
    const BoxIndexer& idx = env.indexer();
    std::vector<EdgeRef> bonds;
    std::vector<double> weight;
    std::vector<double> mix(env.num_vertices() * d, 0.0);
    for (double R : cfg.radii) {
      double z = 0.0;
      std::vector<double> w;
      for (std::int64_t v = 0; v < idx.size(); ++v) {
        for (int a = 0; a < d; ++a) {
          if (!env.has_bond(v, a)) continue;
          const double val = std::pow(R + linf_norm(idx.point(v), d), -(d + 1.0));
          w.push_back(val);
          z += val;
        }
      }
      std::size_t k = 0;
      for (std::int64_t v = 0; v < idx.size(); ++v) {
        for (int a = 0; a < d; ++a) {
          if (!env.has_bond(v, a)) continue;
          mix[static_cast<std::size_t>(v * d + a)] += w[k++] / z / static_cast<double>(cfg.radii.size());
        }
      }
    }
    std::vector<double> cdf;
    std::vector<std::int64_t> slots;
    double acc = 0.0;
    for (std::size_t s = 0; s < mix.size(); ++s) {
      if (mix[s] <= 0.0) continue;
      acc += mix[s];
      cdf.push_back(acc);
      slots.push_back(static_cast<std::int64_t>(s));
    }
    Rng rng(aux_seed_for(rec.seed, 1));
    std::vector<EdgeRef> edges;
    std::vector<double> prob;
    for (int j = 0; j < cfg.edge_samples; ++j) {
      const double u = rng.uniform() * acc;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
      edges.push_back(env.bond_at(slots[k]));
      prob.push_back(mix[static_cast<std::size_t>(slots[k])] / acc);
    }
    const EnvVectorFunctional X = [&](const Environment& e) { return coarse_gradient_averages(e, cfg, so); };
    const auto res = resampling_sensitivity(env, X, edges, cfg.resamples, aux_seed_for(rec.seed, 2), cfg.strict);
    for (std::size_t k = 0; k < cfg.radii.size(); ++k) {
      double total = 0.0;
      for (int i = 0; i < d; ++i) {
        const auto& comp = res[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < edges.size(); ++j) total += comp.per_edge[j] / prob[j];
      }
      rec.add("sensitivity", cfg.radii[k], total / static_cast<double>(edges.size()));
    }
  };
  if (cfg.resamples < 8) {
    if (cfg.strict) throw EstimationError("fewer than 8 resamples per edge");
    r.warnings.push_back("fewer than 8 resamples per edge; conditional means are imprecise");
  }
  collect(r, run_all(cfg, body), t0);
  std::vector<double> lx;
  std::vector<double> ly;
  for (double R : cfg.radii) {
    const auto col = r.column("sensitivity", R);
    const double m = mean(col);
    r.fits[key("sensitivity.mean", R)] = m;
    if (m > 0.0) {
      lx.push_back(std::log(R));
      ly.push_back(std::log(m));
    }
  }
  if (lx.size() >= 2) store_fit(r, "sensitivity.loglog", fit_line(lx, ly));
  return r;
}

// ---------------------------------------------------------------------------
// Validation suite

namespace {

// Independent random field on the edges of g, standard normal entries.
VectorField random_field(const ClusterGraph& g, Rng& rng) {
  VectorField xi;
  xi.values.resize(static_cast<std::size_t>(g.num_edges()));
  for (auto& v : xi.values) v = rng.normal();
  return xi;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Random band-limited field on a grid centred at 0 covering 24R.
GridField band_limited(int dim, double R, Rng& rng) {
  struct Mode {
    std::array<double, kMaxDim> k{};
    double phase = 0.0;
    double amp = 0.0;
  };
  std::vector<Mode> modes(16);
  for (auto& m : modes) {
    const double wavelength = std::exp(rng.uniform(std::log(8.0), std::log(64.0)));
    double n2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      m.k[i] = rng.normal();
      n2 += m.k[i] * m.k[i];
    }
    const double scale = 2.0 * std::numbers::pi / wavelength / std::sqrt(n2);
    for (int i = 0; i < dim; ++i) m.k[i] *= scale;
    m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    m.amp = rng.normal();
  }
  const GridSpec g = GridSpec::centered(dim, {0.0, 0.0, 0.0}, 24.0 * R, 1.0);
  GridField u(g, 1);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const auto y = g.position(i);
    double s = 0.0;
    for (const auto& m : modes) {
      double arg = m.phase;
      for (int a = 0; a < dim; ++a) arg += m.k[a] * y[a];
      s += m.amp * std::cos(arg);
    }
    u.at(i) = s;
  }
  return u;
}

void add_check(RunRecord& r, std::string name, bool hard, std::span<const double> values, double bound, bool upper,
               std::string detail) {
  CheckResult c;
  c.name = std::move(name);
  c.hard = hard;
  c.bound = bound;
  c.detail = std::move(detail);
  c.measured = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  bool finite = true;
  for (double v : values) finite = finite && std::isfinite(v);
  c.passed = finite && (!upper || c.measured <= bound);
  r.checks.push_back(std::move(c));
}

}  // namespace

RunRecord run_validation_suite(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  RunRecord r = start_record(cfg);
  const SolverOptions so{cfg.tolerance, 0};
  const int d = cfg.env.dim;
  auto body = [&](const Environment& env, SampleRecord& rec) {
    Rng rng(aux_seed_for(rec.seed, 3));
    const GoodnessMap gm(env, cfg.partition.goodness);

    // Partition invariants, coarse constancy and coarsening constants.
    std::optional<Partition> part;
    try {
      part = build_partition(env, gm, cfg.partition);
      rec.add("partition_violations", 0, static_cast<double>(check_partition(*part, gm).violations()));
    } catch (const UnresolvableRegionError&) {
      rec.add("unresolvable", 0, 1);
    }

    const ClusterGraph g = maximal_cluster(env, env.box());
    const double lambda = env.lambda_floor();

    // Summation by parts against a random compactly supported u.
    {
      std::vector<double> u(static_cast<std::size_t>(g.num_vertices()));
      std::vector<double> v(u.size());
      for (std::int32_t i = 0; i < g.num_vertices(); ++i) {
        const bool inside = linf_norm(g.point(i), d) < env.half() - 1;
        u[static_cast<std::size_t>(i)] = inside ? rng.normal() : 0.0;
        v[static_cast<std::size_t>(i)] = rng.normal();
      }
      const double lhs = inner(g, gradient(g, u), gradient(g, v), true);
      const auto Lv = apply_operator(g, v);
      double rhs = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) rhs += u[i] * Lv[i];
      rec.add("summation_by_parts", 0, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }

    // Green symmetry and the gradient bound on open edges.
    if (g.num_edges() >= 2) {
      const auto e1 = g.edge_ref(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(g.num_edges()))));
      const auto e2 = g.edge_ref(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(g.num_edges()))));
      const VectorField G1 = greens_gradient(g, e1, so);
      const VectorField G2 = greens_gradient(g, e2, so);
      const double a = G1.values[static_cast<std::size_t>(g.edge_index(e2))];
      const double b = G2.values[static_cast<std::size_t>(g.edge_index(e1))];
      rec.add("green_symmetry", 0, std::abs(a - b) / std::max(1.0, std::abs(a)));
      rec.add("green_sup_times_lambda", 0, std::max(max_abs(G1.values), max_abs(G2.values)) * lambda);
    }

    // Representation formula on a small cluster about the origin.
    {
      const ClusterGraph s = maximal_cluster(env, Box::ball(d, Point{}, d == 2 ? 4 : 2));
      if (s.num_edges() >= 1) {
        const VectorField xi = random_field(s, rng);
        const auto [w, report] = solve_divergence_rhs(s, xi, so);
        const VectorField gw = gradient(s, w);
        std::vector<double> sum(static_cast<std::size_t>(s.num_edges()), 0.0);
        for (std::int32_t k = 0; k < s.num_edges(); ++k) {
          const VectorField Gk = greens_gradient(s, s.edge_ref(k), so);
          for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += xi.values[static_cast<std::size_t>(k)] * Gk.values[j];
        }
        double err = 0.0;
        for (std::size_t j = 0; j < sum.size(); ++j) err = std::max(err, std::abs(gw.values[j] - sum[j]));
        rec.add("representation_error", 0, err);
      }
    }

    // Caccioppoli and Meyers ratios for w solving -div a grad w = -div xi.
    {
      const VectorField xi = random_field(g, rng);
      const auto [w, report] = solve_divergence_rhs(g, xi, so);
      const int outer = env.half() - 1;
      const int inner_r = outer / 2;
      rec.add("caccioppoli", 0,
              caccioppoli_ratio(g, w, xi, Box::ball(d, Point{}, outer), Box::ball(d, Point{}, inner_r),
                                static_cast<double>(outer - inner_r)));
      const TriadicCube cube{d, env.spec().scale - 1, Point{}};
      const std::vector<double> eps{0.1};
      rec.add("meyers", 0, meyers_ratio(g, w, xi, cube, eps).front());
    }

    // Corrector-based diagnostics on the partition.
    if (part) {
      const CorrectorResult c = corrector(env, env.box(), cfg.direction, so);
      const TriadicCube region{d, env.spec().scale - 1, Point{}};
      rec.add("coarsening_ratio", 0, coarsening_ratio(env, *part, c.graph, c.chi, 2.0, region));
      rec.add("gradient_coarsening_ratio", 0, gradient_coarsening_ratio(env, *part, c.graph, c.chi, 2.0, region));
      try {
        const CoarseFunction f = coarsen(*part, c.graph, c.chi);
        const BoxIndexer& idx = env.indexer();
        bool constant = true;
        for (std::int64_t v = 0; v < idx.size(); ++v) {
          const auto& cell = part->cell_of(idx.point(v));
          const double rep = f.values[static_cast<std::size_t>(idx.index(cell.center))];
          constant = constant && f.values[static_cast<std::size_t>(v)] == rep;
        }
        rec.add("coarse_constancy", 0, constant ? 0.0 : 1.0);
        // Coarse gradient across the bond from (1, 0) to (2, 0), which crosses
        // a scale-1 cube face, and across its translate by 3^(M-2) e_1.
        Point x0{};
        x0[0] = 1;
        Point x1 = x0;
        x1[0] += static_cast<int>(pow3(env.spec().scale - 2));
        const Point e0 = unit(0);
        const auto at = [&](const Point& x) { return f.values[static_cast<std::size_t>(idx.index(x))]; };
        rec.add("coarse_gradient_origin", 0, std::abs(at(x0) - at(add(x0, e0))));
        rec.add("coarse_gradient_shifted", 0, std::abs(at(x1) - at(add(x1, e0))));
      } catch (const DataError&) {
        rec.add("missing_representative", 0, 1);
      }
      const TriadicCube top{d, env.spec().scale, Point{}};
      const std::vector<double> ladder{2, 4, 8, 16};
      rec.add("regularity_scale", 0, regularity_scale(env, top, 2.0, ladder, so));
    }

    // Partition stability under resampling the bond at the origin.
    {
      const EdgeRef e{Point{}, 0};
      const auto st = partition_resample_stability(env, e, aux_seed_for(rec.seed, 4), 4.0, cfg.partition);
      rec.add("resample_far_mismatches", 0, static_cast<double>(st.far_mismatches));
      rec.add("resample_size_ratio", 0, st.max_ratio_near);
    }
  };
  collect(r, run_all(cfg, body), t0);

  // Multiscale Poincare ratios, independent of the environments.
  {
    const int functions = std::min(cfg.samples, 4);
    std::vector<double> spread;
    for (int f = 0; f < functions; ++f) {
      Rng rng(aux_seed_for(cfg.seed, 100 + static_cast<std::uint64_t>(f)));
      double lo = std::numeric_limits<double>::infinity();
      double hi = 0.0;
      for (double R : {8.0, 16.0}) {
        const GridField u = band_limited(2, R, rng);
        const double ratio = multiscale_lhs(u, R, 2.0) / multiscale_rhs(u, R, 2.0);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
      spread.push_back(hi / lo);
    }
    add_check(r, "multiscale Poincare ratio spread", false, spread, 2.0, true, "max over R / min over R per function");
  }

  add_check(r, "partition invariants", true, r.column("partition_violations"), 0.0, true, "violations per partition");
  add_check(r, "summation by parts", true, r.column("summation_by_parts"), 1e-9, true, "relative defect");
  add_check(r, "Green symmetry", true, r.column("green_symmetry"), 1e-8, true, "relative asymmetry");
  add_check(r, "Green gradient bound", true, r.column("green_sup_times_lambda"), 1.0 + 1e-6, true,
            "sup |grad G^e| times lambda");
  add_check(r, "representation formula", true, r.column("representation_error"), 1e-6, true, "max edge error");
  add_check(r, "coarse constancy", true, r.column("coarse_constancy"), 0.0, true, "cells with two values");
  add_check(r, "Caccioppoli ratio", false, r.column("caccioppoli"), 0.0, false, "largest ratio");
  add_check(r, "Meyers ratio", false, r.column("meyers"), 0.0, false, "largest ratio, eps = 0.1");
  add_check(r, "coarsening ratio", false, r.column("coarsening_ratio"), 0.0, false, "largest ratio, s = 2");
  add_check(r, "coarse gradient ratio", false, r.column("gradient_coarsening_ratio"), 0.0, false, "largest ratio, s = 2");
  add_check(r, "resample far-field equality", false, r.column("resample_far_mismatches"), 0.0, true,
            "cells beyond 4 size(cell of the bond) that changed");

  const auto g0 = r.column("coarse_gradient_origin");
  const auto g1 = r.column("coarse_gradient_shifted");
  if (!g0.empty() && !g1.empty()) {
    double m0 = 0.0;
    double m1 = 0.0;
    for (double v : g0) m0 += v * v;
    for (double v : g1) m1 += v * v;
    m0 /= static_cast<double>(g0.size());
    m1 /= static_cast<double>(g1.size());
    r.fits["coarse_gradient.second_moment_origin"] = m0;
    r.fits["coarse_gradient.second_moment_shifted"] = m1;
    r.fits["coarse_gradient.moment_ratio"] = m1 > 0.0 ? m0 / m1 : (m0 == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    if (g0.size() >= 30) {
      const MomentEstimate est = estimate_Os(g0, cfg.moment_exponent);
      r.fits["coarse_gradient.theta"] = est.theta;
    }
  }
  const auto unresolved = r.column("unresolvable");
  r.fits["unresolvable"] = static_cast<double>(unresolved.size());
  if (r.failures > 0) {
    r.checks.push_back({"sample failures", false, true, static_cast<double>(r.failures), 0.0, "samples that threw"});
  }
  return r;
}

RunRecord run_experiment(const RunConfig& cfg) {
  if (cfg.experiment == "scaling") return run_corrector_scaling(cfg);
  if (cfg.experiment == "decay") return run_spatial_average_decay(cfg);
  if (cfg.experiment == "stats") return run_partition_stats(cfg);
  if (cfg.experiment == "sensitivity") return run_sensitivity_scaling(cfg);
  if (cfg.experiment == "validate") return run_validation_suite(cfg);
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace perco
