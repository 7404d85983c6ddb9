#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "perco/env.hpp"
#include "perco/error.hpp"
#include "perco/experiments.hpp"
#include "perco/partition.hpp"
#include "perco/solver.hpp"

namespace fs = std::filesystem;
using namespace perco;

namespace {

struct EnvArgs {
  std::string file;
  EnvironmentSpec spec;
  std::string law = "uniform";

  void attach(CLI::App* app) {
    app->add_option("--env", file, "Environment file written by `perco generate`");
    app->add_option("--dim", spec.dim, "Dimension (2 or 3)");
    app->add_option("--scale", spec.scale, "Box scale M, side 3^M");
    app->add_option("-p,--open-probability", spec.open_probability, "Bond opening probability");
    app->add_option("--lambda", spec.ellipticity, "Ellipticity lower bound");
    app->add_option("--law", law, "Conductance law: uniform or constant_one");
    app->add_flag("--allow-subcritical", spec.allow_subcritical);
  }

  Environment get(std::uint64_t seed) {
    if (!file.empty()) return Environment::load(file);
    spec.law = parse_law(law);
    spec.seed = seed;
    return Environment::generate(spec);
  }
};

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw DataError("cannot write " + (dir / name).string());
  out.precision(17);
  return out;
}

std::array<double, kMaxDim> parse_vector(const std::vector<double>& v) {
  std::array<double, kMaxDim> p{};
  for (std::size_t i = 0; i < v.size() && i < kMaxDim; ++i) p[i] = v[i];
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correctors, Green's functions and good-cube partitions on percolation clusters"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int workers = 1;
  bool strict = false;
  std::optional<int> samples;
  std::string config_file;

  EnvArgs gen_args;
  std::string gen_file = "env.bin";
  auto* gen = app.add_subcommand("generate", "Sample an environment and write it in binary form");
  gen_args.attach(gen);
  gen->add_option("--seed", seed);
  gen->add_option("-o,--output", gen_file, "Output file");

  EnvArgs part_args;
  int min_resolution = 1;
  double neighbor_factor = 1.0;
  auto* part = app.add_subcommand("partition", "Build the good-cube partition of an environment");
  part_args.attach(part);
  part->add_option("--seed", seed);
  part->add_option("--out", out_dir);
  part->add_option("--min-resolution", min_resolution, "Smallest tested sub-cube resolution");
  part->add_option("--neighbor-factor", neighbor_factor);

  EnvArgs solve_args;
  std::vector<double> direction{1.0, 0.0};
  auto* solve = app.add_subcommand("solve", "Solve for the corrector in a direction on the box");
  solve_args.attach(solve);
  solve->add_option("--seed", seed);
  solve->add_option("--out", out_dir);
  solve->add_option("--direction", direction)->expected(1, 3);

  EnvArgs green_args;
  std::vector<int> edge_spec{0, 0, 0};
  auto* green = app.add_subcommand("greens", "Gradient of the Green's function of a bond on the maximal cluster");
  green_args.attach(green);
  green->add_option("--seed", seed);
  green->add_option("--out", out_dir);
  green->add_option("--edge", edge_spec, "Bond as base coordinates followed by the axis")->expected(3, 4);

  std::vector<CLI::App*> runs;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"scaling", "Corrector scaling in the radius"},
           {"decay", "Decay of spatial averages of the coarse corrector gradient"},
           {"stats", "Goodness, coarseness and cluster density statistics"},
           {"sensitivity", "Resampling sensitivity of spatial averages"},
           {"validate", "Invariant and inequality checks"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "key = value file with [sections]")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed);
    sub->add_option("--out", out_dir);
    sub->add_option("--workers", workers);
    sub->add_option("--samples", samples);
    sub->add_flag("--strict", strict);
    runs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const Environment env = gen_args.get(seed);
      env.save(gen_file);
      std::cout << "wrote " << gen_file << ": " << env.count_open() << " open of " << env.num_bonds() << " bonds\n";
      return 0;
    }
    if (part->parsed()) {
      const Environment env = part_args.get(seed);
      PartitionOptions opts;
      opts.goodness.min_resolution = min_resolution;
      opts.neighbor_factor = neighbor_factor;
      const GoodnessMap gm(env, opts.goodness);
      const Partition p = build_partition(env, gm, opts);
      auto cells = open_out(out_dir, "partition.csv");
      p.write_csv(cells);
      std::ofstream lookup(fs::path(out_dir) / "lookup.bin", std::ios::binary);
      p.write_lookup(lookup);
      auto good = open_out(out_dir, "goodness.csv");
      gm.write_csv(good);
      std::cout << p.num_cells() << " cells, cell of 0 has side " << p.size_at(Point{}) << '\n';
      return 0;
    }
    if (solve->parsed()) {
      const Environment env = solve_args.get(seed);
      const CorrectorResult c = corrector(env, env.box(), parse_vector(direction));
      auto csv = open_out(out_dir, "corrector.csv");
      write_csv(csv, c.graph, c.chi);
      auto rep = open_out(out_dir, "report.json");
      rep << to_json(c.report) << '\n';
      std::cout << to_json(c.report) << '\n';
      return 0;
    }
    if (green->parsed()) {
      const Environment env = green_args.get(seed);
      EdgeRef e;
      const int d = env.dim();
      if (static_cast<int>(edge_spec.size()) != d + 1) throw ConfigError("--edge needs d coordinates and an axis");
      for (int i = 0; i < d; ++i) e.base[i] = edge_spec[static_cast<std::size_t>(i)];
      e.axis = edge_spec[static_cast<std::size_t>(d)];
      const ClusterGraph g = maximal_cluster(env, env.box());
      const VectorField G = greens_gradient(g, e);
      auto csv = open_out(out_dir, "green_gradient.csv");
      write_csv(csv, g, G);
      return 0;
    }
    for (auto* sub : runs) {
      if (!sub->parsed()) continue;
      RunConfig cfg = config_file.empty() ? RunConfig{} : RunConfig::load(config_file);
      cfg.experiment = sub->get_name();
      if (sub->count("--seed") > 0) cfg.seed = seed;
      if (sub->count("--out") > 0) cfg.output_dir = out_dir;
      if (sub->count("--workers") > 0) cfg.workers = workers;
      if (samples) cfg.samples = *samples;
      cfg.strict = cfg.strict || strict;
      const RunRecord r = run_experiment(cfg);
      write_run(r, cfg.output_dir);
      for (const auto& [k, v] : r.fits) std::cout << k << " = " << v << '\n';
      for (const auto& c : r.checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.measured << " (" << c.detail << ")\n";
      }
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << r.failures << " failed samples, " << r.wall_seconds << " s\n";
      return r.passed() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
