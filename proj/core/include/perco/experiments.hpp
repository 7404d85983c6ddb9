#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "perco/env.hpp"
#include "perco/geometry.hpp"
#include "perco/partition.hpp"

namespace perco {

inline constexpr int kRecordSchemaVersion = 1;
std::string code_version();

struct RunConfig {
  std::string experiment = "scaling";
  std::uint64_t seed = 0;
  int samples = 1;
  int workers = 1;
  std::string output_dir = "out";
  bool strict = false;

  EnvironmentSpec env;  // seed field unused; per-sample seeds follow sample_seed(seed, i)

  std::vector<double> radii{8, 16, 32, 64};
  std::array<double, kMaxDim> direction{1.0, 0.0, 0.0};
  std::vector<double> q_list{2.0};
  double tolerance = 1e-10;
  double moment_exponent = 1.0;  // s of the O_s calibration
  int pointwise_points = 8;      // sampled x per radius for |chi(x) - chi(0)|

  PartitionOptions partition;
  MollifierSpec mollifier;

  int resamples = 16;     // K, per edge
  int edge_samples = 64;  // edges drawn per environment for the sensitivity sum

  // Invariants: N >= 1, workers >= 1, environment valid, every radius fits in
  // the box. Throws ConfigError.
  void validate() const;
  EnvironmentSpec sample_spec(int index) const;
  std::uint64_t sample_seed_of(int index) const;

  // Flat key = value text with [sections]; unknown keys are a ConfigError.
  // The result is validated when a run starts.
  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::filesystem::path& path);
};

struct Metric {
  std::string name;
  double param = 0.0;  // radius, scale or threshold; 0 when unused
  double value = 0.0;
};

struct SampleRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<Metric> metrics;

  void add(std::string name, double param, double value) { metrics.push_back({std::move(name), param, value}); }
  // Value of the first metric with this name and parameter; NaN when absent.
  double find(const std::string& name, double param = 0.0) const;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  bool hard = true;  // a failed hard check makes the run fail
  double measured = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct RunRecord {
  int schema_version = kRecordSchemaVersion;
  std::string code_version;
  RunConfig config;
  std::vector<SampleRecord> samples;
  std::map<std::string, double> fits;
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;
  std::int64_t failures = 0;
  double wall_seconds = 0.0;

  bool passed() const;
  // Metric values over successful samples, in sample order.
  std::vector<double> column(const std::string& name, double param = 0.0) const;
};

std::string to_json(const RunRecord& r);
// One row per (seed, parameter, metric).
void write_curves_csv(std::ostream& out, const RunRecord& r);
// Writes record.json and curves.csv under the output directory.
void write_run(const RunRecord& r, const std::filesystem::path& dir);

// Runs body(i) for i in [0, n) on `workers` threads. Results are stored by
// index, so reductions over them do not depend on the worker count.
template <class T>
std::vector<T> parallel_map(int n, int workers, const std::function<T(int)>& body) {
  std::vector<T> out(static_cast<std::size_t>(std::max(n, 0)));
  std::atomic<int> next{0};
  auto drain = [&] {
    for (int i = next++; i < n; i = next++) out[static_cast<std::size_t>(i)] = body(i);
  };
  const int threads = std::clamp(workers, 1, std::max(n, 1));
  std::vector<std::jthread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(drain);
  drain();
  return out;
}

// Runs one sample, converting exceptions into a failed record.
SampleRecord run_sample(const RunConfig& cfg, int index, const std::function<void(const Environment&, SampleRecord&)>& body);

// Corrector statistics over B_R about the origin: osc^2, centred L^q norms and
// |chi(x) - chi(0)|^2 at sampled x with |x|_inf = R. Fits: d = 2 slopes in log R
// with standard errors, d >= 3 plateau ratios largest-R over mid-R.
RunRecord run_corrector_scaling(const RunConfig& cfg);
// |Phi_R * grad [chi_p]_P^eta (0)| per R. Fits: RMS log-log slope, theta per R.
RunRecord run_spatial_average_decay(const RunConfig& cfg);
// Goodness frequency per scale, size of the cell of 0, cluster density of the
// cube of 0 per scale and partition invariant violations. Fits: exponential
// fit of the coarseness exceedance curve.
RunRecord run_partition_stats(const RunConfig& cfg);
// Resampling sensitivity of Phi_R * grad [chi_p]_P^eta (0), summed over an
// importance sample of box bonds. Fits: log-log slope of the ensemble mean.
RunRecord run_sensitivity_scaling(const RunConfig& cfg);
// Structural invariants (hard) and inequality constants (reported).
RunRecord run_validation_suite(const RunConfig& cfg);

RunRecord run_experiment(const RunConfig& cfg);

}  // namespace perco
