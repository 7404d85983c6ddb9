#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "perco/error.hpp"
#include "perco/experiments.hpp"

using namespace perco;

namespace {

RunConfig small(const std::string& experiment, int samples) {
  RunConfig c;
  c.experiment = experiment;
  c.seed = 7;
  c.samples = samples;
  c.env.dim = 2;
  c.env.scale = 3;
  c.env.open_probability = 0.9;
  c.radii = {2, 4, 8};
  c.partition.goodness.min_resolution = 9;
  return c;
}

void expect_same_samples(const RunRecord& a, const RunRecord& b) {
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].seed, b.samples[i].seed);
    ASSERT_EQ(a.samples[i].metrics.size(), b.samples[i].metrics.size());
    for (std::size_t k = 0; k < a.samples[i].metrics.size(); ++k) {
      EXPECT_EQ(a.samples[i].metrics[k].name, b.samples[i].metrics[k].name);
      EXPECT_EQ(a.samples[i].metrics[k].value, b.samples[i].metrics[k].value);
    }
  }
  EXPECT_EQ(a.fits, b.fits);
}

}  // namespace

TEST(RunConfig, ParsesSections) {
  std::istringstream in(R"([run]
experiment = decay
seed = 12
samples = 5
workers = 2
strict = true

[environment]
dim = 3
scale = 3
open_probability = 0.6
ellipticity = 0.25
law = constant_one

[analysis]
radii = 2, 4
direction = 0, 1, 0
q = 2, 4

[partition]
min_resolution = 9
family = exhaustive

[sensitivity]
resamples = 8
)");
  const RunConfig c = RunConfig::parse(in);
  EXPECT_EQ(c.experiment, "decay");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.samples, 5);
  EXPECT_EQ(c.workers, 2);
  EXPECT_TRUE(c.strict);
  EXPECT_EQ(c.env.dim, 3);
  EXPECT_EQ(c.env.ellipticity, 0.25);
  EXPECT_EQ(c.env.law, ConductanceLaw::constant_one);
  EXPECT_EQ(c.radii, (std::vector<double>{2, 4}));
  EXPECT_EQ(c.direction[1], 1.0);
  EXPECT_EQ(c.q_list, (std::vector<double>{2, 4}));
  EXPECT_EQ(c.partition.goodness.min_resolution, 9);
  EXPECT_EQ(c.partition.goodness.family, SubcubeFamily::exhaustive);
  EXPECT_EQ(c.resamples, 8);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("[run]\nseeds = 3\n");
  EXPECT_THROW(RunConfig::parse(unknown), ConfigError);
  std::istringstream bad("[environment]\ndim = two\n");
  EXPECT_THROW(RunConfig::parse(bad), ConfigError);
  RunConfig c = small("scaling", 1);
  c.radii = {20};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small("scaling", 0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small("nonsense", 1);
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(RunConfig, SampleSeedsAreDistinct) {
  const RunConfig c = small("scaling", 4);
  EXPECT_NE(c.sample_seed_of(0), c.sample_seed_of(1));
  EXPECT_EQ(c.sample_spec(2).seed, c.sample_seed_of(2));
}

TEST(Records, ReproducibleAcrossWorkerCounts) {
  RunConfig c = small("scaling", 4);
  const RunRecord one = run_experiment(c);
  c.workers = 3;
  const RunRecord three = run_experiment(c);
  expect_same_samples(one, three);
  EXPECT_EQ(one.failures, 0);
}

TEST(Records, CrashesAreIsolated) {
  const RunConfig c = small("scaling", 5);
  const auto recs = parallel_map<SampleRecord>(5, 2, [&](int i) {
    return run_sample(c, i, [i](const Environment&, SampleRecord& r) {
      r.add("x", 0.0, i);
      if (i == 2) throw SolverError("forced");
    });
  });
  ASSERT_EQ(recs.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].ok, i != 2);
    EXPECT_EQ(recs[static_cast<std::size_t>(i)].index, i);
  }
  EXPECT_EQ(recs[2].error, "forced");
  EXPECT_TRUE(recs[2].metrics.empty());
  EXPECT_EQ(recs[4].find("x"), 4.0);
  EXPECT_TRUE(std::isnan(recs[4].find("y")));
}

TEST(Records, JsonAndCsvOutput) {
  const RunRecord r = run_experiment(small("scaling", 2));
  const auto j = nlohmann::json::parse(to_json(r));
  for (const char* k : {"schema_version", "code_version", "config", "samples", "fits", "checks", "failures"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["schema_version"], kRecordSchemaVersion);
  EXPECT_EQ(j["samples"].size(), 2u);
  const auto dir = std::filesystem::temp_directory_path() / "perco_records_test";
  write_run(r, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "record.json"));
  std::ifstream csv(dir / "curves.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_FALSE(header.empty());
  std::filesystem::remove_all(dir);
}

TEST(Experiments, ConstantEnvironmentScalingIsDegenerate) {
  RunConfig c = small("scaling", 2);
  c.env.open_probability = 1.0;
  c.env.law = ConductanceLaw::constant_one;
  const RunRecord r = run_experiment(c);
  EXPECT_EQ(r.fits.at("degenerate"), 1.0);
  for (double v : r.column("osc_sq", 4)) EXPECT_LT(v, 1e-12);
}

TEST(Experiments, FullyOpenStats) {
  RunConfig c = small("stats", 2);
  c.env.open_probability = 1.0;
  c.env.law = ConductanceLaw::constant_one;
  const RunRecord r = run_experiment(c);
  EXPECT_TRUE(r.passed());
  for (int n = 1; n <= 3; ++n) {
    for (double v : r.column("good_fraction", n)) EXPECT_EQ(v, 1.0);
  }
  for (double v : r.column("cell_size")) EXPECT_EQ(v, 3.0);
  for (double v : r.column("violations")) EXPECT_EQ(v, 0.0);
}

TEST(Experiments, DecayAndSensitivityRun) {
  RunConfig c = small("decay", 3);
  c.radii = {2, 4};
  const RunRecord d = run_experiment(c);
  EXPECT_EQ(d.failures, 0);
  EXPECT_EQ(d.column("spatial_average", 2).size(), 3u);
  c.experiment = "sensitivity";
  c.samples = 1;
  c.resamples = 8;
  c.edge_samples = 4;
  const RunRecord s = run_experiment(c);
  EXPECT_EQ(s.failures, 0);
  for (double v : s.column("sensitivity", 2)) EXPECT_GE(v, 0.0);
}

TEST(ValidationSuite, PassesOnSupercriticalEnvironments) {
  RunConfig c = small("validate", 3);
  c.env.scale = 4;
  const RunRecord r = run_experiment(c);
  for (const auto& chk : r.checks) {
    if (chk.hard) EXPECT_TRUE(chk.passed) << chk.name << ": " << chk.measured;
  }
  EXPECT_TRUE(r.passed());
}

TEST(ValidationSuite, ReportsFailingSamples) {
  // The probes of the suite do not fit in a box of side 3, so every sample throws.
  RunConfig c = small("validate", 2);
  c.env.scale = 1;
  c.partition.goodness.min_resolution = 1;
  const RunRecord r = run_experiment(c);
  EXPECT_EQ(r.failures, 2);
  EXPECT_FALSE(r.passed());
}
