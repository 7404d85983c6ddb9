#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "helpers.hpp"
#include "perco/env.hpp"
#include "perco/error.hpp"
#include "perco/rng.hpp"

using namespace perco;
using perco::testing::make_env;
using perco::testing::spec_of;

TEST(Environment, FullyOpenConstantLaw) {
  const Environment env = Environment::generate(spec_of(2, 2, 1.0, ConductanceLaw::constant_one, 9));
  EXPECT_EQ(env.num_bonds(), 2 * 9 * 8);
  EXPECT_EQ(env.count_open(), env.num_bonds());
  for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
    for (int a = 0; a < 2; ++a) {
      if (env.has_bond(v, a)) EXPECT_EQ(env.conductance(v, a), 1.0f);
    }
  }
}

TEST(Environment, RegenerationIsDeterministic) {
  const auto s = spec_of(2, 3, 0.7, ConductanceLaw::uniform, 42);
  const Environment a = Environment::generate(s);
  const Environment b = Environment::generate(s);
  ASSERT_EQ(a.values().size(), b.values().size());
  EXPECT_EQ(0, std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(float)));
  auto s2 = s;
  s2.seed = 43;
  EXPECT_FALSE(Environment::generate(s2) == a);
}

TEST(Environment, ValueDomainAndOpenFraction) {
  auto s = spec_of(2, 5, 0.7, ConductanceLaw::uniform, 1);
  s.ellipticity = 0.3;
  const Environment env = Environment::generate(s);
  for (std::int64_t v = 0; v < env.num_vertices(); ++v) {
    for (int a = 0; a < 2; ++a) {
      const float c = env.conductance(v, a);
      if (!env.has_bond(v, a)) {
        EXPECT_EQ(c, 0.0f);
      } else {
        EXPECT_TRUE(c == 0.0f || (c >= env.lambda_floor() && c <= 1.0f));
      }
    }
  }
  const double n = static_cast<double>(env.num_bonds());
  const double frac = static_cast<double>(env.count_open()) / n;
  EXPECT_NEAR(frac, 0.7, 5.0 * std::sqrt(0.7 * 0.3 / n));
}

TEST(Environment, RejectsSubcriticalUnlessAllowed) {
  auto s = spec_of(2, 3, 0.5, ConductanceLaw::uniform);
  EXPECT_THROW(Environment::generate(s), ConfigError);
  s.allow_subcritical = true;
  EXPECT_NO_THROW(Environment::generate(s));
  auto t = spec_of(3, 2, 0.24, ConductanceLaw::uniform);
  EXPECT_THROW(Environment::generate(t), ConfigError);
  t.open_probability = 0.25;
  EXPECT_NO_THROW(Environment::generate(t));
}

TEST(Environment, RejectsInvalidSpecs) {
  auto s = spec_of(4, 2);
  EXPECT_THROW(s.validate(), ConfigError);
  s = spec_of(2, 2);
  s.ellipticity = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s.ellipticity = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Environment, FromValuesChecksDomain) {
  const auto s = spec_of(2, 1);
  const Environment base = Environment::constant(s, 1.0f);
  std::vector<float> v(base.values().begin(), base.values().end());
  v[0] = 0.1f;  // below lambda = 0.5
  EXPECT_THROW(Environment::from_values(s, v), DataError);
  v[0] = 1.0f;
  // Bond leaving the box at the top-right corner.
  v[v.size() - 1] = 1.0f;
  EXPECT_THROW(Environment::from_values(s, v), DataError);
}

TEST(Environment, BondsLeavingTheBoxAreAbsent) {
  const Environment env = Environment::constant(spec_of(2, 1), 1.0f);
  EXPECT_TRUE(env.has_bond(EdgeRef{{0, 0, 0}, 0}));
  EXPECT_FALSE(env.has_bond(EdgeRef{{1, 0, 0}, 0}));
  EXPECT_EQ(env.conductance_between({1, 0, 0}, {2, 0, 0}), 0.0f);
  EXPECT_THROW(env.conductance(EdgeRef{{2, 0, 0}, 0}), BoundsError);
}

TEST(Environment, SaveLoadRoundTrip) {
  const Environment env = Environment::generate(spec_of(3, 2, 0.6, ConductanceLaw::uniform, 77));
  std::stringstream buf;
  env.save(buf);
  const std::string bytes = buf.str();
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 8), "PCOENV01");
  std::uint32_t dim = 0;
  std::memcpy(&dim, bytes.data() + 8, 4);
  EXPECT_EQ(dim, 3u);
  const Environment back = Environment::load(buf);
  EXPECT_TRUE(back == env);
  EXPECT_EQ(back.spec(), env.spec());
}

TEST(Environment, LoadRejectsCorruptInput) {
  std::stringstream bad("NOTANENVxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(Environment::load(bad), DataError);
  const Environment env = Environment::generate(spec_of(2, 2, 0.8, ConductanceLaw::uniform, 3));
  std::stringstream buf;
  env.save(buf);
  std::string truncated = buf.str();
  truncated.resize(truncated.size() - 4);
  std::stringstream t(truncated);
  EXPECT_THROW(Environment::load(t), DataError);
}

TEST(Resample, ChangesOnlyTheTargetBond) {
  const auto s = spec_of(2, 3, 1.0, ConductanceLaw::uniform, 5);
  const Environment env = Environment::constant(s, 1.0f);
  const EdgeRef e{{2, -1, 0}, 1};
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Environment r = resample_edge(env, e, k);
    for (std::int64_t slot = 0; slot < static_cast<std::int64_t>(env.values().size()); ++slot) {
      if (slot == env.bond_slot(e)) continue;
      ASSERT_EQ(r.values()[static_cast<std::size_t>(slot)], env.values()[static_cast<std::size_t>(slot)]);
    }
  }
  EXPECT_EQ(env.conductance(e), 1.0f);
  EXPECT_THROW(resample_edge(env, EdgeRef{{13, 0, 0}, 0}, 1), BoundsError);
}

TEST(Resample, SameValueGivesEqualEnvironment) {
  // Constant-one law at p = 1 always redraws 1.
  const Environment env = Environment::generate(spec_of(2, 2, 1.0, ConductanceLaw::constant_one, 2));
  EXPECT_TRUE(resample_edge(env, EdgeRef{{0, 0, 0}, 0}, 99) == env);
}

TEST(Resample, OpenFrequencyMatchesP) {
  const auto s = spec_of(2, 2, 0.7, ConductanceLaw::uniform, 0);
  const Environment env = Environment::generate(s);
  const EdgeRef e{{0, 0, 0}, 1};
  const int n = 10000;
  int open = 0;
  for (int k = 0; k < n; ++k) open += resample_edge(env, e, static_cast<std::uint64_t>(k)).is_open(e) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(open) / n, 0.7, 3.0 * std::sqrt(0.21 / n));
}

TEST(Translate, ZeroShiftRestricts) {
  const Environment env = Environment::generate(spec_of(2, 3, 0.8, ConductanceLaw::uniform, 11));
  const Environment sub = translate(env, Point{}, 2);
  for (std::int64_t v = 0; v < sub.num_vertices(); ++v) {
    const Point x = sub.vertex_point(v);
    for (int a = 0; a < 2; ++a) {
      if (sub.has_bond(v, a)) EXPECT_EQ(sub.conductance(v, a), env.conductance(EdgeRef{x, a}));
    }
  }
}

TEST(Translate, ShiftAndBack) {
  const Environment env = Environment::generate(spec_of(2, 3, 0.8, ConductanceLaw::uniform, 12));
  const Point z{9, -9, 0};
  const Environment moved = translate(env, z, 2);
  for (std::int64_t v = 0; v < moved.num_vertices(); ++v) {
    const Point x = moved.vertex_point(v);
    for (int a = 0; a < 2; ++a) {
      if (moved.has_bond(v, a)) EXPECT_EQ(moved.conductance(v, a), env.conductance(EdgeRef{add(x, z), a}));
    }
  }
  const Environment again = translate(translate(env, Point{}, 2), Point{}, 1);
  EXPECT_TRUE(again == translate(env, Point{}, 1));
  EXPECT_THROW(translate(env, Point{10, 0, 0}, 2), BoundsError);
}

TEST(Translate, ConstantStaysConstant) {
  const Environment env = Environment::constant(spec_of(2, 3), 1.0f);
  const Environment t = translate(env, Point{-9, 9, 0}, 2);
  EXPECT_EQ(t.count_open(), t.num_bonds());
}

TEST(Environment, DisjointBondsUncorrelated) {
  const EdgeRef e1{{0, 0, 0}, 0};
  const EdgeRef e2{{1, 1, 0}, 1};
  const int n = 1000;
  double s1 = 0.0;
  double s2 = 0.0;
  double s12 = 0.0;
  for (int k = 0; k < n; ++k) {
    const Environment env = Environment::generate(spec_of(2, 2, 0.6, ConductanceLaw::uniform, sample_seed(500, k)));
    const double a = env.is_open(e1) ? 1.0 : 0.0;
    const double b = env.is_open(e2) ? 1.0 : 0.0;
    s1 += a;
    s2 += b;
    s12 += a * b;
  }
  const double cov = s12 / n - (s1 / n) * (s2 / n);
  EXPECT_LT(std::abs(cov), 3.0 * 0.24 / std::sqrt(n));
}

TEST(Environment, WithEdgeValidates) {
  const Environment env = Environment::constant(spec_of(2, 2), 1.0f);
  const EdgeRef e{{0, 0, 0}, 0};
  EXPECT_EQ(env.with_edge(e, 0.0f).count_open(), env.num_bonds() - 1);
  EXPECT_THROW(env.with_edge(e, 0.2f), DataError);
}

TEST(Environment, MakeEnvHelperPlacesValues) {
  const auto s = spec_of(2, 2);
  const Environment env = make_env(s, [](const EdgeRef& e) { return e.axis == 0 ? 1.0f : 0.0f; });
  EXPECT_EQ(env.count_open(), 9 * 8);
}
