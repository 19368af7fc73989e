#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "ksm/broadcast_sim.hpp"
#include "ksm/exact_oracles.hpp"
#include "ksm/model_io.hpp"

namespace ksm {
namespace {

SpectralData bsc(double p, std::size_t b = 2) { return analyze(binary_symmetric_channel(p), b); }

SpectralData asym3(std::size_t b = 2) {
  return analyze(validate_channel({{0.85, 0.1, 0.05}, {0.2, 0.7, 0.1}, {0.0, 0.25, 0.75}}), b);
}

TEST(SampleReplica, LevelZeroIsTheRoot) {
  const auto sd = asym3();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto r = sample_replica({sd, 0, RootCondition::fixed(i), 1, 99}, 0);
    EXPECT_EQ(r.root_state, i);
    EXPECT_DOUBLE_EQ(r.s_n, sd.nu[i]);
    std::vector<std::uint64_t> e(3, 0);
    e[i] = 1;
    EXPECT_EQ(r.census, e);
  }
}

TEST(SampleReplica, OneLevelValues) {
  const auto sd = bsc(0.1);
  const SimSpec spec{sd, 1, RootCondition::fixed(0), 200, 5};
  for (std::uint64_t r = 0; r < spec.replicas; ++r) {
    const double s = sample_replica(spec, r).s_n;
    EXPECT_TRUE(std::abs(s - 1.25) < 1e-12 || std::abs(s) < 1e-12 || std::abs(s + 1.25) < 1e-12) << s;
  }
}

TEST(SampleReplica, CensusSumsToLeafCountAndMatchesEstimator) {
  for (std::size_t b : {2u, 3u, 5u, 7u}) {
    const auto sd = asym3(b);
    for (unsigned n : {0u, 1u, 3u}) {
      const SimSpec spec{sd, n, RootCondition::stationary(), 20, 1234 + b};
      for (std::uint64_t r = 0; r < spec.replicas; ++r) {
        const auto res = sample_replica(spec, r);
        std::uint64_t total = 0;
        long double sigma_sum = 0;
        for (std::size_t i = 0; i < 3; ++i) {
          total += res.census[i];
          sigma_sum += res.census[i] * static_cast<long double>(sd.nu[i]);
        }
        EXPECT_EQ(total, *checked_power(b, n));
        const double recomputed = static_cast<double>(sigma_sum / std::pow(b * sd.lambda, n));
        EXPECT_LE(std::abs(recomputed - res.s_n), 1e-9 * std::max(1.0, std::abs(res.s_n)));
        EXPECT_NEAR(res.q_n, std::pow(sd.ks_product, n / 2.0) * res.s_n, 1e-12 * std::max(1.0, std::abs(res.q_n)));
      }
    }
  }
}

TEST(SampleReplica, IsAPureFunctionOfSeedAndIndex) {
  const SimSpec spec{asym3(), 6, RootCondition::stationary(), 10, 77};
  for (std::uint64_t r = 0; r < 10; ++r) {
    const auto a = sample_replica(spec, r), b = sample_replica(spec, r);
    EXPECT_EQ(a.census, b.census);
    EXPECT_EQ(a.s_n, b.s_n);
  }
  SimSpec other = spec;
  other.master_seed = 78;
  int differ = 0;
  for (std::uint64_t r = 0; r < 10; ++r) differ += sample_replica(spec, r).census != sample_replica(other, r).census;
  EXPECT_GT(differ, 5);
}

TEST(SampleReplica, ZeroEntriesAreNeverSampled) {
  // Row 3 of the channel has M_31 = 0.
  const SimSpec spec{asym3(4), 1, RootCondition::fixed(2), 5000, 3};
  for (std::uint64_t r = 0; r < spec.replicas; ++r) EXPECT_EQ(sample_replica(spec, r).census[0], 0u);
}

TEST(SampleReplica, DeepTreeStreams) {
  // 2^20 leaves in one replica; only the census is kept.
  const auto r = sample_replica({bsc(0.1), 20, RootCondition::fixed(0), 1, 1}, 0);
  EXPECT_EQ(r.census[0] + r.census[1], 1u << 20);
}

TEST(SampleReplica, Errors) {
  const auto sd = bsc(0.1);
  EXPECT_THROW(sample_replica({sd, 25, RootCondition::fixed(0), 1, 0}, 0), Error);
  EXPECT_THROW(sample_replica({sd, 2, RootCondition::fixed(0), 1, 0}, 1), Error);
  EXPECT_THROW(sample_replica({sd, 2, RootCondition::fixed(2), 1, 0}, 0), Error);
}

// Law of S_2 from simulation against the enumerated law, per leaf census.
TEST(RunBatch, SampledLawMatchesBruteForce) {
  const auto sd = asym3();
  const unsigned n = 2;
  const std::uint64_t replicas = 40000;
  for (std::size_t root = 0; root < 3; ++root) {
    const auto law = brute_force(sd, n, root);
    std::map<std::vector<std::uint64_t>, double> freq;
    const SimSpec spec{sd, n, RootCondition::fixed(root), replicas, 2024};
    for (std::uint64_t r = 0; r < replicas; ++r) freq[sample_replica(spec, r).census] += 1.0 / replicas;
    for (const auto& o : law.distribution) {
      const double se = std::sqrt(o.probability * (1 - o.probability) / replicas);
      EXPECT_NEAR(freq[o.census], o.probability, 4.5 * se + 1e-12) << "root " << root;
    }
  }
}

TEST(RunBatch, UnbiasedAndVarianceMatchesRecursion) {
  for (const auto& sd : {bsc(0.1), asym3()}) {
    const auto exact = moments_exact(sd, 4);
    for (std::size_t i = 0; i < sd.k(); ++i) {
      const auto s = run_batch({sd, 4, RootCondition::fixed(i), 30000, 11 + i}, {});
      const auto& g = s.groups[i].s;
      EXPECT_EQ(g.count(), 30000u);
      EXPECT_NEAR(g.mean(), sd.nu[i], 4 * g.standard_error());
      EXPECT_NEAR(g.variance() / exact.variance(4, i), 1.0, 0.1);
    }
  }
}

TEST(RunBatch, EmpiricalMgfMatchesExact) {
  const auto sd = bsc(0.1);
  const std::vector<double> zetas = {-1.0, -0.5, 0.5, 1.0};
  const auto s = run_batch({sd, 3, RootCondition::fixed(1), 50000, 8}, zetas);
  for (std::size_t z = 0; z < zetas.size(); ++z) {
    const auto& m = s.groups[1].mgf[z];
    const double exact = std::exp(log_mgf(sd, 3, zetas[z])[1]);
    EXPECT_NEAR(m.mean(), exact, 4 * m.standard_error()) << zetas[z];
  }
}

TEST(RunBatch, ResultIsIndependentOfThreadCount) {
  const SimSpec spec{asym3(), 5, RootCondition::stationary(), 3 * kChunkSize + 17, 4242};
  const std::vector<double> zetas = {-0.5, 0.25};
  const auto one = to_json(run_batch(spec, zetas, {{0.1}, 1})).dump();
  const auto three = to_json(run_batch(spec, zetas, {{0.1}, 3})).dump();
  const auto eight = to_json(run_batch(spec, zetas, {{0.1}, 8})).dump();
  EXPECT_EQ(one, three);
  EXPECT_EQ(one, eight);
}

TEST(RunBatch, StationaryRootsFollowPi) {
  const auto sd = asym3();
  const SimSpec spec{sd, 0, RootCondition::stationary(), 60000, 31};
  const auto s = run_batch(spec, {});
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < 3; ++i) total += s.groups[i].count();
  EXPECT_EQ(total, spec.replicas);
  const auto check = census_distribution_check(spec, s);
  ASSERT_TRUE(check.applicable);
  for (std::size_t i = 0; i < 3; ++i) {
    const double se = std::sqrt(sd.pi[i] * (1 - sd.pi[i]) / spec.replicas);
    EXPECT_NEAR(check.empirical[i], sd.pi[i], 4 * se);
  }
}

TEST(RunBatch, LeafMarginalIsStationary) {
  const auto sd = bsc(0.1);
  const SimSpec spec{sd, 4, RootCondition::stationary(), 20000, 5};
  const auto check = census_distribution_check(spec, run_batch(spec, {}));
  EXPECT_TRUE(check.applicable);
  EXPECT_LE(check.max_deviation, 0.01);
}

TEST(RunBatch, CensusCheckNotApplicableForFixedRoot) {
  const SimSpec spec{bsc(0.1), 2, RootCondition::fixed(0), 10, 5};
  EXPECT_FALSE(census_distribution_check(spec, run_batch(spec, {})).applicable);
}

TEST(RunBatch, SingleReplicaHasFlaggedZeroVariance) {
  const SimSpec spec{bsc(0.1), 3, RootCondition::fixed(0), 1, 5};
  const auto s = run_batch(spec, {0.5});
  const auto r = sample_replica(spec, 0);
  const auto& g = s.groups[0];
  EXPECT_EQ(g.count(), 1u);
  EXPECT_EQ(g.s.mean(), r.s_n);
  EXPECT_FALSE(g.s.variance_defined());
  EXPECT_EQ(g.s.variance(), 0.0);
  EXPECT_EQ(g.s.standard_error(), 0.0);
  EXPECT_EQ(g.mgf[0].mean(), std::exp(0.5 * r.s_n));
}

TEST(RunBatch, BudgetAndGridErrors) {
  const auto sd = bsc(0.1);
  try {
    run_batch({sd, 24, RootCondition::fixed(0), std::uint64_t{1} << 17, 0}, {});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BudgetExceeded);
  }
  EXPECT_THROW(run_batch({sd, 2, RootCondition::fixed(0), 10, 0}, {std::nan("")}), Error);
}

TEST(RunBatch, WideTreeUsesSeveralCounterGroups) {
  // b = 7 needs two Philox calls per internal node.
  const auto sd = asym3(7);
  const auto exact = moments_exact(sd, 2);
  const auto s = run_batch({sd, 2, RootCondition::fixed(0), 20000, 19}, {});
  EXPECT_NEAR(s.groups[0].s.mean(), sd.nu[0], 4 * s.groups[0].s.standard_error());
  EXPECT_NEAR(s.groups[0].s.variance() / exact.variance(2, 0), 1.0, 0.1);
}

}  // namespace
}  // namespace ksm
