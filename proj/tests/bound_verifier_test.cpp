#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ksm/bound_verifier.hpp"

namespace ksm {
namespace {

SpectralData bsc(double p, std::size_t b = 2) { return analyze(binary_symmetric_channel(p), b); }

// Hand-built table with gamma = nu zeta + c_n zeta^2 exactly.
MgfTable quadratic_table(const std::vector<double>& c_per_level, const std::vector<double>& nu) {
  MgfTable t;
  t.zeta_grid = default_bound_grid();
  for (unsigned n = 0; n < c_per_level.size(); ++n) {
    t.levels.push_back(n);
    std::vector<std::vector<double>> level(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i)
      for (double z : t.zeta_grid) level[i].push_back(nu[i] * z + c_per_level[n] * z * z);
    t.values.push_back(level);
  }
  return t;
}

TEST(ExtractEmpiricalC, RecoversQuadraticCoefficient) {
  const auto r = extract_empirical_c(quadratic_table({0.0, 0.3, 0.5, 0.5, 0.5}, {1.0, -1.0}), {1.0, -1.0});
  ASSERT_EQ(r.empirical_c.size(), 5u);
  EXPECT_NEAR(r.empirical_c[1], 0.3, 1e-12);
  EXPECT_NEAR(r.empirical_c[4], 0.5, 1e-12);
  EXPECT_TRUE(r.non_increasing_after_burn_in);
  EXPECT_TRUE(r.uniformly_bounded);
}

TEST(ExtractEmpiricalC, BoundednessFlagRules) {
  const std::vector<double> nu = {1.0, -1.0};
  // Increasing but by less than 10% from n_max/2 to n_max.
  auto slow = extract_empirical_c(quadratic_table({0, 1, 2, 3, 3.1, 3.15, 3.2}, nu), nu);
  EXPECT_FALSE(slow.non_increasing_after_burn_in);
  EXPECT_NEAR(slow.relative_increase, 0.2 / 3.0, 1e-12);
  EXPECT_TRUE(slow.uniformly_bounded);
  // Increasing by more than 10%.
  auto fast = extract_empirical_c(quadratic_table({0, 1, 2, 3, 4, 5, 6}, nu), nu);
  EXPECT_FALSE(fast.uniformly_bounded);
  EXPECT_NEAR(*fast.increment_ratio, 1.0, 1e-12);
  // Non-finite constants fail.
  auto inf = extract_empirical_c(quadratic_table({0, 1, 1, 1, INFINITY}, nu), nu);
  EXPECT_FALSE(inf.uniformly_bounded);
}

TEST(ExtractEmpiricalC, LevelZeroIsZero) {
  const auto sd = bsc(0.1);
  const auto r = extract_empirical_c(mgf_exact(sd, 3, default_bound_grid()), sd);
  EXPECT_EQ(r.empirical_c[0], 0.0);
  EXPECT_EQ(r.phase, Phase::KestenStigum);
  EXPECT_NEAR(*r.c_prime_floor, 25.0 / 14.0, 1e-12);
}

TEST(ExtractEmpiricalC, DegenerateGrid) {
  const auto sd = bsc(0.1);
  try {
    extract_empirical_c(mgf_exact(sd, 2, {-1, -0.5, 0, 0.5, 1, 2, 4}), sd);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateGrid);
  }
}

// Kesten-Stigum model: finite, increasing, with geometrically shrinking
// increments (ratio -> 1/(b lambda^2) = 0.78125).
TEST(ExtractEmpiricalC, KestenStigumConstantsConverge) {
  const auto sd = bsc(0.1);
  const auto r = extract_empirical_c(mgf_exact(sd, 12, default_bound_grid()), sd);
  for (double c : r.empirical_c) EXPECT_TRUE(std::isfinite(c));
  // Frozen from an independent numpy/scipy evaluation of the recursion.
  EXPECT_NEAR(r.empirical_c[6], 0.5990, 5e-4);
  EXPECT_NEAR(r.empirical_c[12], 0.7112, 5e-4);
  ASSERT_TRUE(r.increment_ratio.has_value());
  EXPECT_LT(*r.increment_ratio, 1.0);
  EXPECT_NEAR(*r.increment_ratio, 1.0 / sd.ks_product, 0.05);
}

TEST(ExtractEmpiricalC, SubCriticalConstantsDiverge) {
  const auto sd = bsc(0.3);
  const auto r = extract_empirical_c(mgf_exact(sd, 12, default_bound_grid()), sd);
  EXPECT_GE(r.empirical_c[12], 2.0 * r.empirical_c[6]);
  EXPECT_FALSE(r.uniformly_bounded);
  EXPECT_GT(*r.increment_ratio, 1.0);
  EXPECT_FALSE(r.c_prime_floor.has_value());
}

TEST(ExtractEmpiricalC, InvariantUnderEigenvectorFlip) {
  const auto sd = analyze(validate_channel({{0.85, 0.1, 0.05}, {0.2, 0.7, 0.1}, {0.0, 0.25, 0.75}}), 3);
  SpectralData flipped = sd;
  for (double& x : flipped.nu) x = -x;
  const auto a = extract_empirical_c(mgf_exact(sd, 8, default_bound_grid()), sd);
  const auto b = extract_empirical_c(mgf_exact(flipped, 8, default_bound_grid()), flipped);
  for (std::size_t n = 0; n <= 8; ++n) EXPECT_NEAR(a.empirical_c[n], b.empirical_c[n], 1e-12 * (1 + a.empirical_c[n]));
}

TEST(CheckTheoremBound, PassesAtEmpiricalConstant) {
  const auto sd = bsc(0.1);
  const auto r = extract_empirical_c(mgf_exact(sd, 12, default_bound_grid()), sd);
  const auto check = check_theorem_bound(r, r.empirical_c.back() + 1e-9);
  EXPECT_TRUE(check.pass);
  for (const auto& row : check.rows) EXPECT_LE(row.gamma - sd.nu[row.i] * row.zeta - r.empirical_c.back() * row.zeta * row.zeta, 1e-9);
  EXPECT_EQ(check.rows.size(), 13u * 2u * default_bound_grid().size());
}

TEST(CheckTheoremBound, FailsAtZero) {
  const auto sd = bsc(0.1);
  const auto check = check_theorem_bound(extract_empirical_c(mgf_exact(sd, 4, default_bound_grid()), sd), 0.0);
  EXPECT_FALSE(check.pass);
  ASSERT_TRUE(check.first_violation.has_value());
  EXPECT_GT(check.first_violation->gamma, check.first_violation->bound);
  EXPECT_GE(check.first_violation->n, 1u);
}

TEST(CheckTheoremBound, SmallZetaRegimeWithMultipleOfCprime) {
  const auto sd = bsc(0.1);
  const auto r = extract_empirical_c(mgf_exact(sd, 12, {-2, -1, -0.5, -0.25, -0.1, 0.1, 0.25, 0.5, 1, 2}), sd);
  EXPECT_TRUE(check_theorem_bound(r, 5.0 * cprime_lower_bound(sd)).pass);
}

TEST(CheckTheoremBound, RejectsNegativeConstant) {
  const auto sd = bsc(0.1);
  EXPECT_THROW(check_theorem_bound(extract_empirical_c(mgf_exact(sd, 2, default_bound_grid()), sd), -1.0), Error);
}

TEST(CheckCorollaryBound, ZeroProbeIsOne) {
  const auto r = check_corollary_bound(bsc(0.1), 5, 0.0);
  for (const auto& l : r.levels)
    for (double v : l.value) EXPECT_EQ(v, 1.0);
  EXPECT_TRUE(r.stabilizes);
}

TEST(CheckCorollaryBound, KestenStigumStabilizes) {
  const auto r = check_corollary_bound(bsc(0.1), 10, 0.05);
  EXPECT_TRUE(r.all_converged);
  EXPECT_TRUE(r.stabilizes);
  EXPECT_TRUE(std::isfinite(r.supremum));
  EXPECT_GT(r.supremum, 1.0);
}

TEST(CheckCorollaryBound, SubCriticalDoesNotStabilize) {
  const auto r = check_corollary_bound(bsc(0.3), 10, 0.05);
  EXPECT_FALSE(r.stabilizes);
  for (std::size_t n = 1; n < r.levels.size(); ++n) {
    const double prev = *std::max_element(r.levels[n - 1].log_value.begin(), r.levels[n - 1].log_value.end());
    const double cur = *std::max_element(r.levels[n].log_value.begin(), r.levels[n].log_value.end());
    EXPECT_GT(cur, prev);
  }
}

TEST(CheckCorollaryBound, NegativeProbe) {
  EXPECT_THROW(check_corollary_bound(bsc(0.1), 3, -0.01), Error);
}

TEST(CltDiagnostics, SubCriticalIsGaussianConsistent) {
  const auto sd = bsc(0.3);
  const auto batch = run_per_root_batches(sd, 8, 20000, 606, {});
  const auto r = clt_diagnostics(sd, batch);
  ASSERT_EQ(r.roots.size(), 2u);
  for (const auto& m : r.roots) {
    EXPECT_EQ(m.count, 20000u);
    EXPECT_LT(std::abs(m.skewness), 0.1);
    EXPECT_LT(std::abs(m.excess_kurtosis), 0.2);
  }
  EXPECT_TRUE(r.gaussian_consistent);
}

TEST(CltDiagnostics, LevelZeroIsTwoPointAndFails) {
  const auto sd = bsc(0.3);
  const auto r = clt_diagnostics(sd, run_batch({sd, 0, RootCondition::stationary(), 40000, 1}, {}));
  EXPECT_FALSE(r.gaussian_consistent);
}

TEST(CltDiagnostics, WrongPhaseAndTooFewReplicas) {
  const auto ks = bsc(0.1);
  try {
    clt_diagnostics(ks, run_batch({ks, 2, RootCondition::fixed(0), 100, 1}, {}));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongPhase);
  }
  const auto sub = bsc(0.3);
  EXPECT_THROW(clt_diagnostics(sub, run_batch({sub, 2, RootCondition::fixed(0), 100, 1}, {})), Error);
}

}  // namespace
}  // namespace ksm
