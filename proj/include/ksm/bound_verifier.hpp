#pragma once

// Executable checks of the exponential-moment bounds:
//   gamma_n^i(zeta) <= nu_i zeta + c zeta^2          (Kesten-Stigum phase)
//   sup_n E[e^{zeta S_n^2} | i] < inf for small zeta
// plus the sub-critical contrast, where Q_n = (b lambda^2)^{n/2} S_n is
// asymptotically Gaussian independently of the root.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "ksm/broadcast_sim.hpp"
#include "ksm/error.hpp"
#include "ksm/exact_oracles.hpp"
#include "ksm/spectral.hpp"

namespace ksm {

inline constexpr std::size_t kMinNonzeroZetas = 8;
inline constexpr unsigned kBoundednessBurnIn = 2;
inline constexpr double kBoundednessMaxIncrease = 0.10;
inline constexpr double kStabilizationTol = 0.05;

inline const std::vector<double>& default_bound_grid() {
  static const std::vector<double> grid = {-10, -8, -4, -2, -1, -0.5, -0.25, 0.25, 0.5, 1, 2, 4, 8, 10};
  return grid;
}

struct CorollaryReport {
  double zeta_probe = 0.0;
  std::size_t nodes = kDefaultHermiteNodes;
  // per level n: square MGF for every root state
  std::vector<SquareMgfResult> levels;
  std::vector<double> sup_per_level;  // max over i
  double supremum = 0.0;
  bool all_converged = true;
  bool stabilizes = false;
};

struct BoundReport {
  std::string model_id;
  Phase phase = Phase::Critical;
  MgfTable table;
  std::vector<double> nu;
  // max over i and zeta != 0 of (gamma_n^i(zeta) - nu_i zeta) / zeta^2
  std::vector<double> empirical_c;
  std::optional<double> c_prime_floor;
  bool uniformly_bounded = false;
  bool non_increasing_after_burn_in = false;
  double relative_increase = 0.0;  // (c[n_max] - c[n_max/2]) / c[n_max/2]
  // (c[n] - c[n-1]) / (c[n-1] - c[n-2]) at n_max; below 1 for a geometric approach to a limit.
  std::optional<double> increment_ratio;
  std::optional<CorollaryReport> corollary;

  unsigned n_max() const { return table.levels.empty() ? 0 : table.levels.back(); }
};

inline BoundReport extract_empirical_c(const MgfTable& table, const std::vector<double>& nu) {
  const auto nonzero = std::count_if(table.zeta_grid.begin(), table.zeta_grid.end(), [](double z) { return z != 0.0; });
  if (static_cast<std::size_t>(nonzero) < kMinNonzeroZetas)
    throw Error(ErrorKind::DegenerateGrid, "need at least 8 nonzero zeta points, got " + std::to_string(nonzero));
  if (table.levels.empty()) throw Error(ErrorKind::DegenerateGrid, "table has no levels");

  BoundReport r;
  r.table = table;
  r.nu = nu;
  for (std::size_t n = 0; n < table.values.size(); ++n) {
    double c = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nu.size(); ++i)
      for (std::size_t z = 0; z < table.zeta_grid.size(); ++z) {
        const double zeta = table.zeta_grid[z];
        if (zeta == 0.0) continue;
        c = std::max(c, (table.values[n][i][z] - nu[i] * zeta) / (zeta * zeta));
      }
    r.empirical_c.push_back(c);
  }

  const auto& c = r.empirical_c;
  const std::size_t n_max = c.size() - 1;
  const bool finite = std::all_of(c.begin(), c.end(), [](double x) { return std::isfinite(x); });

  r.non_increasing_after_burn_in = n_max > kBoundednessBurnIn;
  for (std::size_t n = kBoundednessBurnIn + 1; n <= n_max; ++n)
    if (c[n] > c[n - 1]) r.non_increasing_after_burn_in = false;

  const double mid = c[n_max / 2];
  if (mid > 0.0)
    r.relative_increase = (c[n_max] - mid) / mid;
  else
    r.relative_increase = c[n_max] > mid ? std::numeric_limits<double>::infinity() : 0.0;

  r.uniformly_bounded =
      finite && (r.non_increasing_after_burn_in || r.relative_increase < kBoundednessMaxIncrease);

  if (n_max >= 2) {
    const double prev = c[n_max - 1] - c[n_max - 2];
    if (prev != 0.0) r.increment_ratio = (c[n_max] - c[n_max - 1]) / prev;
  }
  return r;
}

// Same as above with phase and c' filled in from the spectral data.
inline BoundReport extract_empirical_c(const MgfTable& table, const SpectralData& sd) {
  BoundReport r = extract_empirical_c(table, sd.nu);
  r.phase = classify_phase(sd);
  if (r.phase == Phase::KestenStigum) r.c_prime_floor = cprime_lower_bound(sd);
  return r;
}

struct BoundCheckRow {
  unsigned n = 0;
  std::size_t i = 0;
  double zeta = 0.0;
  double gamma = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - gamma
};

struct TheoremCheck {
  double c = 0.0;
  bool pass = true;
  std::optional<BoundCheckRow> first_violation;
  std::vector<BoundCheckRow> rows;
};

// gamma_n^i(zeta) <= nu_i zeta + c zeta^2 at every tabulated point.
inline TheoremCheck check_theorem_bound(const BoundReport& report, double c) {
  if (!(c >= 0.0)) throw Error(ErrorKind::InvalidSpec, "bound constant c must be non-negative");
  TheoremCheck out;
  out.c = c;
  const auto& t = report.table;
  for (std::size_t n = 0; n < t.values.size(); ++n)
    for (std::size_t i = 0; i < report.nu.size(); ++i)
      for (std::size_t z = 0; z < t.zeta_grid.size(); ++z) {
        const double zeta = t.zeta_grid[z];
        BoundCheckRow row{t.levels[n], i, zeta, t.values[n][i][z], report.nu[i] * zeta + c * zeta * zeta, 0.0};
        row.margin = row.bound - row.gamma;
        if (!(row.gamma <= row.bound) && out.pass) {
          out.pass = false;
          out.first_violation = row;
        }
        out.rows.push_back(row);
      }
  return out;
}

inline CorollaryReport check_corollary_bound(const SpectralData& sd, unsigned n_max, double zeta_probe,
                                             std::size_t nodes = kDefaultHermiteNodes) {
  if (zeta_probe < 0.0 || std::isnan(zeta_probe))
    throw Error(ErrorKind::NegativeZeta, "square-MGF probe needs zeta >= 0");
  CorollaryReport out;
  out.zeta_probe = zeta_probe;
  out.nodes = nodes;
  std::vector<double> log_sup;
  for (unsigned n = 0; n <= n_max; ++n) {
    auto level = square_mgf_quadrature(sd, n, zeta_probe, nodes);
    out.all_converged = out.all_converged && level.converged;
    out.sup_per_level.push_back(*std::max_element(level.value.begin(), level.value.end()));
    log_sup.push_back(*std::max_element(level.log_value.begin(), level.log_value.end()));
    out.levels.push_back(std::move(level));
  }
  out.supremum = *std::max_element(out.sup_per_level.begin(), out.sup_per_level.end());

  // Relative change below 5% at each of the last three levels.
  out.stabilizes = n_max >= 3;
  if (out.stabilizes)
    for (unsigned n = n_max - 2; n <= n_max; ++n) {
      const double change = std::abs(std::expm1(log_sup[n] - log_sup[n - 1]));
      if (!(change < kStabilizationTol) || !std::isfinite(out.sup_per_level[n])) out.stabilizes = false;
    }
  return out;
}

inline constexpr std::uint64_t kCltMinReplicasPerRoot = 10000;
inline constexpr double kCltSkewnessTol = 0.1;
inline constexpr double kCltKurtosisTol = 0.2;
inline constexpr double kCltMeanGapSe = 4.0;

struct CltRootMoments {
  std::size_t root_state = 0;
  std::uint64_t count = 0;
  double mean = 0.0, mean_se = 0.0;
  double variance = 0.0;
  double skewness = 0.0, skewness_se = 0.0;
  double excess_kurtosis = 0.0, excess_kurtosis_se = 0.0;
};

struct CltReport {
  unsigned n = 0;
  std::vector<CltRootMoments> roots;
  double max_mean_gap = 0.0;
  double max_mean_gap_in_se = 0.0;  // gap / sqrt(se_a^2 + se_b^2)
  bool gaussian_consistent = false;
};

inline CltReport clt_diagnostics(const SpectralData& sd, const BatchSummary& batch) {
  if (classify_phase(sd) != Phase::SubCritical)
    throw Error(ErrorKind::WrongPhase, "CLT diagnostics need b lambda^2 < 1");
  CltReport r;
  r.n = batch.n;
  for (std::size_t i = 0; i < batch.groups.size(); ++i) {
    const auto& q = batch.groups[i].q;
    if (q.count() == 0) continue;
    if (q.count() < kCltMinReplicasPerRoot)
      throw Error(ErrorKind::InvalidSpec, "CLT diagnostics need >= 10^4 replicas per root state");
    r.roots.push_back({i, q.count(), q.mean(), q.standard_error(), q.variance(), q.skewness(), q.skewness_se(),
                       q.excess_kurtosis(), q.excess_kurtosis_se()});
  }
  bool ok = !r.roots.empty();
  for (const auto& m : r.roots)
    if (!(std::abs(m.skewness) <= kCltSkewnessTol) || !(std::abs(m.excess_kurtosis) <= kCltKurtosisTol)) ok = false;
  for (std::size_t a = 0; a < r.roots.size(); ++a)
    for (std::size_t c = a + 1; c < r.roots.size(); ++c) {
      const double gap = std::abs(r.roots[a].mean - r.roots[c].mean);
      const double se = std::hypot(r.roots[a].mean_se, r.roots[c].mean_se);
      r.max_mean_gap = std::max(r.max_mean_gap, gap);
      const double in_se = se > 0.0 ? gap / se : (gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      r.max_mean_gap_in_se = std::max(r.max_mean_gap_in_se, in_se);
    }
  if (!(r.max_mean_gap_in_se <= kCltMeanGapSe)) ok = false;
  r.gaussian_consistent = ok;
  return r;
}

// One fixed-root batch per state, merged; replicas is per root state.
inline BatchSummary run_per_root_batches(const SpectralData& sd, unsigned n, std::uint64_t replicas,
                                         std::uint64_t master_seed, const std::vector<double>& zeta_grid,
                                         const BatchOptions& options = {}) {
  BatchSummary total;
  for (std::size_t i = 0; i < sd.k(); ++i) {
    SimSpec spec{sd, n, RootCondition::fixed(i), replicas, mix_seed(master_seed + i)};
    auto part = run_batch(spec, zeta_grid, options);
    if (i == 0)
      total = std::move(part);
    else
      total.merge(part);
  }
  return total;
}

}  // namespace ksm
