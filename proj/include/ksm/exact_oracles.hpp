#pragma once

// Deterministic ground truth for the linear estimator S_n:
//  * the one-level MGF recursion
//      gamma_{n+1}^i(z) = b * ln sum_j M_ij exp(gamma_n^j(z / (b lambda)))
//    evaluated in log space,
//  * exact first/second moment recursions,
//  * brute-force enumeration of every state assignment of a tiny tree,
//  * Gauss-Hermite quadrature for the MGF of S_n^2 through
//      E[e^{z S^2}] = E_X[ E[e^{sqrt(2z) X S}] ],  X ~ N(0, 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ksm/broadcast_sim.hpp"
#include "ksm/error.hpp"
#include "ksm/quadrature.hpp"
#include "ksm/spectral.hpp"

namespace ksm {

// log(sum_j exp(terms_j)); -inf terms (zero weights) drop out.
inline double log_sum_exp(const double* terms, std::size_t count) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < count; ++j) top = std::max(top, terms[j]);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (std::size_t j = 0; j < count; ++j) acc += std::exp(terms[j] - top);
  return top + std::log(acc);
}

inline void require_nonzero_lambda(const SpectralData& sd) {
  if (std::abs(sd.lambda) < kZeroLambdaTol) throw Error(ErrorKind::ZeroLambda, "lambda is zero");
}

// gamma_n^i(zeta) for every root state i. The level-m argument is
// zeta / (b lambda)^{n-m}; the sign alternates when lambda < 0.
inline std::vector<double> log_mgf(const SpectralData& sd, unsigned n, double zeta) {
  require_nonzero_lambda(sd);
  const std::size_t k = sd.k();
  const double bl = static_cast<double>(sd.b) * sd.lambda;
  const double b = static_cast<double>(sd.b);

  std::vector<double> log_m(k * k);
  for (std::size_t t = 0; t < k * k; ++t) {
    const double p = sd.channel.entries()[t];
    log_m[t] = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }

  std::vector<double> gamma(k, 0.0), next(k), terms(k);
  if (zeta == 0.0) return gamma;  // MGF at zero is exactly 1
  const double z0 = zeta / std::pow(bl, static_cast<int>(n));
  for (std::size_t i = 0; i < k; ++i) gamma[i] = sd.nu[i] * z0;
  for (unsigned m = 1; m <= n; ++m) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) terms[j] = log_m[i * k + j] + gamma[j];
      next[i] = b * log_sum_exp(terms.data(), k);
    }
    gamma.swap(next);
  }
  return gamma;
}

struct MgfTable {
  std::vector<double> zeta_grid;  // sorted
  std::vector<unsigned> levels;   // 0..n_max
  // values[n][i][z] = gamma_n^i(zeta_grid[z])
  std::vector<std::vector<std::vector<double>>> values;

  double gamma(unsigned n, std::size_t i, std::size_t z) const { return values[n][i][z]; }
};

inline MgfTable mgf_exact(const SpectralData& sd, unsigned n_max, std::vector<double> zeta_grid) {
  require_nonzero_lambda(sd);
  for (double z : zeta_grid)
    if (!std::isfinite(z)) throw Error(ErrorKind::InvalidSpec, "zeta grid contains a non-finite value");
  std::sort(zeta_grid.begin(), zeta_grid.end());

  MgfTable t;
  t.zeta_grid = std::move(zeta_grid);
  const std::size_t k = sd.k();
  for (unsigned n = 0; n <= n_max; ++n) {
    t.levels.push_back(n);
    std::vector<std::vector<double>> level(k, std::vector<double>(t.zeta_grid.size()));
    for (std::size_t z = 0; z < t.zeta_grid.size(); ++z) {
      const auto g = log_mgf(sd, n, t.zeta_grid[z]);
      for (std::size_t i = 0; i < k; ++i) level[i][z] = g[i];
    }
    t.values.push_back(std::move(level));
  }
  return t;
}

struct MomentTable {
  std::vector<std::vector<double>> mean;          // mean[n][i] = E[S_n | i]
  std::vector<std::vector<double>> second_moment;  // E[S_n^2 | i]

  double variance(unsigned n, std::size_t i) const {
    return second_moment[n][i] - mean[n][i] * mean[n][i];
  }
};

// E[S_{n+1} | i]   = (1/lambda) sum_j M_ij E[S_n | j]
// E[S_{n+1}^2 | i] = (1/(b lambda^2)) sum_j M_ij E[S_n^2 | j] + (1 - 1/b) nu_i^2
inline MomentTable moments_exact(const SpectralData& sd, unsigned n_max) {
  require_nonzero_lambda(sd);
  const std::size_t k = sd.k();
  const double b = static_cast<double>(sd.b);
  MomentTable t;
  std::vector<double> mean(sd.nu), second(k);
  for (std::size_t i = 0; i < k; ++i) second[i] = sd.nu[i] * sd.nu[i];
  t.mean.push_back(mean);
  t.second_moment.push_back(second);
  for (unsigned n = 1; n <= n_max; ++n) {
    std::vector<double> next_mean(k, 0.0), next_second(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      double m_acc = 0.0, s_acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        m_acc += sd.channel(i, j) * mean[j];
        s_acc += sd.channel(i, j) * second[j];
      }
      next_mean[i] = m_acc / sd.lambda;
      next_second[i] = s_acc / sd.ks_product + (1.0 - 1.0 / b) * sd.nu[i] * sd.nu[i];
    }
    mean.swap(next_mean);
    second.swap(next_second);
    t.mean.push_back(mean);
    t.second_moment.push_back(second);
  }
  return t;
}

inline constexpr std::uint64_t kBruteForceBudget = std::uint64_t{1} << 24;

struct BruteForceOutcome {
  std::vector<std::uint64_t> census;
  double value = 0.0;  // S_n
  double probability = 0.0;
};

// Exact law of S_n given the root state, one entry per distinct leaf census.
struct BruteForceResult {
  unsigned n = 0;
  std::size_t root_state = 0;
  std::uint64_t configurations = 0;
  std::vector<BruteForceOutcome> distribution;

  double total_probability() const {
    double acc = 0.0;
    for (const auto& o : distribution) acc += o.probability;
    return acc;
  }
  double mean() const {
    double acc = 0.0;
    for (const auto& o : distribution) acc += o.probability * o.value;
    return acc;
  }
  double second_moment() const {
    double acc = 0.0;
    for (const auto& o : distribution) acc += o.probability * o.value * o.value;
    return acc;
  }
  double mgf(double zeta) const {
    double acc = 0.0;
    for (const auto& o : distribution) acc += o.probability * std::exp(zeta * o.value);
    return acc;
  }
  double log_mgf(double zeta) const { return std::log(mgf(zeta)); }
};

// Enumerates all k^(N-1) assignments of the non-root vertices of T_n
// (N = (b^{n+1}-1)/(b-1) vertices, level order, parent(v) = (v-1)/b).
inline BruteForceResult brute_force(const SpectralData& sd, unsigned n, std::size_t root_state) {
  require_nonzero_lambda(sd);
  const std::size_t k = sd.k();
  const std::uint64_t b = sd.b;
  if (root_state >= k) throw Error(ErrorKind::InvalidSpec, "root state out of range");

  std::uint64_t vertices = 0, level_size = 1, first_leaf = 0;
  for (unsigned m = 0; m <= n; ++m) {
    if (m == n) first_leaf = vertices;
    vertices += level_size;
    if (vertices > 64) throw Error(ErrorKind::BudgetExceeded, "tree too large to enumerate");
    level_size *= b;
  }
  std::uint64_t assignments = 1;  // k^N including the root, per the enumeration budget
  for (std::uint64_t v = 0; v < vertices; ++v) {
    assignments *= k;
    if (assignments > kBruteForceBudget)
      throw Error(ErrorKind::BudgetExceeded, "k^N exceeds the 2^24 enumeration budget");
  }

  std::vector<std::size_t> state(vertices, 0);
  state[0] = root_state;
  std::map<std::vector<std::uint64_t>, double> law;
  BruteForceResult out{n, root_state, 0, {}};
  while (true) {
    double p = 1.0;
    for (std::uint64_t v = 1; v < vertices; ++v) p *= sd.channel(state[(v - 1) / b], state[v]);
    std::vector<std::uint64_t> census(k, 0);
    for (std::uint64_t v = first_leaf; v < vertices; ++v) ++census[state[v]];
    law[census] += p;
    ++out.configurations;

    std::uint64_t v = 1;
    while (v < vertices && ++state[v] == k) state[v++] = 0;
    if (v == vertices) break;
  }
  for (auto& [census, p] : law) out.distribution.push_back({census, linear_estimator_from_census(sd, n, census), p});
  return out;
}

inline constexpr std::size_t kDefaultHermiteNodes = 64;
inline constexpr double kQuadratureConvergenceTol = 1e-6;

struct SquareMgfResult {
  double zeta = 0.0;
  unsigned n = 0;
  std::size_t nodes = 0;
  std::vector<double> value;      // per root state; may overflow to +inf
  std::vector<double> log_value;  // finite even when value overflows
  std::vector<double> relative_change;  // |Q(nodes) - Q(nodes/2)| / Q(nodes), log-space
  bool converged = true;
};

namespace detail {

inline std::vector<double> log_square_mgf(const SpectralData& sd, unsigned n, double zeta, std::size_t nodes) {
  const auto rule = gauss_hermite(nodes);
  const double scale = std::sqrt(2.0 * zeta);
  const std::size_t k = sd.k();
  std::vector<std::vector<double>> terms(k, std::vector<double>(nodes));
  for (std::size_t q = 0; q < nodes; ++q) {
    const auto g = log_mgf(sd, n, scale * rule.nodes[q]);
    for (std::size_t i = 0; i < k; ++i) terms[i][q] = std::log(rule.weights[q]) + g[i];
  }
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = log_sum_exp(terms[i].data(), nodes);
  return out;
}

}  // namespace detail

// tilde Gamma_n^i(zeta) = E[e^{zeta S_n^2} | i] for every root state i.
inline SquareMgfResult square_mgf_quadrature(const SpectralData& sd, unsigned n, double zeta,
                                             std::size_t nodes = kDefaultHermiteNodes) {
  if (zeta < 0.0 || std::isnan(zeta)) throw Error(ErrorKind::NegativeZeta, "square MGF needs zeta >= 0");
  if (nodes < 16) throw Error(ErrorKind::InvalidSpec, "at least 16 quadrature nodes are required");
  require_nonzero_lambda(sd);
  const std::size_t k = sd.k();
  SquareMgfResult r{zeta, n, nodes, std::vector<double>(k, 1.0), std::vector<double>(k, 0.0),
                    std::vector<double>(k, 0.0), true};
  if (zeta == 0.0) return r;

  const auto fine = detail::log_square_mgf(sd, n, zeta, nodes);
  const auto coarse = detail::log_square_mgf(sd, n, zeta, nodes / 2);
  for (std::size_t i = 0; i < k; ++i) {
    r.log_value[i] = fine[i];
    r.value[i] = std::exp(fine[i]);
    r.relative_change[i] = std::abs(std::expm1(coarse[i] - fine[i]));
    if (!(r.relative_change[i] < kQuadratureConvergenceTol)) r.converged = false;
  }
  return r;
}

}  // namespace ksm
