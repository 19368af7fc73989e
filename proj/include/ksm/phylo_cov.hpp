#pragma once

// Deep covariance between reconstructed internal states. From ell i.i.d.
// leaf samples of the broadcast process on T_n, the reconstructed state of
// an internal node u at level m is (b lambda)^{-(n-m)} sum_{x below u} sigma_x;
// the sample mean of the product over two nodes estimates lambda^{d(u,v)}.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ksm/broadcast_sim.hpp"
#include "ksm/error.hpp"
#include "ksm/rng.hpp"
#include "ksm/spectral.hpp"

namespace ksm {

inline constexpr std::uint64_t kSampleLeafBudget = std::uint64_t{1} << 32;

// Leaf states of ell independent replicas, row-major ell x b^n.
// Leaf x of level n sits below the level-m node x / b^{n-m}.
struct SampleMatrix {
  std::uint64_t ell = 0;
  unsigned n = 0;
  std::size_t b = 2;
  std::uint64_t leaves = 1;
  std::vector<std::uint8_t> leaf_state;
  std::vector<double> nu;

  double sigma(std::uint64_t row, std::uint64_t leaf) const { return nu[leaf_state[row * leaves + leaf]]; }
};

inline SampleMatrix generate_samples(const SpectralData& sd, unsigned n, std::uint64_t ell, std::uint64_t master_seed,
                                     unsigned threads = 0) {
  if (ell < 1) throw Error(ErrorKind::InvalidSpec, "ell must be >= 1");
  SimSpec spec{sd, n, RootCondition::stationary(), ell, master_seed};
  validate_sim_spec(spec);
  const std::uint64_t leaves = *checked_power(sd.b, n);
  if (ell > kSampleLeafBudget / leaves) throw Error(ErrorKind::BudgetExceeded, "ell * b^n exceeds 2^32");

  SampleMatrix s{ell, n, sd.b, leaves, std::vector<std::uint8_t>(ell * leaves), sd.nu};
  const TreeSampler sampler(sd);
  const Philox4x32 rng(master_seed);
  const std::uint64_t chunks = (ell + kChunkSize - 1) / kChunkSize;
  parallel_chunks(chunks, threads, [&](std::uint64_t c) {
    const std::uint64_t end = std::min(ell, (c + 1) * kChunkSize);
    for (std::uint64_t r = c * kChunkSize; r < end; ++r) {
      std::uint8_t* row = &s.leaf_state[r * leaves];
      sampler.traverse(rng, r, sampler.draw_root(rng, r), n,
                       [row](std::uint64_t leaf, std::size_t state) { row[leaf] = static_cast<std::uint8_t>(state); });
    }
  });
  return s;
}

struct NodePair {
  unsigned m = 0;
  std::uint64_t u = 0;
  std::uint64_t v = 0;
};

// Tree distance 2 * (m - level of the lowest common ancestor), from base-b digits.
inline unsigned tree_distance(std::size_t b, const NodePair& p) {
  unsigned up = 0;
  std::uint64_t u = p.u, v = p.v;
  while (u != v) {
    u /= b;
    v /= b;
    ++up;
  }
  return 2 * up;
}

inline void validate_pair(const SampleMatrix& s, const NodePair& p) {
  if (p.m >= s.n) throw Error(ErrorKind::InvalidPair, "pair level m must be below the leaf level n");
  const std::uint64_t width = *checked_power(s.b, p.m);
  if (p.u >= width || p.v >= width) throw Error(ErrorKind::InvalidPair, "node index outside level m");
  if (p.u == p.v) throw Error(ErrorKind::InvalidPair, "u and v must be distinct");
}

inline double cov_hat(const SampleMatrix& s, const NodePair& p, const SpectralData& sd) {
  validate_pair(s, p);
  const unsigned depth = s.n - p.m;
  const std::uint64_t block = *checked_power(s.b, depth);
  const double scale = 1.0 / std::pow(static_cast<double>(sd.b) * sd.lambda, static_cast<int>(depth));
  double acc = 0.0;
  for (std::uint64_t row = 0; row < s.ell; ++row) {
    double su = 0.0, sv = 0.0;
    for (std::uint64_t x = 0; x < block; ++x) {
      su += s.sigma(row, p.u * block + x);
      sv += s.sigma(row, p.v * block + x);
    }
    acc += (scale * su) * (scale * sv);
  }
  return acc / static_cast<double>(s.ell);
}

// d = ln(cov) / ln|lambda|; empty when cov <= 0 (noise floor) or |lambda| = 1.
inline std::optional<double> distance_estimate(double cov, const SpectralData& sd) {
  const double log_lambda = std::log(std::abs(sd.lambda));
  if (!(cov > 0.0) || log_lambda == 0.0) return std::nullopt;
  return std::log(cov) / log_lambda;
}

struct CovPairResult {
  NodePair pair;
  unsigned distance = 0;
  double target = 0.0;  // lambda^d
  std::vector<double> per_repeat;
  double mean = 0.0;
  double se = 0.0;
  std::optional<double> distance_hat;
};

// Repeat r draws its samples with master seed mix_seed(master_seed + r), so
// experiments at different ell share per-repeat seeds.
inline std::vector<CovPairResult> run_cov_experiment(const SpectralData& sd, unsigned n,
                                                     const std::vector<NodePair>& pairs, std::uint64_t ell,
                                                     std::uint64_t repeats, std::uint64_t master_seed,
                                                     unsigned threads = 0) {
  if (repeats < 1) throw Error(ErrorKind::InvalidSpec, "repeats must be >= 1");
  std::vector<CovPairResult> out;
  for (const auto& p : pairs) {
    CovPairResult r;
    r.pair = p;
    r.distance = tree_distance(sd.b, p);
    r.target = std::pow(sd.lambda, static_cast<int>(r.distance));
    out.push_back(std::move(r));
  }
  for (std::uint64_t rep = 0; rep < repeats; ++rep) {
    const auto samples = generate_samples(sd, n, ell, mix_seed(master_seed + rep), threads);
    for (auto& r : out) r.per_repeat.push_back(cov_hat(samples, r.pair, sd));
  }
  for (auto& r : out) {
    RunningMoments m;
    for (double x : r.per_repeat) m.add(x);
    r.mean = m.mean();
    r.se = m.standard_error();
    r.distance_hat = distance_estimate(r.mean, sd);
  }
  return out;
}

}  // namespace ksm
