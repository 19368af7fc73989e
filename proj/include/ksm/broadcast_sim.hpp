#pragma once

// Streaming simulation of the broadcast process on the b-ary tree T_n.
//
// A replica is drawn by depth-first traversal, so memory is O(n + k) no
// matter how many leaves the tree has. Randomness is counter-based: the
// children of a node are drawn from Philox(master_seed) at counter
// (replica, node id), which makes every replica independent of how replicas
// are scheduled across threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ksm/error.hpp"
#include "ksm/rng.hpp"
#include "ksm/running_moments.hpp"
#include "ksm/spectral.hpp"

namespace ksm {

inline constexpr unsigned kMaxLevel = 24;
inline constexpr std::uint64_t kReplicaLeafBudget = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kChunkSize = 4096;

struct RootCondition {
  std::optional<std::size_t> fixed_state;  // 0-based; empty means stationary

  static RootCondition stationary() { return {}; }
  static RootCondition fixed(std::size_t state) { return {state}; }
  bool is_stationary() const noexcept { return !fixed_state.has_value(); }
};

struct SimSpec {
  SpectralData sd;
  unsigned n = 0;
  RootCondition root;
  std::uint64_t replicas = 1;
  std::uint64_t master_seed = 0;
};

// b^n, or nullopt on 64-bit overflow.
inline std::optional<std::uint64_t> checked_power(std::uint64_t b, unsigned n) {
  std::uint64_t r = 1;
  for (unsigned t = 0; t < n; ++t) {
    if (r > std::numeric_limits<std::uint64_t>::max() / b) return std::nullopt;
    r *= b;
  }
  return r;
}

inline void validate_sim_spec(const SimSpec& spec) {
  if (spec.n > kMaxLevel)
    throw Error(ErrorKind::InvalidSpec, "level n = " + std::to_string(spec.n) + " exceeds the cap of 24");
  if (spec.replicas < 1) throw Error(ErrorKind::InvalidSpec, "replicas must be >= 1");
  if (spec.root.fixed_state && *spec.root.fixed_state >= spec.sd.k())
    throw Error(ErrorKind::InvalidSpec, "fixed root state out of range");
  if (!checked_power(spec.sd.b, spec.n))
    throw Error(ErrorKind::BudgetExceeded, "b^n overflows 64 bits");
}

// Per-channel sampling tables plus the traversal itself.
class TreeSampler {
 public:
  explicit TreeSampler(const SpectralData& sd) : k_(sd.k()), b_(sd.b), cumulative_(k_ * k_), pi_cumulative_(k_) {
    for (std::size_t i = 0; i < k_; ++i) fill_cumulative(sd.channel.entries().data() + i * k_, &cumulative_[i * k_]);
    fill_cumulative(sd.pi.data(), pi_cumulative_.data());
    groups_ = (b_ + 3) / 4;
  }

  std::size_t k() const noexcept { return k_; }
  std::size_t b() const noexcept { return b_; }

  std::size_t draw_root(const Philox4x32& rng, std::uint64_t replica) const {
    const auto w = rng(replica, std::numeric_limits<std::uint64_t>::max());
    return pick(pi_cumulative_.data(), uniform_from_u64(w[0], w[1]));
  }

  // Depth-first traversal from `root_state`; calls on_leaf(leaf_index, state)
  // for every level-n vertex in left-to-right order.
  template <class OnLeaf>
  void traverse(const Philox4x32& rng, std::uint64_t replica, std::size_t root_state, unsigned n, OnLeaf&& on_leaf) const {
    visit(rng, replica, root_state, 0, 0, 0, n, on_leaf);
  }

 private:
  void fill_cumulative(const double* p, double* out) const {
    std::size_t last_positive = 0;
    double acc = 0.0;
    for (std::size_t j = 0; j < k_; ++j) {
      acc += p[j];
      out[j] = acc;
      if (p[j] > 0.0) last_positive = j;
    }
    // Round-off in the row sum must not leak mass to trailing zero entries.
    for (std::size_t j = last_positive; j < k_; ++j) out[j] = 2.0;
  }

  std::size_t pick(const double* cum, double u) const {
    std::size_t j = 0;
    while (u >= cum[j]) ++j;
    return j;
  }

  // node_id is the level-order index of the vertex in the full tree.
  template <class OnLeaf>
  void visit(const Philox4x32& rng, std::uint64_t replica, std::size_t state, unsigned level, std::uint64_t index,
             std::uint64_t level_offset, unsigned n, OnLeaf& on_leaf) const {
    if (level == n) {
      on_leaf(index, state);
      return;
    }
    const std::uint64_t node_id = level_offset + index;
    const std::uint64_t next_offset = level_offset * b_ + 1;
    const double* row = &cumulative_[state * k_];
    for (std::size_t g = 0; g < groups_; ++g) {
      const auto words = rng(replica, node_id * groups_ + g);
      const std::size_t first = g * 4;
      const std::size_t last = std::min(b_, first + 4);
      for (std::size_t c = first; c < last; ++c) {
        const std::size_t child_state = pick(row, uniform_from_u32(words[c - first]));
        visit(rng, replica, child_state, level + 1, index * b_ + c, next_offset, n, on_leaf);
      }
    }
  }

  std::size_t k_;
  std::size_t b_;
  std::size_t groups_ = 1;
  std::vector<double> cumulative_;
  std::vector<double> pi_cumulative_;
};

struct ReplicaResult {
  std::size_t root_state = 0;
  double s_n = 0.0;
  double q_n = 0.0;
  std::vector<std::uint64_t> census;
};

// S_n = (b lambda)^-n sum_x sigma_x, taken from the leaf census.
inline double linear_estimator_from_census(const SpectralData& sd, unsigned n,
                                           const std::vector<std::uint64_t>& census) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < census.size(); ++i)
    acc += static_cast<long double>(census[i]) * static_cast<long double>(sd.nu[i]);
  return static_cast<double>(acc / std::pow(static_cast<long double>(sd.b) * sd.lambda, static_cast<int>(n)));
}

// Q_n = (b lambda^2)^{n/2} S_n
inline double q_from_s(const SpectralData& sd, unsigned n, double s_n) {
  return std::pow(sd.ks_product, 0.5 * static_cast<double>(n)) * s_n;
}

namespace detail {

inline ReplicaResult sample_replica_with(const SimSpec& spec, const TreeSampler& sampler, const Philox4x32& rng,
                                         std::uint64_t replica_index) {
  ReplicaResult r;
  r.root_state = spec.root.fixed_state ? *spec.root.fixed_state : sampler.draw_root(rng, replica_index);
  r.census.assign(spec.sd.k(), 0);
  sampler.traverse(rng, replica_index, r.root_state, spec.n,
                   [&](std::uint64_t, std::size_t state) { ++r.census[state]; });
  r.s_n = linear_estimator_from_census(spec.sd, spec.n, r.census);
  r.q_n = q_from_s(spec.sd, spec.n, r.s_n);
  return r;
}

}  // namespace detail

inline ReplicaResult sample_replica(const SimSpec& spec, std::uint64_t replica_index) {
  validate_sim_spec(spec);
  if (replica_index >= spec.replicas) throw Error(ErrorKind::InvalidSpec, "replica index out of range");
  const TreeSampler sampler(spec.sd);
  return detail::sample_replica_with(spec, sampler, Philox4x32(spec.master_seed), replica_index);
}

// Moments of S_n, Q_n and the empirical MGFs for one root state.
struct RootGroupSummary {
  RunningMoments s;
  RunningMoments q;
  std::vector<RunningMoments> mgf;         // e^{zeta S_n}, one per zeta_grid entry
  std::vector<RunningMoments> square_mgf;  // e^{zeta S_n^2}, one per square_zeta_grid entry

  std::uint64_t count() const noexcept { return s.count(); }

  void merge(const RootGroupSummary& o) {
    s.merge(o.s);
    q.merge(o.q);
    for (std::size_t z = 0; z < mgf.size(); ++z) mgf[z].merge(o.mgf[z]);
    for (std::size_t z = 0; z < square_mgf.size(); ++z) square_mgf[z].merge(o.square_mgf[z]);
  }
};

struct BatchSummary {
  std::size_t k = 0;
  unsigned n = 0;
  std::uint64_t replicas = 0;
  std::vector<double> zeta_grid;
  std::vector<double> square_zeta_grid;
  std::vector<RootGroupSummary> groups;  // indexed by root state
  std::vector<std::uint64_t> pooled_census;

  BatchSummary() = default;
  BatchSummary(std::size_t k_states, unsigned level, std::vector<double> zetas, std::vector<double> square_zetas)
      : k(k_states), n(level), zeta_grid(std::move(zetas)), square_zeta_grid(std::move(square_zetas)),
        groups(k_states), pooled_census(k_states, 0) {
    for (auto& g : groups) {
      g.mgf.resize(zeta_grid.size());
      g.square_mgf.resize(square_zeta_grid.size());
    }
  }

  void add(const ReplicaResult& r) {
    auto& g = groups[r.root_state];
    g.s.add(r.s_n);
    g.q.add(r.q_n);
    for (std::size_t z = 0; z < zeta_grid.size(); ++z) g.mgf[z].add(std::exp(zeta_grid[z] * r.s_n));
    for (std::size_t z = 0; z < square_zeta_grid.size(); ++z)
      g.square_mgf[z].add(std::exp(square_zeta_grid[z] * r.s_n * r.s_n));
    for (std::size_t i = 0; i < k; ++i) pooled_census[i] += r.census[i];
    ++replicas;
  }

  // Requires identical k, n and grids.
  void merge(const BatchSummary& o) {
    if (o.k != k || o.n != n || o.zeta_grid != zeta_grid || o.square_zeta_grid != square_zeta_grid)
      throw Error(ErrorKind::InvalidSpec, "cannot merge batch summaries with different shapes");
    for (std::size_t i = 0; i < k; ++i) {
      groups[i].merge(o.groups[i]);
      pooled_census[i] += o.pooled_census[i];
    }
    replicas += o.replicas;
  }
};

struct BatchOptions {
  std::vector<double> square_zeta_grid;
  unsigned threads = 0;  // 0: hardware concurrency
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs `work(chunk_index)` for every chunk on a small pool of threads.
template <class Work>
void parallel_chunks(std::uint64_t chunks, unsigned threads, Work&& work) {
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(threads), chunks));
  if (workers <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) work(c);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::uint64_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) work(c);
    });
  for (auto& t : pool) t.join();
}

inline BatchSummary run_batch(const SimSpec& spec, const std::vector<double>& zeta_grid,
                              const BatchOptions& options = {}) {
  validate_sim_spec(spec);
  for (double z : zeta_grid)
    if (!std::isfinite(z)) throw Error(ErrorKind::InvalidSpec, "zeta grid contains a non-finite value");
  const std::uint64_t leaves = *checked_power(spec.sd.b, spec.n);
  if (spec.replicas > kReplicaLeafBudget / leaves)
    throw Error(ErrorKind::BudgetExceeded, "replicas * b^n exceeds 2^40");

  const TreeSampler sampler(spec.sd);
  const Philox4x32 rng(spec.master_seed);
  const std::uint64_t chunks = (spec.replicas + kChunkSize - 1) / kChunkSize;
  std::vector<BatchSummary> partial(chunks);
  parallel_chunks(chunks, options.threads, [&](std::uint64_t c) {
    BatchSummary part(spec.sd.k(), spec.n, zeta_grid, options.square_zeta_grid);
    const std::uint64_t end = std::min(spec.replicas, (c + 1) * kChunkSize);
    for (std::uint64_t r = c * kChunkSize; r < end; ++r) part.add(detail::sample_replica_with(spec, sampler, rng, r));
    partial[c] = std::move(part);
  });

  BatchSummary total(spec.sd.k(), spec.n, zeta_grid, options.square_zeta_grid);
  for (const auto& p : partial) total.merge(p);
  return total;
}

struct CensusCheck {
  bool applicable = false;
  std::vector<double> empirical;
  std::vector<double> pi;
  double max_deviation = 0.0;
};

// Pooled leaf-state frequencies against pi; only meaningful for stationary roots.
inline CensusCheck census_distribution_check(const SimSpec& spec, const BatchSummary& batch) {
  CensusCheck out;
  out.pi = spec.sd.pi;
  if (!spec.root.is_stationary()) return out;
  out.applicable = true;
  std::uint64_t total = 0;
  for (auto c : batch.pooled_census) total += c;
  out.empirical.resize(batch.k);
  for (std::size_t i = 0; i < batch.k; ++i) {
    out.empirical[i] = total ? static_cast<double>(batch.pooled_census[i]) / static_cast<double>(total) : 0.0;
    out.max_deviation = std::max(out.max_deviation, std::abs(out.empirical[i] - out.pi[i]));
  }
  return out;
}

}  // namespace ksm
