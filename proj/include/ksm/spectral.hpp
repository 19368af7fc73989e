#pragma once

// Channel validation and the spectral data of a broadcast channel:
// stationary distribution, second eigenpair (lambda, nu) normalized so that
// sum_i pi_i nu_i^2 = 1, the Kesten-Stigum product b*lambda^2, and the
// small-zeta constant floor c'.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ksm/error.hpp"

namespace ksm {

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kEigenTieTol = 1e-9;
inline constexpr double kZeroLambdaTol = 1e-12;
inline constexpr double kPhaseTol = 1e-12;
inline constexpr std::size_t kMaxStates = 64;

// Row-stochastic, irreducible k x k matrix. Only constructible through
// validate_channel.
class ChannelMatrix {
 public:
  std::size_t k() const noexcept { return k_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * k_ + j]; }
  const std::vector<double>& entries() const noexcept { return entries_; }

  Eigen::MatrixXd as_eigen() const {
    Eigen::MatrixXd m(k_, k_);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(k_);
    for (std::size_t i = 0; i < k_; ++i)
      out[i].assign(entries_.begin() + i * k_, entries_.begin() + (i + 1) * k_);
    return out;
  }

  friend ChannelMatrix validate_channel(const std::vector<std::vector<double>>& entries);

 private:
  ChannelMatrix(std::size_t k, std::vector<double> entries) : k_(k), entries_(std::move(entries)) {}

  std::size_t k_ = 0;
  std::vector<double> entries_;
};

namespace detail {

// Every state reachable from state 0 along positive entries, and state 0
// reachable from every state, iff the digraph is strongly connected.
inline bool strongly_connected(const std::vector<double>& a, std::size_t k) {
  auto reach_all = [&](bool transpose) {
    std::vector<char> seen(k, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < k; ++v) {
        double w = transpose ? a[v * k + u] : a[u * k + v];
        if (w > 0.0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
  };
  return reach_all(false) && reach_all(true);
}

}  // namespace detail

inline ChannelMatrix validate_channel(const std::vector<std::vector<double>>& entries) {
  const std::size_t k = entries.size();
  if (k < 2) throw Error(ErrorKind::TooSmall, "channel needs k >= 2 states, got " + std::to_string(k));
  if (k > kMaxStates)
    throw Error(ErrorKind::InvalidSpec, "k = " + std::to_string(k) + " exceeds the supported maximum of 64");
  std::vector<double> flat;
  flat.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    if (entries[i].size() != k)
      throw Error(ErrorKind::NotStochastic, "row " + std::to_string(i + 1) + " has " +
                                                std::to_string(entries[i].size()) + " entries, expected " +
                                                std::to_string(k));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double x = entries[i][j];
      if (!std::isfinite(x) || x < 0.0 || x > 1.0)
        throw Error(ErrorKind::NotStochastic, "row " + std::to_string(i + 1) + " has entry outside [0,1]");
      sum += x;
      flat.push_back(x);
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
      throw Error(ErrorKind::NotStochastic, "row " + std::to_string(i + 1) + " sums to " + std::to_string(sum));
  }
  if (!detail::strongly_connected(flat, k))
    throw Error(ErrorKind::NotIrreducible, "positive-entry digraph is not strongly connected");
  return ChannelMatrix(k, std::move(flat));
}

enum class Phase { KestenStigum, SubCritical, Critical };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::KestenStigum: return "KestenStigum";
    case Phase::SubCritical: return "SubCritical";
    case Phase::Critical: return "Critical";
  }
  return "Unknown";
}

struct SpectralData {
  ChannelMatrix channel;
  std::size_t b = 2;
  std::vector<double> pi;
  double lambda = 0.0;
  std::vector<double> nu;
  double ks_product = 0.0;

  std::size_t k() const noexcept { return channel.k(); }
  double nu_sup() const {
    double m = 0.0;
    for (double x : nu) m = std::max(m, std::abs(x));
    return m;
  }
};

namespace detail {

inline std::vector<double> stationary_distribution(const Eigen::MatrixXd& m) {
  const auto k = m.rows();
  // [M^T - I ; 1 ... 1] pi = [0 ; 1]
  Eigen::MatrixXd a(k + 1, k);
  a.topRows(k) = m.transpose() - Eigen::MatrixXd::Identity(k, k);
  a.row(k).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
  return {pi.data(), pi.data() + k};
}

// Null vector of (M - lambda I) with its largest component pinned to the
// guess's value, solved as a least-squares problem.
inline Eigen::VectorXd refine_eigenvector(const Eigen::MatrixXd& m, double lambda, const Eigen::VectorXd& guess) {
  const auto k = m.rows();
  Eigen::Index pin = 0;
  guess.cwiseAbs().maxCoeff(&pin);
  Eigen::MatrixXd a(k + 1, k);
  a.topRows(k) = m - lambda * Eigen::MatrixXd::Identity(k, k);
  a.row(k).setZero();
  a(k, pin) = 1.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = guess(pin);
  Eigen::VectorXd refined = a.colPivHouseholderQr().solve(rhs);
  double old_res = (m * guess - lambda * guess).cwiseAbs().maxCoeff() / guess.cwiseAbs().maxCoeff();
  double new_res = (m * refined - lambda * refined).cwiseAbs().maxCoeff() / refined.cwiseAbs().maxCoeff();
  return new_res <= old_res ? refined : guess;
}

}  // namespace detail

inline SpectralData analyze(const ChannelMatrix& channel, std::size_t b) {
  if (b < 2) throw Error(ErrorKind::InvalidSpec, "arity b must be >= 2");
  const Eigen::MatrixXd m = channel.as_eigen();
  const auto k = static_cast<Eigen::Index>(channel.k());

  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/true);
  const Eigen::VectorXcd values = solver.eigenvalues();

  // Drop the Perron eigenvalue: the real eigenvalue closest to 1.
  Eigen::Index perron = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k; ++j) {
    double d = std::abs(values(j) - std::complex<double>(1.0, 0.0));
    if (d < best) {
      best = d;
      perron = j;
    }
  }

  std::vector<Eigen::Index> order;
  for (Eigen::Index j = 0; j < k; ++j)
    if (j != perron) order.push_back(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index c) { return std::abs(values(a)) > std::abs(values(c)); });

  const std::complex<double> second = values(order.front());
  if (std::abs(second.imag()) > kEigenTieTol)
    throw Error(ErrorKind::ComplexSecondEigenvalue, "second eigenvalue has imaginary part " +
                                                        std::to_string(second.imag()));
  for (std::size_t t = 1; t < order.size(); ++t) {
    const std::complex<double> other = values(order[t]);
    if (std::abs(std::abs(other) - std::abs(second)) > kEigenTieTol) break;
    if (std::abs(other - second) > kEigenTieTol)
      throw Error(ErrorKind::ComplexSecondEigenvalue,
                  "distinct eigenvalues tie in modulus " + std::to_string(std::abs(second)));
  }
  const double lambda = second.real();
  if (std::abs(lambda) < kZeroLambdaTol)
    throw Error(ErrorKind::ZeroLambda, "|lambda| < 1e-12 makes (b lambda)^-n undefined");

  Eigen::VectorXd nu = solver.eigenvectors().col(order.front()).real();
  nu = detail::refine_eigenvector(m, lambda, nu);

  std::vector<double> pi = detail::stationary_distribution(m);

  double norm2 = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) norm2 += pi[i] * nu(i) * nu(i);
  nu /= std::sqrt(norm2);

  // Largest-magnitude entry positive; lowest index wins ties.
  Eigen::Index lead = 0;
  for (Eigen::Index i = 1; i < k; ++i)
    if (std::abs(nu(i)) > std::abs(nu(lead)) * (1.0 + 1e-12)) lead = i;
  if (nu(lead) < 0.0) nu = -nu;

  SpectralData sd{channel, b, std::move(pi), lambda, {nu.data(), nu.data() + k}, 0.0};
  sd.ks_product = static_cast<double>(b) * lambda * lambda;
  return sd;
}

inline Phase classify_phase(const SpectralData& sd) {
  if (sd.ks_product > 1.0 + kPhaseTol) return Phase::KestenStigum;
  if (sd.ks_product < 1.0 - kPhaseTol) return Phase::SubCritical;
  return Phase::Critical;
}

// Infimum of the admissible c' in the small-zeta bound:
// |nu|_inf^2 / (2 b lambda^2) * (1 - 1/(b lambda^2))^-1. Any larger value works.
inline double cprime_lower_bound(const SpectralData& sd) {
  if (classify_phase(sd) != Phase::KestenStigum)
    throw Error(ErrorKind::NotKestenStigum, "c' requires b lambda^2 > 1, got " + std::to_string(sd.ks_product));
  const double s = sd.nu_sup();
  return s * s / (2.0 * sd.ks_product) / (1.0 - 1.0 / sd.ks_product);
}

// Symmetric two-state channel with flip probability p.
inline ChannelMatrix binary_symmetric_channel(double p) {
  return validate_channel({{1.0 - p, p}, {p, 1.0 - p}});
}

}  // namespace ksm
