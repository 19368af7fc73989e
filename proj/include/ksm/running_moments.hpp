#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace ksm {

// Streaming central moments up to order four with a pairwise merge
// (Pebay 2008). Merging in a fixed order gives bit-reproducible results.
class RunningMoments {
 public:
  void add(double x) noexcept {
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * n1;
    mean_ += delta_n;
    m4_ += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2_ - 4.0 * delta_n * m3_;
    m3_ += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2_;
    m2_ += term1;
  }

  void merge(const RunningMoments& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double n = na + nb;
    const double delta = o.mean_ - mean_;
    const double d2 = delta * delta, d3 = d2 * delta, d4 = d2 * d2;
    const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
    const double m3 = m3_ + o.m3_ + d3 * na * nb * (na - nb) / (n * n) + 3.0 * delta * (na * o.m2_ - nb * m2_) / n;
    const double m4 = m4_ + o.m4_ + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                      6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) + 4.0 * delta * (na * o.m3_ - nb * m3_) / n;
    mean_ = (na * mean_ + nb * o.mean_) / n;
    m2_ = m2;
    m3_ = m3;
    m4_ = m4;
    n_ += o.n_;
  }

  std::uint64_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  // Whether an unbiased variance is defined (needs two samples).
  bool variance_defined() const noexcept { return n_ >= 2; }
  double variance() const noexcept { return n_ >= 2 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double second_raw_moment() const noexcept {
    return n_ == 0 ? 0.0 : m2_ / static_cast<double>(n_) + mean_ * mean_;
  }
  double standard_error() const noexcept {
    return n_ >= 2 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  double skewness() const noexcept {
    if (n_ < 2 || m2_ <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(n_);
    return std::sqrt(n) * m3_ / std::pow(m2_, 1.5);
  }
  double excess_kurtosis() const noexcept {
    if (n_ < 2 || m2_ <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(n_);
    return n * m4_ / (m2_ * m2_) - 3.0;
  }
  // Large-sample standard errors of the sample skewness / excess kurtosis.
  double skewness_se() const noexcept {
    const double n = static_cast<double>(n_);
    return n_ > 3 ? std::sqrt(6.0 * n * (n - 1.0) / ((n - 2.0) * (n + 1.0) * (n + 3.0))) : 0.0;
  }
  double excess_kurtosis_se() const noexcept {
    const double n = static_cast<double>(n_);
    return n_ > 3 ? 2.0 * skewness_se() * std::sqrt((n * n - 1.0) / ((n - 3.0) * (n + 5.0))) : 0.0;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
};

}  // namespace ksm
