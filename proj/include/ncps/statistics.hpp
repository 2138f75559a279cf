#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

namespace ncps {

/// Streaming mean / variance (Welford, merged with Chan's update). Non-finite
/// samples are counted and excluded from the moments.
class Accumulator {
 public:
  void add(double x) {
    if (!std::isfinite(x)) {
      ++nonfinite_;
      return;
    }
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  void merge(const Accumulator& other) {
    nonfinite_ += other.nonfinite_;
    if (other.n_ == 0) return;
    if (n_ == 0) {
      n_ = other.n_;
      mean_ = other.mean_;
      m2_ = other.m2_;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
    const double n = na + nb;
    const double delta = other.mean_ - mean_;
    mean_ += delta * (nb / n);
    m2_ += other.m2_ + delta * delta * (na * nb / n);
    n_ += other.n_;
  }

  std::size_t count() const noexcept { return n_; }
  std::size_t nonfinite() const noexcept { return nonfinite_; }
  double mean() const noexcept { return n_ > 0 ? mean_ : std::numeric_limits<double>::quiet_NaN(); }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double std_error() const noexcept {
    return n_ > 0 ? stddev() / std::sqrt(static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  std::size_t nonfinite_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace ncps
