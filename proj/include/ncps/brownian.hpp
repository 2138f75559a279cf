#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ncps/errors.hpp"

namespace ncps {

/// Brownian increments B(t_{k+1}) - B(t_k) on a uniform grid of n steps over
/// [0, T], stored row-major (n rows of d coordinates).
///
/// A grid is a pure function of (seed, path_index, n, d, T): each replica owns
/// an independent engine seeded from (seed, path_index), so replicas can be
/// produced in any order. Coarser resolutions of the same path come from
/// coarsen(), never from resampling.
class BrownianGrid {
 public:
  BrownianGrid() = default;

  static BrownianGrid generate(std::uint64_t seed, std::uint64_t path_index, std::size_t n,
                               std::size_t d, double horizon) {
    if (n == 0 || d == 0) throw DomainError("BrownianGrid: n and d must be positive");
    if (!(horizon > 0.0)) throw DomainError("BrownianGrid: T must be positive");
    BrownianGrid g;
    g.n_ = n;
    g.d_ = d;
    g.seed_ = seed;
    g.path_index_ = path_index;
    g.horizon_ = horizon;
    g.increments_.resize(n * d);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path_index),
                      static_cast<std::uint32_t>(path_index >> 32), 0x6e637073u};
    std::mt19937_64 engine(seq);
    std::normal_distribution<double> normal(0.0, std::sqrt(horizon / static_cast<double>(n)));
    for (double& v : g.increments_) v = normal(engine);
    return g;
  }

  /// Grid with explicitly given increments (row-major, n x d).
  static BrownianGrid from_increments(std::vector<double> increments, std::size_t d, double horizon,
                                      std::uint64_t seed = 0, std::uint64_t path_index = 0) {
    if (d == 0 || increments.empty() || increments.size() % d != 0) {
      throw DomainError("BrownianGrid: increment array is not n x d");
    }
    BrownianGrid g;
    g.d_ = d;
    g.n_ = increments.size() / d;
    g.seed_ = seed;
    g.path_index_ = path_index;
    g.horizon_ = horizon;
    g.increments_ = std::move(increments);
    return g;
  }

  /// Half-resolution grid of the same path: increment k is the sum of fine
  /// increments 2k and 2k+1.
  BrownianGrid coarsen() const {
    if (n_ % 2 != 0) throw DomainError("BrownianGrid::coarsen: odd number of steps");
    BrownianGrid c;
    c.n_ = n_ / 2;
    c.d_ = d_;
    c.seed_ = seed_;
    c.path_index_ = path_index_;
    c.horizon_ = horizon_;
    c.increments_.resize(c.n_ * d_);
    for (std::size_t k = 0; k < c.n_; ++k) {
      const double* a = &increments_[(2 * k) * d_];
      const double* b = &increments_[(2 * k + 1) * d_];
      double* out = &c.increments_[k * d_];
      for (std::size_t i = 0; i < d_; ++i) out[i] = a[i] + b[i];
    }
    return c;
  }

  /// Repeated halving down to `target_n` steps (target_n * 2^m == n).
  BrownianGrid coarsen_to(std::size_t target_n) const {
    if (target_n == 0 || n_ % target_n != 0) throw DomainError("BrownianGrid: grids do not nest");
    BrownianGrid g = *this;
    while (g.n_ > target_n) g = g.coarsen();
    if (g.n_ != target_n) throw DomainError("BrownianGrid: step ratio is not a power of two");
    return g;
  }

  std::span<const double> row(std::size_t k) const { return {&increments_[k * d_], d_}; }
  std::span<const double> increments() const { return increments_; }

  std::size_t steps() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return d_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_index() const noexcept { return path_index_; }
  double horizon() const noexcept { return horizon_; }
  double step_size() const noexcept { return horizon_ / static_cast<double>(n_); }

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t path_index_ = 0;
  double horizon_ = 1.0;
  std::vector<double> increments_;
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace ncps
