#pragma once

// Independent reference values. Nothing here calls the implicit solver or
// the schemes; these routines exist to check them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"

namespace ncps::oracles {

struct OracleResult {
  std::string name;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline OracleResult compare(std::string name, double expected, double observed, double tolerance) {
  return {std::move(name), expected, observed, tolerance,
          std::abs(expected - observed) <= tolerance};
}

/// E|X(t)|^2 = |v|^2 + (lambda d (d-1) + sum_i sigma_i^2) t, exact for b = 0
/// and constant sigma (the interaction contributes x . g = d(d-1)/2 per unit lambda).
inline double exact_second_moment_law(const ModelSpec& model, double t) {
  if (!model.drift_is_zero()) throw DomainError("exact_second_moment_law: needs b == 0");
  if (!model.diffusion_is_constant()) throw DomainError("exact_second_moment_law: needs constant sigma");
  const double d = static_cast<double>(model.dimension());
  double v2 = 0.0;
  for (double v : model.initial) v2 += v * v;
  double s2 = 0.0;
  for (const auto& s : model.diffusion) s2 += *s.constant_value() * *s.constant_value();
  return v2 + (model.lambda * d * (d - 1.0) + s2) * t;
}

/// d = 2, constant sigma: the gap Y solves dY = 2 lambda / Y dt + sqrt(2) sigma dW,
/// so Z = Y^2 has drift 4 lambda + 2 sigma^2 and E Z(t) = gap0^2 + (4 lambda + 2 sigma^2) t.
inline double besq_gap_mean(double lambda, double sigma, double gap0, double t) {
  return gap0 * gap0 + (4.0 * lambda + 2.0 * sigma * sigma) * t;
}

/// Noise-free two-particle semi-implicit step, iterated: the new gap is the
/// positive root of g^2 - g_prev g - 2 h lambda = 0.
inline double deterministic_gap_recursion(double gap0, double h, double lambda, std::size_t n) {
  if (!(gap0 > 0.0)) throw DomainError("deterministic_gap_recursion: gap0 must be positive");
  double g = gap0;
  for (std::size_t k = 0; k < n; ++k) g = 0.5 * (g + std::sqrt(g * g + 8.0 * h * lambda));
  return g;
}

/// g' = 2 lambda / g, g(0) = gap0.
inline double ode_gap_solution(double gap0, double lambda, double t) {
  return std::sqrt(gap0 * gap0 + 4.0 * lambda * t);
}

/// Closed-form solution of the two-particle implicit system
///   x_1 = y_1 - hl / g,  x_2 = y_2 + hl / g,  g = x_2 - x_1 > 0,
/// i.e. g^2 - (y_2 - y_1) g - 2 hl = 0. The root is taken in the
/// cancellation-free form for either sign of y_2 - y_1.
inline std::pair<double, double> two_particle_step(double y1, double y2, double hl) {
  const double delta = y2 - y1;
  const double disc = std::sqrt(delta * delta + 8.0 * hl);
  const double g = delta >= 0.0 ? 0.5 * (delta + disc) : 4.0 * hl / (disc - delta);
  return {y1 - hl / g, y2 + hl / g};
}

/// Central differences of f at x. Every coordinate perturbation must keep
/// the point in the chamber, so all consecutive gaps must exceed 2*step.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double step) {
  if (!(step > 0.0)) throw DomainError("finite_difference_gradient: step must be positive");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] - x[i - 1] > 2.0 * step)) {
      throw DomainError("finite_difference_gradient: step too large for the gap structure");
    }
  }
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = xp[i];
    xp[i] = xi + step;
    const double fp = f(xp);
    xp[i] = xi - step;
    const double fm = f(xp);
    xp[i] = xi;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace ncps::oracles
