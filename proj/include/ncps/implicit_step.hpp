#pragma once

// One semi-implicit step: find the unique x in the Weyl chamber with
//
//   x_i - hl * sum_{j != i} 1 / (x_i - x_j) = y_i,   i = 1..d,
//
// where hl = h * lambda and y is the explicit part of the step. The system is
// the stationarity condition of the strictly convex barrier objective
//
//   F(x) = 1/2 |x - y|^2 - hl * sum_{i<j} log(x_j - x_i),
//
// which is minimized by damped Newton with a fraction-to-boundary safeguard.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"

namespace ncps {

/// Explicit part y (any order, finite) and the product hl = h * lambda.
/// `y` is a view; the caller owns the storage.
struct ImplicitProblem {
  std::span<const double> y;
  double h_lambda = 0.0;
};

struct SolverConfig {
  /// Gradient sup-norm threshold, multiplied by max(1, |y|_inf) at solve time.
  double grad_tol = 1e-12;
  std::size_t max_iters = 100;
  /// Newton steps stop at this fraction of the distance to the chamber boundary.
  double boundary_fraction = 0.9;
  double armijo_c = 1e-4;

  double effective_tolerance(std::span<const double> y) const {
    double ymax = 1.0;
    for (double v : y) ymax = std::max(ymax, std::abs(v));
    return grad_tol * ymax;
  }
};

struct SolveInfo {
  std::size_t iterations = 0;
  double gradient_norm = 0.0;  ///< sup-norm of the final gradient
  double tolerance = 0.0;
  /// Newton stalled at the rounding floor of x before reaching `tolerance`.
  bool precision_limited = false;
};

struct BarrierValue {
  double value = 0.0;
  std::vector<double> gradient;
};

namespace detail {

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

/// F(x); +inf outside the chamber.
inline double barrier_value(std::span<const double> x, std::span<const double> y, double hl) {
  const std::size_t d = x.size();
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = x[i] - y[i];
    quad += r * r;
  }
  double logs = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double gap = x[j] - x[i];
      if (!(gap > 0.0)) return std::numeric_limits<double>::infinity();
      logs += std::log(gap);
    }
  }
  return 0.5 * quad - hl * logs;
}

/// grad_i = x_i - y_i - hl * sum_{j != i} 1 / (x_i - x_j)
inline void barrier_gradient(std::span<const double> x, std::span<const double> y, double hl,
                             std::span<double> grad) {
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) grad[i] = x[i] - y[i];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double t = hl / (x[i] - x[j]);
      grad[i] -= t;
      grad[j] += t;
    }
  }
}

/// Sort and spread clusters whose consecutive gaps are below eps so that the
/// start point is strictly interior. Cluster means are preserved.
inline void inflate_clusters(std::span<double> x, double eps) {
  const std::size_t d = x.size();
  const double detect = eps * (1.0 - 1e-6);
  for (std::size_t pass = 0; pass <= d; ++pass) {
    bool changed = false;
    std::size_t i = 0;
    while (i < d) {
      std::size_t j = i;
      while (j + 1 < d && x[j + 1] - x[j] < detect) ++j;
      if (j > i) {
        double mean = 0.0;
        for (std::size_t k = i; k <= j; ++k) mean += x[k];
        mean /= static_cast<double>(j - i + 1);
        const double mid = 0.5 * static_cast<double>(j - i);
        for (std::size_t k = i; k <= j; ++k) {
          x[k] = mean + (static_cast<double>(k - i) - mid) * eps;
        }
        changed = true;
      }
      i = j + 1;
    }
    if (!changed) return;
  }
}

}  // namespace detail

/// Minimum-gap floor used when building the Newton start point.
inline double initial_gap_floor(double h_lambda) {
  return std::max(1e-8, std::sqrt(h_lambda) * 1e-4);
}

/// Sorted y with tight clusters spread to the gap floor.
inline std::vector<double> initial_point(std::span<const double> y, double h_lambda) {
  std::vector<double> x(y.begin(), y.end());
  std::sort(x.begin(), x.end());
  detail::inflate_clusters(x, initial_gap_floor(h_lambda));
  return x;
}

inline BarrierValue barrier_objective(std::span<const double> x, const ImplicitProblem& prob) {
  require_in_chamber(x, "barrier_objective");
  if (x.size() != prob.y.size()) throw DomainError("barrier_objective: dimension mismatch");
  BarrierValue out;
  out.value = detail::barrier_value(x, prob.y, prob.h_lambda);
  out.gradient.resize(x.size());
  detail::barrier_gradient(x, prob.y, prob.h_lambda, out.gradient);
  return out;
}

/// H_ii = 1 + hl sum_{j != i} 1/(x_i-x_j)^2, H_ij = -hl/(x_i-x_j)^2.
inline Eigen::MatrixXd barrier_hessian(std::span<const double> x, double h_lambda) {
  const auto d = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double diff = x[i] - x[j];
      const double w = h_lambda / (diff * diff);
      h(i, i) += w;
      h(j, j) += w;
      h(i, j) = -w;
      h(j, i) = -w;
    }
  }
  return h;
}

/// Reusable Newton workspace. One instance per concurrent solve.
class ImplicitSolver {
 public:
  explicit ImplicitSolver(std::size_t d = 0) { resize(d); }

  /// One damped Newton iteration on x (in place). Returns false when the
  /// gradient already vanishes exactly.
  bool newton_iteration(std::span<double> x, const ImplicitProblem& prob,
                        const SolverConfig& cfg) {
    resize(x.size());
    detail::barrier_gradient(x, prob.y, prob.h_lambda, span_of(grad_));
    return step_from_gradient(x, prob, cfg);
  }

  SolveInfo solve(const ImplicitProblem& prob, const SolverConfig& cfg, std::span<double> x) {
    const std::size_t d = prob.y.size();
    if (x.size() != d) throw DomainError("solve_implicit: output dimension mismatch");
    if (!detail::all_finite(prob.y)) throw SolverError("solve_implicit: non-finite explicit part");
    if (!(prob.h_lambda >= 0.0) || !std::isfinite(prob.h_lambda)) {
      throw SolverError("solve_implicit: h*lambda must be finite and >= 0");
    }
    resize(d);
    std::copy(prob.y.begin(), prob.y.end(), x.begin());
    std::sort(x.begin(), x.end());

    SolveInfo info;
    info.tolerance = cfg.effective_tolerance(prob.y);
    if (prob.h_lambda == 0.0) {
      if (!is_strictly_increasing(x)) {
        throw SolverError("solve_implicit: tied entries with h*lambda = 0 have no chamber solution");
      }
      return info;
    }
    detail::inflate_clusters(x, initial_gap_floor(prob.h_lambda));

    for (std::size_t it = 0;; ++it) {
      detail::barrier_gradient(x, prob.y, prob.h_lambda, span_of(grad_));
      info.gradient_norm = grad_.cwiseAbs().maxCoeff();
      info.iterations = it;
      if (info.gradient_norm <= info.tolerance) {
        if (it > 0) polish(x, prob, info);
        return info;
      }
      if (it == cfg.max_iters) break;
      prev_.assign(x.begin(), x.end());
      step_from_gradient(x, prob, cfg);
      if (stalled(x)) {
        // The step no longer moves x at working precision: accept if the
        // gradient is within what rounding of x can produce, else give up.
        detail::barrier_gradient(x, prob.y, prob.h_lambda, span_of(grad_));
        info.gradient_norm = grad_.cwiseAbs().maxCoeff();
        info.iterations = it + 1;
        if (info.gradient_norm <= info.tolerance) return info;
        if (info.gradient_norm <= rounding_floor(x, prob.h_lambda)) {
          info.precision_limited = true;
          return info;
        }
        throw SolverError("solve_implicit: Newton stalled with |grad| = " +
                          std::to_string(info.gradient_norm) + " above tolerance");
      }
    }
    throw SolverError("solve_implicit: no convergence after " + std::to_string(cfg.max_iters) +
                      " Newton iterations (|grad| = " + std::to_string(info.gradient_norm) + ")");
  }

 private:
  void resize(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    if (grad_.size() == n) return;
    grad_.resize(n);
    dir_.resize(n);
    hess_.resize(n, n);
    trial_.resize(d);
    prev_.resize(d);
    llt_ = Eigen::LLT<Eigen::MatrixXd>(n);
  }

  bool stalled(std::span<const double> x) const {
    double scale = 0.0, change = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      scale = std::max(scale, std::abs(x[i]));
      change = std::max(change, std::abs(x[i] - prev_[i]));
    }
    return change <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale);
  }

  /// Gradient error caused by rounding x to working precision: eps |x| times
  /// the largest Hessian row sum.
  static double rounding_floor(std::span<const double> x, double hl) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double row = 1.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i) continue;
        const double diff = x[i] - x[j];
        row += 2.0 * hl / (diff * diff);
      }
      worst = std::max(worst, row * std::max(1.0, std::abs(x[i])));
    }
    return 64.0 * std::numeric_limits<double>::epsilon() * worst;
  }

  // One chord step with the factorization of the last Newton iteration. Near
  // the solution this squares the error again at the cost of a back-solve.
  void polish(std::span<double> x, const ImplicitProblem& prob, SolveInfo& info) {
    const std::size_t d = x.size();
    if (info.gradient_norm == 0.0) return;
    dir_ = llt_.solve(-grad_);
    if (!dir_.allFinite()) return;
    for (std::size_t i = 0; i < d; ++i) trial_[i] = x[i] + dir_[static_cast<Eigen::Index>(i)];
    if (!is_strictly_increasing(trial_)) return;
    detail::barrier_gradient(trial_, prob.y, prob.h_lambda, span_of(dir_));
    const double norm = dir_.cwiseAbs().maxCoeff();
    if (norm <= info.gradient_norm) {
      std::copy(trial_.begin(), trial_.end(), x.begin());
      info.gradient_norm = norm;
    }
  }

  static std::span<double> span_of(Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
  }

  // Expects grad_ to hold the gradient at x.
  bool step_from_gradient(std::span<double> x, const ImplicitProblem& prob,
                          const SolverConfig& cfg) {
    const std::size_t d = x.size();
    const double hl = prob.h_lambda;
    if (grad_.cwiseAbs().maxCoeff() == 0.0) return false;

    hess_.setIdentity();
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) {
        const double diff = x[i] - x[j];
        const double w = hl / (diff * diff);
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        hess_(ii, ii) += w;
        hess_(jj, jj) += w;
        hess_(ii, jj) = -w;
        hess_(jj, ii) = -w;
      }
    }
    llt_.compute(hess_);
    if (llt_.info() != Eigen::Success) {
      throw SolverError("newton_step: Hessian factorization failed (near-collision)");
    }
    dir_ = llt_.solve(-grad_);
    if (!dir_.allFinite()) throw SolverError("newton_step: non-finite Newton direction");

    // Largest step keeping every consecutive gap positive.
    double alpha_max = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < d; ++i) {
      const double shrink = dir_[static_cast<Eigen::Index>(i)] - dir_[static_cast<Eigen::Index>(i + 1)];
      if (shrink > 0.0) alpha_max = std::min(alpha_max, (x[i + 1] - x[i]) / shrink);
    }
    double alpha = std::min(1.0, cfg.boundary_fraction * alpha_max);

    // F / min(1, hl) is self-concordant; below decrement 1/4 the full step
    // is inside the chamber and decreases F, so no line search is needed.
    const double slope = grad_.dot(dir_);
    const double decrement_sq = -slope / std::min(1.0, hl);
    if (decrement_sq < 1.0 / 16.0) {
      for (std::size_t i = 0; i < d; ++i) x[i] += alpha * dir_[static_cast<Eigen::Index>(i)];
      return true;
    }

    const double f0 = detail::barrier_value(x, prob.y, hl);
    for (int k = 0; k < 64; ++k) {
      for (std::size_t i = 0; i < d; ++i) trial_[i] = x[i] + alpha * dir_[static_cast<Eigen::Index>(i)];
      const double f1 = detail::barrier_value(trial_, prob.y, hl);
      if (f1 <= f0 + cfg.armijo_c * alpha * slope) {
        std::copy(trial_.begin(), trial_.end(), x.begin());
        return true;
      }
      alpha *= 0.5;
    }
    throw SolverError("newton_step: line search failed to decrease the objective");
  }

  Eigen::VectorXd grad_;
  Eigen::VectorXd dir_;
  Eigen::MatrixXd hess_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::vector<double> trial_;
  std::vector<double> prev_;
};

inline std::vector<double> solve_implicit(const ImplicitProblem& prob, const SolverConfig& cfg = {}) {
  ImplicitSolver solver(prob.y.size());
  std::vector<double> x(prob.y.size());
  solver.solve(prob, cfg, x);
  return x;
}

/// A single safeguarded Newton step from x.
inline std::vector<double> newton_step(std::span<const double> x, const ImplicitProblem& prob,
                                       const SolverConfig& cfg = {}) {
  require_in_chamber(x, "newton_step");
  if (x.size() != prob.y.size()) throw DomainError("newton_step: dimension mismatch");
  std::vector<double> out(x.begin(), x.end());
  ImplicitSolver solver(x.size());
  solver.newton_iteration(out, prob, cfg);
  return out;
}

}  // namespace ncps
