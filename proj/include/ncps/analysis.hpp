#pragma once

// Monte Carlo estimators on top of the schemes: gap negative moments, even
// moments of |X|, coupled strong-error curves and log-log rate fits.
//
// Every estimator is a deterministic function of its inputs and the seed.
// Path p always uses BrownianGrid::generate(seed, p, ...), per-path results
// are stored by path index, and reductions run in path (or block) order, so
// the thread count never changes a result bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ncps/brownian.hpp"
#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"
#include "ncps/parallel.hpp"
#include "ncps/schemes.hpp"
#include "ncps/statistics.hpp"

namespace ncps {

struct RunOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SolverConfig solver{};
};

struct MomentEstimate {
  std::string functional;  ///< e.g. "gap_neg_1_2", "norm_2q"
  double exponent = 0.0;   ///< p for gap moments, q for norm moments
  double time = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t nonfinite = 0;  ///< summands that overflowed or were not finite

  bool valid() const noexcept { return nonfinite == 0; }
  std::string flags() const {
    return valid() ? std::string("ok") : "overflow=" + std::to_string(nonfinite);
  }
};

/// Zero-based particle pair (i < j).
struct ParticlePair {
  std::size_t i = 0;
  std::size_t j = 1;
};

// ---------------------------------------------------------------------------
// Per-path sampling engine
// ---------------------------------------------------------------------------

/// Functional values per path and node, laid out [path][node].
struct PathSamples {
  std::size_t n_paths = 0;
  std::size_t n_nodes = 0;
  std::vector<double> values;

  double at(std::size_t path, std::size_t node) const { return values[path * n_nodes + node]; }

  /// Statistics over the first `paths` replicas at one node, in path order.
  Accumulator reduce(std::size_t node, std::size_t paths) const {
    Accumulator acc;
    for (std::size_t p = 0; p < paths; ++p) acc.add(at(p, node));
    return acc;
  }
};

/// Map each requested time to its node index on the n-step grid over [0, T].
inline std::vector<std::size_t> node_indices(std::span<const double> times, double horizon,
                                             std::size_t n_steps) {
  std::vector<std::size_t> out;
  out.reserve(times.size());
  for (double t : times) {
    if (!(t >= 0.0) || t > horizon * (1.0 + 1e-12)) {
      throw DomainError("estimator: time " + std::to_string(t) + " is outside [0, T]");
    }
    const double k = t / horizon * static_cast<double>(n_steps);
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-9 * std::max(1.0, k)) {
      throw DomainError("estimator: time " + std::to_string(t) + " is not a node of the " +
                        std::to_string(n_steps) + "-step grid");
    }
    out.push_back(static_cast<std::size_t>(kr));
  }
  return out;
}

/// Simulate n_paths trajectories and record f(x(t_k)) for every requested node.
template <class Functional>
PathSamples sample_paths(const ModelSpec& model, Scheme scheme, std::size_t n_steps,
                         std::span<const std::size_t> nodes, std::size_t n_paths,
                         const RunOptions& opt, Functional f) {
  model.validate();
  if (n_steps == 0) throw DomainError("estimator: n_steps must be positive");
  PathSamples out;
  out.n_paths = n_paths;
  out.n_nodes = nodes.size();
  out.values.resize(n_paths * nodes.size());

  constexpr std::size_t block = 64;
  const std::size_t n_blocks = (n_paths + block - 1) / block;
  const std::size_t d = model.dimension();
  parallel_for_blocks(n_blocks, opt.threads, [&](std::size_t b) {
    Stepper stepper(model, scheme, opt.solver);
    std::vector<double> x(d);
    const std::size_t end = std::min(n_paths, (b + 1) * block);
    for (std::size_t p = b * block; p < end; ++p) {
      const auto grid = BrownianGrid::generate(opt.seed, p, n_steps, d, model.horizon);
      double* row = &out.values[p * nodes.size()];
      run_path(stepper, grid, x, [&](std::size_t k, std::span<const double> xk) {
        for (std::size_t m = 0; m < nodes.size(); ++m) {
          if (nodes[m] == k) row[m] = f(xk);
        }
      });
    }
  });
  return out;
}

inline MomentEstimate make_estimate(std::string functional, double exponent, double time,
                                    const Accumulator& acc) {
  MomentEstimate e;
  e.functional = std::move(functional);
  e.exponent = exponent;
  e.time = time;
  e.value = acc.mean();
  e.std_error = acc.std_error();
  e.n_paths = acc.count() + acc.nonfinite();
  e.nonfinite = acc.nonfinite();
  return e;
}

inline std::string gap_functional_name(ParticlePair pair) {
  return "gap_neg_" + std::to_string(pair.i + 1) + "_" + std::to_string(pair.j + 1);
}

// ---------------------------------------------------------------------------
// Moment estimators
// ---------------------------------------------------------------------------

/// E[(X_j(t) - X_i(t))^{-p}] at each requested time, from semi-implicit EM
/// paths with n_steps over [0, T]. Negative p gives positive gap moments.
inline std::vector<MomentEstimate> estimate_gap_negative_moments(
    const ModelSpec& model, double p, std::span<const double> times, ParticlePair pair,
    std::size_t n_steps, std::size_t n_paths, const RunOptions& opt = {}) {
  if (!(pair.i < pair.j) || pair.j >= model.dimension()) {
    throw DomainError("estimate_gap_negative_moment: need 0 <= i < j < d");
  }
  const auto nodes = node_indices(times, model.horizon, n_steps);
  const auto samples =
      sample_paths(model, Scheme::semi_implicit_em, n_steps, nodes, n_paths, opt,
                   [&](std::span<const double> x) { return std::pow(x[pair.j] - x[pair.i], -p); });
  std::vector<MomentEstimate> out;
  for (std::size_t m = 0; m < nodes.size(); ++m) {
    out.push_back(make_estimate(gap_functional_name(pair), p, times[m], samples.reduce(m, n_paths)));
  }
  return out;
}

inline MomentEstimate estimate_gap_negative_moment(const ModelSpec& model, double p, double t,
                                                   ParticlePair pair, std::size_t n_steps,
                                                   std::size_t n_paths,
                                                   const RunOptions& opt = {}) {
  const double times[] = {t};
  return estimate_gap_negative_moments(model, p, times, pair, n_steps, n_paths, opt).front();
}

/// E[|X(t)|^{2q}] at each requested time.
inline std::vector<MomentEstimate> estimate_even_moments(const ModelSpec& model, double q,
                                                         std::span<const double> times,
                                                         std::size_t n_steps, std::size_t n_paths,
                                                         const RunOptions& opt = {}) {
  if (!(q > 0.0)) throw DomainError("estimate_even_moment: q must be positive");
  const auto nodes = node_indices(times, model.horizon, n_steps);
  const auto samples = sample_paths(model, Scheme::semi_implicit_em, n_steps, nodes, n_paths, opt,
                                    [&](std::span<const double> x) {
                                      double s = 0.0;
                                      for (double v : x) s += v * v;
                                      return q == 1.0 ? s : std::pow(s, q);
                                    });
  std::vector<MomentEstimate> out;
  for (std::size_t m = 0; m < nodes.size(); ++m) {
    out.push_back(make_estimate("norm_2q", q, times[m], samples.reduce(m, n_paths)));
  }
  return out;
}

inline MomentEstimate estimate_even_moment(const ModelSpec& model, double q, double t,
                                           std::size_t n_steps, std::size_t n_paths,
                                           const RunOptions& opt = {}) {
  const double times[] = {t};
  return estimate_even_moments(model, q, times, n_steps, n_paths, opt).front();
}

// ---------------------------------------------------------------------------
// Rates
// ---------------------------------------------------------------------------

struct RateFit {
  std::vector<std::size_t> ns;
  std::vector<double> errors;      ///< mean-square errors
  std::vector<double> std_errors;  ///< standard errors of those means
  std::vector<std::size_t> worst_nodes;  ///< coarse node attaining the sup, per n
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of log(error) on log(n).
inline RateFit fit_loglog(std::span<const std::size_t> ns, std::span<const double> errors) {
  if (ns.size() != errors.size()) throw DomainError("fit_loglog: length mismatch");
  if (ns.size() < 3) throw DomainError("fit_loglog: need at least three points");
  const double m = static_cast<double>(ns.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (ns[k] == 0 || !(errors[k] > 0.0) || !std::isfinite(errors[k])) {
      throw DomainError("fit_loglog: steps and errors must be positive");
    }
    sx += std::log(static_cast<double>(ns[k]));
    sy += std::log(errors[k]);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    const double dx = std::log(static_cast<double>(ns[k])) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(errors[k]) - my);
  }
  if (sxx == 0.0) throw DomainError("fit_loglog: all step counts are equal");
  RateFit fit;
  fit.ns.assign(ns.begin(), ns.end());
  fit.errors.assign(errors.begin(), errors.end());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

/// For one Brownian path at the fine resolution, the squared Euclidean
/// deviation |X_ref(t_k) - X_n(t_k)|^2 at coarse nodes k = 1..n for each n,
/// where X_ref runs on `fine` and X_n on its coarsened grid. Any n dividing
/// the fine step count by a power of two is allowed, including n_ref itself.
inline std::vector<std::vector<double>> coupled_squared_errors(const ModelSpec& model,
                                                               Scheme scheme,
                                                               const BrownianGrid& fine,
                                                               std::span<const std::size_t> ns,
                                                               const SolverConfig& cfg = {}) {
  const std::size_t d = model.dimension();
  const std::size_t n_ref = fine.steps();
  Stepper stepper(model, scheme, cfg);
  std::vector<double> ref((n_ref + 1) * d);
  std::vector<double> x(d);
  run_path(stepper, fine, x, [&](std::size_t k, std::span<const double> xk) {
    std::copy(xk.begin(), xk.end(), ref.begin() + static_cast<std::ptrdiff_t>(k * d));
  });

  std::vector<std::vector<double>> out;
  out.reserve(ns.size());
  for (std::size_t n : ns) {
    const auto coarse = fine.coarsen_to(n);
    const std::size_t ratio = n_ref / n;
    std::vector<double> errs(n);
    run_path(stepper, coarse, x, [&](std::size_t k, std::span<const double> xk) {
      if (k == 0) return;
      const double* r = &ref[k * ratio * d];
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = r[i] - xk[i];
        s += e * e;
      }
      errs[k - 1] = s;
    });
    out.push_back(std::move(errs));
  }
  return out;
}

inline void check_nesting(std::span<const std::size_t> ns, std::size_t n_ref) {
  if (ns.empty()) throw DomainError("strong_error_curve: empty step list");
  if (!is_power_of_two(n_ref)) throw DomainError("strong_error_curve: n_ref must be a power of two");
  for (std::size_t n : ns) {
    if (!is_power_of_two(n)) throw DomainError("strong_error_curve: step counts must be powers of two");
    if (n_ref % n != 0) throw DomainError("strong_error_curve: n does not divide n_ref");
    if (n_ref < 16 * n) throw DomainError("strong_error_curve: n_ref must be >= 16 * max(ns)");
  }
}

/// sup over coarse nodes of E|X_ref - X_n|^2 for each n, with X_ref the
/// n_ref-step solution on the same Brownian path, then a log-log fit.
inline RateFit strong_error_curve(const ModelSpec& model, Scheme scheme,
                                  std::span<const std::size_t> ns, std::size_t n_ref,
                                  std::size_t n_paths, const RunOptions& opt = {}) {
  model.validate();
  check_nesting(ns, n_ref);
  if (n_paths < 2) throw DomainError("strong_error_curve: need at least two paths");
  const std::size_t d = model.dimension();

  std::size_t total_nodes = 0;
  std::vector<std::size_t> offset;
  for (std::size_t n : ns) {
    offset.push_back(total_nodes);
    total_nodes += n;
  }

  constexpr std::size_t block = 64;
  const std::size_t n_blocks = (n_paths + block - 1) / block;
  std::vector<std::vector<Accumulator>> partial(n_blocks, std::vector<Accumulator>(total_nodes));
  parallel_for_blocks(n_blocks, opt.threads, [&](std::size_t b) {
    auto& acc = partial[b];
    const std::size_t end = std::min(n_paths, (b + 1) * block);
    for (std::size_t p = b * block; p < end; ++p) {
      const auto fine = BrownianGrid::generate(opt.seed, p, n_ref, d, model.horizon);
      const auto errs = coupled_squared_errors(model, scheme, fine, ns, opt.solver);
      for (std::size_t m = 0; m < ns.size(); ++m) {
        for (std::size_t k = 0; k < ns[m]; ++k) acc[offset[m] + k].add(errs[m][k]);
      }
    }
  });

  std::vector<Accumulator> total(total_nodes);
  for (const auto& part : partial) {
    for (std::size_t k = 0; k < total_nodes; ++k) total[k].merge(part[k]);
  }

  std::vector<double> mse, se;
  std::vector<std::size_t> worst;
  for (std::size_t m = 0; m < ns.size(); ++m) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < ns[m]; ++k) {
      if (total[offset[m] + k].mean() > total[offset[m] + arg].mean()) arg = k;
    }
    mse.push_back(total[offset[m] + arg].mean());
    se.push_back(total[offset[m] + arg].std_error());
    worst.push_back(arg + 1);
  }
  RateFit fit = fit_loglog(ns, mse);
  fit.std_errors = std::move(se);
  fit.worst_nodes = std::move(worst);
  return fit;
}

// ---------------------------------------------------------------------------
// Negative-moment stability
// ---------------------------------------------------------------------------

/// Threshold for a model: uses the analytic sup of sigma^2 when the
/// coefficients are catalog forms, otherwise samples [-sample_radius, sample_radius].
inline double model_negative_moment_threshold(const ModelSpec& model, double sample_radius = 50.0) {
  double s2;
  if (auto a = model.sup_sigma_sq()) {
    s2 = *a;
  } else {
    std::vector<double> grid(2001);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      grid[k] = -sample_radius + 2.0 * sample_radius * static_cast<double>(k) / 2000.0;
    }
    s2 = validate_assumptions(model, grid, 0).sup_sigma_sq;
  }
  return negative_moment_threshold(model.lambda, s2);
}

/// Whether order p is covered by the boundedness result. With b = 0 the
/// endpoint is included; with drift present it is excluded.
inline bool negative_moment_covered(const ModelSpec& model, double p) {
  if (p <= 0.0) return true;
  const double thr = model_negative_moment_threshold(model);
  return model.drift_is_zero() ? p <= thr : p < thr;
}

struct StabilityScan {
  std::vector<MomentEstimate> estimates;  ///< one per schedule entry
  double threshold = 0.0;
  bool inside_guarantee = false;

  std::string label() const { return inside_guarantee ? "inside guarantee" : "outside guarantee"; }
  double ratio() const { return estimates.back().value / estimates.front().value; }
  std::size_t nonfinite() const {
    std::size_t n = 0;
    for (const auto& e : estimates) n = std::max(n, e.nonfinite);
    return n;
  }
};

/// Estimates of E[gap^{-p}] at time t over the nested path counts in
/// `schedule` (the first N replicas of one stream), to see whether they settle.
inline StabilityScan negative_moment_stability_scan(const ModelSpec& model, double p, double t,
                                                    ParticlePair pair,
                                                    std::span<const std::size_t> schedule,
                                                    std::size_t n_steps,
                                                    const RunOptions& opt = {}) {
  if (schedule.empty()) throw DomainError("stability scan: empty path schedule");
  if (!std::is_sorted(schedule.begin(), schedule.end()) || schedule.front() == 0) {
    throw DomainError("stability scan: schedule must be increasing and positive");
  }
  if (!(pair.i < pair.j) || pair.j >= model.dimension()) {
    throw DomainError("stability scan: need 0 <= i < j < d");
  }
  StabilityScan scan;
  scan.threshold = model_negative_moment_threshold(model);
  scan.inside_guarantee = negative_moment_covered(model, p);

  const double times[] = {t};
  const auto nodes = node_indices(times, model.horizon, n_steps);
  const std::size_t n_max = schedule.back();
  const auto samples =
      sample_paths(model, Scheme::semi_implicit_em, n_steps, nodes, n_max, opt,
                   [&](std::span<const double> x) { return std::pow(x[pair.j] - x[pair.i], -p); });
  for (std::size_t n : schedule) {
    scan.estimates.push_back(make_estimate(gap_functional_name(pair), p, t, samples.reduce(0, n)));
  }
  return scan;
}

}  // namespace ncps
