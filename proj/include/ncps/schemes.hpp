#pragma once

// Semi-implicit time stepping. The singular interaction is taken at the new
// time level, everything else explicitly:
//
//   x_i(k+1) - h*lambda*sum_{j != i} 1/(x_i(k+1) - x_j(k+1)) = y_i,
//   EM:       y_i = x_i + b_i(x_i) h + sigma_i(x_i) dB_i
//   Milstein: y_i = EM part + 1/2 sigma_i(x_i) sigma_i'(x_i) (dB_i^2 - h)
//
// Each new state is produced by the implicit solver and therefore stays in
// the Weyl chamber.

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncps/brownian.hpp"
#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"
#include "ncps/implicit_step.hpp"

namespace ncps {

enum class Scheme { semi_implicit_em, semi_implicit_milstein };

inline std::string_view scheme_name(Scheme s) {
  return s == Scheme::semi_implicit_em ? "semi-implicit-em" : "semi-implicit-milstein";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "semi-implicit-em") return Scheme::semi_implicit_em;
  if (name == "semi-implicit-milstein") return Scheme::semi_implicit_milstein;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

/// Per-path stepping workspace. Holds a reference to the model; not shareable
/// across threads.
class Stepper {
 public:
  Stepper(const ModelSpec& model, Scheme scheme, SolverConfig cfg = {})
      : model_(model), scheme_(scheme), cfg_(cfg), solver_(model.dimension()),
        y_(model.dimension()) {
    if (scheme == Scheme::semi_implicit_milstein) {
      if (!model.diffusion_derivative) {
        throw DomainError("Milstein scheme needs sigma' (diffusion_derivative)");
      }
      correction_.resize(model.dimension());
      for (std::size_t i = 0; i < model.dimension(); ++i) {
        correction_[i] = !(*model.diffusion_derivative)[i].is_zero();
      }
    }
  }

  void explicit_part(std::span<const double> x, std::span<const double> dB, double h,
                     std::span<double> y) const {
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i) {
      const double s = model_.diffusion[i](x[i]);
      y[i] = x[i] + model_.drift[i](x[i]) * h + s * dB[i];
      if (scheme_ == Scheme::semi_implicit_milstein && correction_[i]) {
        const double sp = (*model_.diffusion_derivative)[i](x[i]);
        y[i] += 0.5 * s * sp * (dB[i] * dB[i] - h);
      }
    }
  }

  /// x <- next state after a step of length h driven by dB.
  SolveInfo advance(std::span<double> x, std::span<const double> dB, double h) {
    explicit_part(x, dB, h, y_);
    return solver_.solve(ImplicitProblem{y_, h * model_.lambda}, cfg_, x);
  }

  const ModelSpec& model() const noexcept { return model_; }
  Scheme scheme() const noexcept { return scheme_; }

 private:
  const ModelSpec& model_;
  Scheme scheme_;
  SolverConfig cfg_;
  ImplicitSolver solver_;
  std::vector<double> y_;
  std::vector<bool> correction_;
};

namespace detail {

inline ParticleState single_step(const ParticleState& state, std::span<const double> dB, double h,
                                 const ModelSpec& model, Scheme scheme, const SolverConfig& cfg) {
  if (state.x.size() != model.dimension() || dB.size() != model.dimension()) {
    throw DomainError("step: dimension mismatch");
  }
  if (!(h > 0.0)) throw DomainError("step: h must be positive");
  require_in_chamber(state.x, "step");
  Stepper stepper(model, scheme, cfg);
  ParticleState next{state.t + h, state.x};
  stepper.advance(next.x, dB, h);
  return next;
}

}  // namespace detail

inline ParticleState step_semi_implicit_em(const ParticleState& state, std::span<const double> dB,
                                           double h, const ModelSpec& model,
                                           const SolverConfig& cfg = {}) {
  return detail::single_step(state, dB, h, model, Scheme::semi_implicit_em, cfg);
}

inline ParticleState step_semi_implicit_milstein(const ParticleState& state,
                                                 std::span<const double> dB, double h,
                                                 const ModelSpec& model,
                                                 const SolverConfig& cfg = {}) {
  return detail::single_step(state, dB, h, model, Scheme::semi_implicit_milstein, cfg);
}

/// Node times t_k = k T / n and states, row-major (n+1) x d.
struct Trajectory {
  std::size_t d = 0;
  std::vector<double> times;
  std::vector<double> states;

  std::size_t nodes() const noexcept { return times.size(); }
  std::span<const double> row(std::size_t k) const { return {&states[k * d], d}; }

  /// Header `t,x1,...,xd`, one row per node, 17 significant digits.
  void write_csv(std::ostream& os) const {
    os << "t";
    for (std::size_t i = 1; i <= d; ++i) os << ",x" << i;
    os << '\n';
    const auto old_precision = os.precision(17);
    for (std::size_t k = 0; k < nodes(); ++k) {
      os << times[k];
      for (double v : row(k)) os << ',' << v;
      os << '\n';
    }
    os.precision(old_precision);
  }
};

inline void check_grid(const ModelSpec& model, std::size_t n, const BrownianGrid& grid) {
  if (grid.steps() != n) throw DomainError("simulate_path: grid has a different step count");
  if (grid.dimension() != model.dimension()) throw DomainError("simulate_path: grid dimension differs from d");
  if (grid.horizon() != model.horizon) throw DomainError("simulate_path: grid horizon differs from T");
}

/// Invoke `on_node(k, x)` at every node k = 0..n without storing the path.
/// Solver failures are rethrown as StepFailure carrying the step index.
template <class OnNode>
void run_path(Stepper& stepper, const BrownianGrid& grid, std::span<double> x, OnNode&& on_node) {
  const ModelSpec& model = stepper.model();
  const std::size_t n = grid.steps();
  const double h = model.horizon / static_cast<double>(n);
  std::copy(model.initial.begin(), model.initial.end(), x.begin());
  on_node(std::size_t{0}, std::span<const double>(x));
  for (std::size_t k = 0; k < n; ++k) {
    try {
      stepper.advance(x, grid.row(k), h);
    } catch (const SolverError& e) {
      throw StepFailure(k, e.what());
    }
    on_node(k + 1, std::span<const double>(x));
  }
}

inline Trajectory simulate_path(const ModelSpec& model, std::size_t n, Scheme scheme,
                                const BrownianGrid& grid, const SolverConfig& cfg = {}) {
  model.validate();
  check_grid(model, n, grid);
  const std::size_t d = model.dimension();
  Trajectory traj;
  traj.d = d;
  traj.times.resize(n + 1);
  traj.states.resize((n + 1) * d);
  Stepper stepper(model, scheme, cfg);
  std::vector<double> x(d);
  run_path(stepper, grid, x, [&](std::size_t k, std::span<const double> xk) {
    traj.times[k] = model.horizon * static_cast<double>(k) / static_cast<double>(n);
    std::copy(xk.begin(), xk.end(), traj.states.begin() + static_cast<std::ptrdiff_t>(k * d));
  });
  return traj;
}

}  // namespace ncps
