#pragma once

// Model of d ordered particles on the real line with pairwise repulsion
//
//   dX_i = sum_{j != i} lambda / (X_i - X_j) dt + b_i(X_i) dt + sigma_i(X_i) dB_i,
//   X(0) = v, v_1 < ... < v_d,
//
// together with drift evaluation, assumption checks on the coefficients and
// the admissible negative-moment order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ncps/errors.hpp"

namespace ncps {

// ---------------------------------------------------------------------------
// Coefficient functions
// ---------------------------------------------------------------------------

enum class FunctionForm { zero, constant, affine, sine, cosine, custom };

/// Scalar coefficient b_i or sigma_i. Catalog forms carry their analytic
/// description (and derivative); custom forms wrap an arbitrary callable.
class ScalarFunction {
 public:
  ScalarFunction() = default;

  static ScalarFunction zero() { return ScalarFunction(FunctionForm::zero, 0.0, 0.0); }
  static ScalarFunction constant(double c) {
    return c == 0.0 ? zero() : ScalarFunction(FunctionForm::constant, c, 0.0);
  }
  /// offset + slope * y
  static ScalarFunction affine(double offset, double slope) {
    if (slope == 0.0) return constant(offset);
    return ScalarFunction(FunctionForm::affine, offset, slope);
  }
  /// base + amplitude * sin(y)
  static ScalarFunction sine(double base, double amplitude) {
    if (amplitude == 0.0) return constant(base);
    return ScalarFunction(FunctionForm::sine, base, amplitude);
  }
  /// base + amplitude * cos(y)
  static ScalarFunction cosine(double base, double amplitude) {
    if (amplitude == 0.0) return constant(base);
    return ScalarFunction(FunctionForm::cosine, base, amplitude);
  }
  static ScalarFunction custom(std::function<double(double)> fn, std::string label = "custom") {
    ScalarFunction f(FunctionForm::custom, 0.0, 0.0);
    f.fn_ = std::move(fn);
    f.label_ = std::move(label);
    return f;
  }

  double operator()(double y) const {
    switch (form_) {
      case FunctionForm::zero: return 0.0;
      case FunctionForm::constant: return a_;
      case FunctionForm::affine: return a_ + b_ * y;
      case FunctionForm::sine: return a_ + b_ * std::sin(y);
      case FunctionForm::cosine: return a_ + b_ * std::cos(y);
      case FunctionForm::custom: return fn_(y);
    }
    return 0.0;
  }

  FunctionForm form() const noexcept { return form_; }
  bool is_zero() const noexcept { return form_ == FunctionForm::zero; }
  bool is_constant() const noexcept {
    return form_ == FunctionForm::zero || form_ == FunctionForm::constant;
  }
  std::optional<double> constant_value() const {
    if (!is_constant()) return std::nullopt;
    return a_;
  }

  /// Analytic derivative for catalog forms; empty for custom callables.
  std::optional<ScalarFunction> derivative() const {
    switch (form_) {
      case FunctionForm::zero:
      case FunctionForm::constant: return zero();
      case FunctionForm::affine: return constant(b_);
      case FunctionForm::sine: return cosine(0.0, b_);
      case FunctionForm::cosine: return sine(0.0, -b_);
      case FunctionForm::custom: return std::nullopt;
    }
    return std::nullopt;
  }

  /// sup_y |f(y)| from the analytic form; empty for custom callables,
  /// infinite for non-constant affine functions.
  std::optional<double> sup_abs() const {
    switch (form_) {
      case FunctionForm::zero: return 0.0;
      case FunctionForm::constant: return std::abs(a_);
      case FunctionForm::affine: return std::numeric_limits<double>::infinity();
      case FunctionForm::sine:
      case FunctionForm::cosine: return std::abs(a_) + std::abs(b_);
      case FunctionForm::custom: return std::nullopt;
    }
    return std::nullopt;
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (form_) {
      case FunctionForm::zero: os << "0"; break;
      case FunctionForm::constant: os << a_; break;
      case FunctionForm::affine: os << a_ << " + " << b_ << "*y"; break;
      case FunctionForm::sine: os << a_ << " + " << b_ << "*sin(y)"; break;
      case FunctionForm::cosine: os << a_ << " + " << b_ << "*cos(y)"; break;
      case FunctionForm::custom: os << label_; break;
    }
    return os.str();
  }

 private:
  ScalarFunction(FunctionForm form, double a, double b) : form_(form), a_(a), b_(b) {}

  FunctionForm form_ = FunctionForm::zero;
  double a_ = 0.0;
  double b_ = 0.0;
  std::function<double(double)> fn_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Model and state
// ---------------------------------------------------------------------------

inline bool is_strictly_increasing(std::span<const double> x) {
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i - 1] < x[i])) return false;
  }
  return true;
}

inline void require_in_chamber(std::span<const double> x, const char* where) {
  if (!is_strictly_increasing(x)) {
    throw DomainError(std::string(where) + ": positions are not strictly increasing");
  }
}

struct ModelSpec {
  double lambda = 1.0;
  std::vector<ScalarFunction> drift;      ///< b_i, one per particle
  std::vector<ScalarFunction> diffusion;  ///< sigma_i, one per particle
  /// sigma_i'; only needed by the Milstein scheme.
  std::optional<std::vector<ScalarFunction>> diffusion_derivative;
  std::vector<double> initial;  ///< v
  double horizon = 1.0;         ///< T

  std::size_t dimension() const noexcept { return initial.size(); }

  void validate() const {
    const std::size_t d = dimension();
    if (d < 2) throw DomainError("model: need at least two particles");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("model: lambda must be > 0");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("model: T must be > 0");
    if (drift.size() != d || diffusion.size() != d) {
      throw DomainError("model: need exactly d drift and d diffusion coefficients");
    }
    if (diffusion_derivative && diffusion_derivative->size() != d) {
      throw DomainError("model: sigma' must have length d");
    }
    require_in_chamber(initial, "model initial configuration");
  }

  bool drift_is_zero() const {
    return std::all_of(drift.begin(), drift.end(), [](const auto& f) { return f.is_zero(); });
  }
  bool diffusion_is_constant() const {
    return std::all_of(diffusion.begin(), diffusion.end(),
                       [](const auto& f) { return f.is_constant(); });
  }

  /// max_i sup_y sigma_i(y)^2 from the analytic forms, if all are known.
  std::optional<double> sup_sigma_sq() const {
    double m = 0.0;
    for (const auto& s : diffusion) {
      auto v = s.sup_abs();
      if (!v) return std::nullopt;
      m = std::max(m, *v * *v);
    }
    return m;
  }

  /// Fill diffusion_derivative from the analytic forms. Throws for custom sigma.
  ModelSpec& with_analytic_derivatives() {
    std::vector<ScalarFunction> deriv;
    deriv.reserve(diffusion.size());
    for (const auto& s : diffusion) {
      auto ds = s.derivative();
      if (!ds) throw DomainError("model: no analytic derivative for sigma = " + s.describe());
      deriv.push_back(*ds);
    }
    diffusion_derivative = std::move(deriv);
    return *this;
  }
};

/// A point of the Weyl chamber at time t.
struct ParticleState {
  double t = 0.0;
  std::vector<double> x;
};

// ---------------------------------------------------------------------------
// Built-in catalog
// ---------------------------------------------------------------------------

/// Parameters shared by the catalog entries. sigma_i(y) = sigma_base +
/// sigma_amplitude * sin(y); b_i(y) = drift_offset + drift_step*(i-1) +
/// drift_slope*y (i is 1-based).
struct CatalogParams {
  std::size_t d = 2;
  double lambda = 1.0;
  double horizon = 1.0;
  std::vector<double> initial;  ///< empty: 0, 1, ..., d-1
  double sigma_base = 1.0;
  double sigma_amplitude = 0.0;
  double drift_offset = 0.0;
  double drift_step = 0.0;
  double drift_slope = 0.0;
};

inline ModelSpec make_model(const CatalogParams& p) {
  ModelSpec m;
  m.lambda = p.lambda;
  m.horizon = p.horizon;
  m.initial = p.initial;
  if (m.initial.empty()) {
    m.initial.resize(p.d);
    for (std::size_t i = 0; i < p.d; ++i) m.initial[i] = static_cast<double>(i);
  }
  if (m.initial.size() != p.d) throw DomainError("model: v must have length d");
  for (std::size_t i = 0; i < p.d; ++i) {
    m.drift.push_back(ScalarFunction::affine(
        p.drift_offset + p.drift_step * static_cast<double>(i), p.drift_slope));
    m.diffusion.push_back(ScalarFunction::sine(p.sigma_base, p.sigma_amplitude));
  }
  m.with_analytic_derivatives();
  m.validate();
  return m;
}

/// Catalog defaults for a key: "dyson" (b = 0, sigma = 1), "affine-drift"
/// (b_i = 0.1*(i-1), sigma = 1), "bounded-smooth" (b = 0, sigma = 2 + sin(y)/2).
inline CatalogParams catalog_defaults(std::string_view key) {
  CatalogParams p;
  if (key == "dyson") return p;
  if (key == "affine-drift") {
    p.drift_step = 0.1;
    return p;
  }
  if (key == "bounded-smooth") {
    p.sigma_base = 2.0;
    p.sigma_amplitude = 0.5;
    return p;
  }
  throw ConfigError("unknown model catalog key '" + std::string(key) + "'");
}

inline bool is_catalog_key(std::string_view key) {
  return key == "dyson" || key == "affine-drift" || key == "bounded-smooth";
}

inline ModelSpec dyson_model(std::size_t d, double lambda, std::vector<double> v = {},
                             double horizon = 1.0, double sigma = 1.0) {
  CatalogParams p;
  p.d = d;
  p.lambda = lambda;
  p.initial = std::move(v);
  p.horizon = horizon;
  p.sigma_base = sigma;
  return make_model(p);
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

/// out_i = sum_{j != i} lambda / (x_i - x_j). Each pair is evaluated once and
/// applied antisymmetrically. No chamber check.
inline void interaction_drift_unchecked(std::span<const double> x, double lambda,
                                        std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double t = lambda / (x[i] - x[j]);
      out[i] += t;
      out[j] -= t;
    }
  }
}

inline std::vector<double> interaction_drift(std::span<const double> x, double lambda) {
  require_in_chamber(x, "interaction_drift");
  std::vector<double> g(x.size());
  interaction_drift_unchecked(x, lambda, g);
  return g;
}

inline std::vector<double> full_drift(std::span<const double> x, const ModelSpec& model) {
  if (x.size() != model.dimension()) throw DomainError("full_drift: dimension mismatch");
  auto g = interaction_drift(x, model.lambda);
  for (std::size_t i = 0; i < x.size(); ++i) g[i] += model.drift[i](x[i]);
  return g;
}

/// Residual of the three-index identity
///   sum_{m>k} sum_{i != m,k} [1/((x_m-x_i)(x_m-x_k)) - 1/((x_k-x_i)(x_m-x_k))] = 0
/// together with the largest summand magnitude it should be judged against.
struct IdentityResidual {
  double value = 0.0;
  double scale = 0.0;  ///< max |summand|; 0 for the empty sum

  double relative() const { return scale > 0.0 ? std::abs(value) / scale : std::abs(value); }
  bool empty() const { return scale == 0.0; }
};

inline IdentityResidual pairwise_identity_residual(std::span<const double> x) {
  require_in_chamber(x, "pairwise_identity_residual");
  IdentityResidual r;
  const std::size_t d = x.size();
  for (std::size_t m = 0; m < d; ++m) {
    for (std::size_t k = 0; k < m; ++k) {
      const double dmk = x[m] - x[k];
      for (std::size_t i = 0; i < d; ++i) {
        if (i == m || i == k) continue;
        const double a = 1.0 / ((x[m] - x[i]) * dmk);
        const double b = 1.0 / ((x[k] - x[i]) * dmk);
        r.value += a - b;
        r.scale = std::max({r.scale, std::abs(a), std::abs(b)});
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

/// Empirical check of the structural assumptions. Every quantity is a
/// maximum over `sample_grid` (or pairs drawn from it), so none of this is a
/// proof; refining the grid can only increase the estimates.
struct AssumptionReport {
  double lambda = 0.0;
  double sup_b = 0.0;         ///< max_i max_x |b_i(x)|
  double sup_sigma_sq = 0.0;  ///< max_i max_x sigma_i(x)^2
  /// max_i max_x 1/sigma_i(x)^2; infinite when some sigma_i vanishes on the grid.
  double ellipticity_L_sq = 0.0;
  double ellipticity_L = 0.0;
  bool ellipticity_unbounded = false;
  std::vector<std::pair<std::size_t, double>> sigma_zeros;  ///< (i, x) with sigma_i(x) == 0
  bool b4_holds = false;  ///< sup sigma^2 <= 2 lambda
  bool b5_holds = false;  ///< b_i <= b_j for i < j at every sample
  bool finite = true;     ///< every sampled coefficient value was finite
  std::vector<double> lipschitz_b;
  std::vector<double> lipschitz_sigma;
  std::vector<double> holder_sigma;  ///< max |sigma(x)-sigma(y)| / sqrt|x-y|
  std::vector<double> sample_grid;
  std::size_t pair_samples = 0;

  double sup_sigma() const { return std::sqrt(sup_sigma_sq); }
  double lambda_over_sigma_sq() const { return lambda / sup_sigma_sq; }
  double lambda_over_sigma() const { return lambda / sup_sigma(); }
  /// Rate condition read with the unsquared sup norm: lambda > 37/2 ||sigma||.
  bool rate_condition_unsquared() const { return lambda > 18.5 * sup_sigma(); }
  /// Rate condition read with the squared sup norm: lambda > 37/2 ||sigma||^2.
  bool rate_condition_squared() const { return lambda > 18.5 * sup_sigma_sq; }
  bool all_checkable_hold() const { return finite && b4_holds && b5_holds && !ellipticity_unbounded; }
};

inline AssumptionReport validate_assumptions(const ModelSpec& model,
                                             std::span<const double> sample_points,
                                             std::size_t pair_samples,
                                             std::uint64_t pair_seed = 0) {
  if (sample_points.empty()) throw DomainError("validate_assumptions: empty sample grid");
  const std::size_t d = model.dimension();
  if (model.drift.size() != d || model.diffusion.size() != d) {
    throw DomainError("validate_assumptions: coefficient count does not match d");
  }

  AssumptionReport rep;
  rep.lambda = model.lambda;
  rep.sample_grid.assign(sample_points.begin(), sample_points.end());
  rep.pair_samples = pair_samples;
  rep.b5_holds = true;
  double inv_sigma_sq = 0.0;

  for (double xs : sample_points) {
    double prev_b = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d; ++i) {
      const double bi = model.drift[i](xs);
      const double si = model.diffusion[i](xs);
      if (!std::isfinite(bi) || !std::isfinite(si)) rep.finite = false;
      rep.sup_b = std::max(rep.sup_b, std::abs(bi));
      rep.sup_sigma_sq = std::max(rep.sup_sigma_sq, si * si);
      if (si == 0.0) {
        rep.ellipticity_unbounded = true;
        rep.sigma_zeros.emplace_back(i, xs);
      } else {
        inv_sigma_sq = std::max(inv_sigma_sq, 1.0 / (si * si));
      }
      if (bi < prev_b) rep.b5_holds = false;
      prev_b = std::max(prev_b, bi);
    }
  }
  rep.b4_holds = rep.sup_sigma_sq <= 2.0 * model.lambda;
  if (rep.ellipticity_unbounded) {
    rep.ellipticity_L_sq = std::numeric_limits<double>::infinity();
  } else {
    rep.ellipticity_L_sq = inv_sigma_sq;
  }
  rep.ellipticity_L = std::sqrt(rep.ellipticity_L_sq);

  rep.lipschitz_b.assign(d, 0.0);
  rep.lipschitz_sigma.assign(d, 0.0);
  rep.holder_sigma.assign(d, 0.0);
  const std::size_t n = sample_points.size();
  if (n >= 2 && pair_samples > 0) {
    std::mt19937_64 rng(pair_seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t s = 0; s < pair_samples; ++s) {
      // Consecutive grid neighbours first, then random pairs.
      std::size_t a, b;
      if (s + 1 < n) {
        a = s;
        b = s + 1;
      } else {
        a = pick(rng);
        b = pick(rng);
      }
      const double xa = sample_points[a], xb = sample_points[b];
      const double dx = std::abs(xa - xb);
      if (dx == 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) {
        const double db = std::abs(model.drift[i](xa) - model.drift[i](xb));
        const double ds = std::abs(model.diffusion[i](xa) - model.diffusion[i](xb));
        rep.lipschitz_b[i] = std::max(rep.lipschitz_b[i], db / dx);
        rep.lipschitz_sigma[i] = std::max(rep.lipschitz_sigma[i], ds / dx);
        rep.holder_sigma[i] = std::max(rep.holder_sigma[i], ds / std::sqrt(dx));
      }
    }
  }
  return rep;
}

/// Largest negative-moment order covered by the boundedness result:
/// (2 lambda / ||sigma||^2 - 1) / 6. Non-positive values mean no p > 0 is
/// covered. Whether the endpoint itself is admissible is left to the caller.
inline double negative_moment_threshold(double lambda, double sup_sigma_sq) {
  return (2.0 * lambda / sup_sigma_sq - 1.0) / 6.0;
}

}  // namespace ncps
