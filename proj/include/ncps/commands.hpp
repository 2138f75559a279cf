#pragma once

// The five command-line operations. Each takes a parsed configuration, writes
// its result files into cfg.out plus a manifest.txt, reports to `out`/`err`,
// and returns the process exit code:
//   0  success / criterion met
//   1  assumption failure, solver failure, overflow, gating refusal, band miss
//   2  unusable configuration (bad model, nesting violation, too few points)

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ncps/analysis.hpp"
#include "ncps/config.hpp"
#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"
#include "ncps/schemes.hpp"

#ifndef NCPS_VERSION
#define NCPS_VERSION "0.0.0"
#endif

namespace ncps {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_usage = 2 };

inline constexpr std::string_view toolkit_version = NCPS_VERSION;

inline constexpr std::string_view command_names[] = {"validate", "simulate", "moments",
                                                     "convergence", "identity-check"};

namespace cmd_detail {

namespace fs = std::filesystem;

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

/// Result files and key-value facts collected for the manifest.
struct RunRecord {
  std::string command;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, std::string>> results;
  std::size_t overflow_flags = 0;

  void result(std::string key, std::string value) { results.emplace_back(std::move(key), std::move(value)); }
};

inline fs::path output_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.out);
  fs::create_directories(dir);
  return dir;
}

inline void write_file(const ExperimentConfig& cfg, RunRecord& rec, const std::string& name,
                       const std::string& content) {
  std::ofstream f(output_dir(cfg) / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(cfg.out) / name).string());
  f << content;
  rec.outputs.push_back(name);
}

/// manifest.txt: flat key = value lines. Contains the wall-clock duration, so
/// unlike the result files it differs between otherwise identical runs.
inline void write_manifest(const ExperimentConfig& cfg, const RunRecord& rec, double seconds) {
  std::ostringstream m;
  m << "toolkit.version = " << toolkit_version << '\n';
  m << "run.command = " << rec.command << '\n';
  m << "run.duration_seconds = " << fmt(seconds) << '\n';
  const auto tree = to_ptree(cfg.resolved());
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) {
      m << "config." << section << '.' << key << " = " << value.data() << '\n';
    }
  }
  for (std::size_t k = 0; k < rec.outputs.size(); ++k) m << "output." << k << " = " << rec.outputs[k] << '\n';
  for (const auto& [k, v] : rec.results) m << "result." << k << " = " << v << '\n';
  m << "flags.overflow = " << rec.overflow_flags << '\n';
  std::ofstream f(output_dir(cfg) / "manifest.txt", std::ios::binary);
  f << m.str();
}

template <class Body>
int run_recorded(const ExperimentConfig& cfg, std::string_view name, std::ostream& err, Body&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.command = std::string(name);
  int code;
  try {
    code = body(rec);
  } catch (const ConfigError& e) {
    err << name << ": " << e.what() << '\n';
    return exit_usage;
  } catch (const DomainError& e) {
    err << name << ": " << e.what() << '\n';
    return exit_usage;
  } catch (const SolverError& e) {
    err << name << ": solver failure: " << e.what() << '\n';
    rec.result("solver_failure", e.what());
    code = exit_failure;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.result("exit_code", std::to_string(code));
  write_manifest(cfg, rec, secs);
  return code;
}

inline std::vector<double> sample_grid(const ExperimentConfig& cfg) {
  if (cfg.sample_count == 0) throw ConfigError("validate.sample_count must be positive");
  std::vector<double> g(cfg.sample_count);
  if (cfg.sample_count == 1) {
    g[0] = cfg.sample_min;
    return g;
  }
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = cfg.sample_min + (cfg.sample_max - cfg.sample_min) * static_cast<double>(k) /
                                static_cast<double>(cfg.sample_count - 1);
  }
  return g;
}

inline std::string holds(bool b) { return b ? "holds" : "FAILS"; }

inline std::string render_report(const ExperimentConfig& cfg, const ModelSpec& model,
                                 const AssumptionReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "model: " << cfg.catalog << "  d = " << model.dimension() << "  lambda = " << model.lambda
     << "  T = " << model.horizon << '\n';
  os << "b_1(y) = " << model.drift.front().describe() << ", sigma_1(y) = "
     << model.diffusion.front().describe() << '\n';
  os << "sample grid: " << r.sample_grid.size() << " points in [" << cfg.sample_min << ", "
     << cfg.sample_max << "], " << r.pair_samples << " pairs (empirical estimates)\n";
  os << "sup |b| = " << r.sup_b << '\n';
  os << "sup sigma^2 = " << r.sup_sigma_sq << '\n';
  if (r.ellipticity_unbounded) {
    os << "ellipticity: sigma vanishes at " << r.sigma_zeros.size() << " sample(s): L unbounded  FAILS\n";
  } else {
    os << "ellipticity L^2 = max 1/sigma^2 = " << r.ellipticity_L_sq << "  (L = " << r.ellipticity_L << ")\n";
  }
  os << "B4 sup sigma^2 <= 2 lambda: " << r.sup_sigma_sq << (r.b4_holds ? " <= " : " > ")
     << 2.0 * r.lambda << "  " << holds(r.b4_holds) << '\n';
  os << "B5 b_i <= b_j for i < j: " << holds(r.b5_holds) << '\n';
  if (!r.finite) os << "non-finite coefficient values on the grid  FAILS\n";
  double lb = 0.0, ls = 0.0, hs = 0.0;
  for (std::size_t i = 0; i < r.lipschitz_b.size(); ++i) {
    lb = std::max(lb, r.lipschitz_b[i]);
    ls = std::max(ls, r.lipschitz_sigma[i]);
    hs = std::max(hs, r.holder_sigma[i]);
  }
  os << "max Lipschitz(b) = " << lb << ", max Lipschitz(sigma) = " << ls
     << ", max Holder-1/2(sigma) = " << hs << '\n';
  os << "lambda / sup sigma^2 = " << r.lambda_over_sigma_sq() << '\n';
  os << "lambda / sup |sigma| = " << r.lambda_over_sigma() << '\n';
  os << "negative-moment threshold (2 lambda / sup sigma^2 - 1) / 6 = "
     << negative_moment_threshold(r.lambda, r.sup_sigma_sq) << '\n';
  os << "rate condition lambda > 37/2 sup |sigma|  : " << r.lambda << " vs " << 18.5 * r.sup_sigma()
     << "  " << (r.rate_condition_unsquared() ? "holds" : "fails") << '\n';
  os << "rate condition lambda > 37/2 sup sigma^2 : " << r.lambda << " vs " << 18.5 * r.sup_sigma_sq
     << "  " << (r.rate_condition_squared() ? "holds" : "fails") << '\n';
  os << "checkable assumptions: " << (r.all_checkable_hold() ? "all hold" : "VIOLATED") << '\n';
  return os.str();
}

}  // namespace cmd_detail

inline int cmd_validate(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  using namespace cmd_detail;
  return run_recorded(cfg, "validate", err, [&](RunRecord& rec) {
    const ModelSpec model = cfg.model();
    const auto grid = sample_grid(cfg);
    const auto report = validate_assumptions(model, grid, cfg.pair_samples, cfg.seed);
    const std::string text = render_report(cfg, model, report);
    out << text;
    write_file(cfg, rec, "validate.txt", text);
    rec.result("sup_sigma_sq", fmt(report.sup_sigma_sq));
    rec.result("b4_holds", report.b4_holds ? "true" : "false");
    rec.result("b5_holds", report.b5_holds ? "true" : "false");
    rec.result("threshold", fmt(negative_moment_threshold(model.lambda, report.sup_sigma_sq)));
    return report.all_checkable_hold() ? exit_ok : exit_failure;
  });
}

inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  using namespace cmd_detail;
  return run_recorded(cfg, "simulate", err, [&](RunRecord& rec) {
    ModelSpec model = cfg.model();
    const Scheme scheme = parse_scheme(cfg.scheme);
    if (cfg.n_steps == 0) throw ConfigError("scheme.n_steps must be positive");
    const auto grid =
        BrownianGrid::generate(cfg.seed, cfg.path_index, cfg.n_steps, model.dimension(), model.horizon);
    Trajectory traj;
    try {
      traj = simulate_path(model, cfg.n_steps, scheme, grid, cfg.solver());
    } catch (const StepFailure& e) {
      err << "simulate: solver failure at step " << e.step() << ": " << e.what() << '\n';
      rec.result("failed_step", std::to_string(e.step()));
      return exit_failure;
    }
    std::ostringstream csv;
    traj.write_csv(csv);
    write_file(cfg, rec, "trajectory.csv", csv.str());
    out << "simulate: " << traj.nodes() << " nodes written to "
        << (std::filesystem::path(cfg.out) / "trajectory.csv").string() << '\n';
    return exit_ok;
  });
}

inline int cmd_moments(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  using namespace cmd_detail;
  return run_recorded(cfg, "moments", err, [&](RunRecord& rec) {
    const ModelSpec model = cfg.model();
    const RunOptions opt{cfg.seed, cfg.threads, cfg.solver()};
    std::vector<MomentEstimate> est;
    bool outside = false;
    if (cfg.functional == "gap") {
      if (cfg.pair[0] < 1 || cfg.pair[0] >= cfg.pair[1] || cfg.pair[1] > model.dimension()) {
        throw ConfigError("moments.pair must satisfy 1 <= i < j <= d");
      }
      const double thr = model_negative_moment_threshold(model);
      rec.result("threshold", fmt(thr));
      if (!negative_moment_covered(model, cfg.p)) {
        if (!cfg.outside_guarantee) {
          err << "moments: p = " << fmt(cfg.p) << " is not below the negative-moment threshold "
              << fmt(thr) << "; pass --outside-guarantee to estimate anyway\n";
          rec.result("refused", "p above threshold");
          return exit_failure;
        }
        outside = true;
      }
      est = estimate_gap_negative_moments(model, cfg.p, cfg.times,
                                          ParticlePair{cfg.pair[0] - 1, cfg.pair[1] - 1},
                                          cfg.n_steps, cfg.paths, opt);
    } else {
      est = estimate_even_moments(model, cfg.q, cfg.times, cfg.n_steps, cfg.paths, opt);
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "functional,p_or_q,t,value,stderr,n_paths,flags\n";
    for (const auto& e : est) {
      rec.overflow_flags += e.nonfinite;
      csv << e.functional << ',' << e.exponent << ',' << e.time << ',' << e.value << ','
          << e.std_error << ',' << e.n_paths << ',' << e.flags() << (outside ? ";outside-guarantee" : "")
          << '\n';
    }
    write_file(cfg, rec, "moments.csv", csv.str());
    out << csv.str();
    if (rec.overflow_flags > 0) {
      err << "moments: " << rec.overflow_flags << " non-finite summands; estimates are invalid\n";
      return exit_failure;
    }
    return exit_ok;
  });
}

inline int cmd_convergence(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  using namespace cmd_detail;
  return run_recorded(cfg, "convergence", err, [&](RunRecord& rec) {
    const ExperimentConfig c = cfg.resolved();
    const ModelSpec model = c.model();
    const Scheme scheme = parse_scheme(c.scheme);
    if (c.ns.size() < 3) throw ConfigError("convergence.ns needs at least three step counts to fit a rate");
    check_nesting(c.ns, c.n_ref);
    const RunOptions opt{c.seed, c.threads, c.solver()};
    const RateFit fit = strong_error_curve(model, scheme, c.ns, c.n_ref, c.paths, opt);
    std::ostringstream csv;
    csv.precision(17);
    csv << "n,mse,stderr\n";
    for (std::size_t k = 0; k < fit.ns.size(); ++k) {
      csv << fit.ns[k] << ',' << fit.errors[k] << ',' << fit.std_errors[k] << '\n';
    }
    write_file(cfg, rec, "convergence.csv", csv.str());
    const bool in_band = fit.slope >= *c.slope_min && fit.slope <= *c.slope_max;
    std::ostringstream summary;
    summary.precision(17);
    summary << "scheme = " << scheme_name(scheme) << '\n'
            << "slope = " << fit.slope << '\n'
            << "intercept = " << fit.intercept << '\n'
            << "band = [" << *c.slope_min << ", " << *c.slope_max << "]\n"
            << "in_band = " << (in_band ? "true" : "false") << '\n';
    write_file(cfg, rec, "convergence_fit.txt", summary.str());
    rec.result("slope", fmt(fit.slope));
    rec.result("intercept", fmt(fit.intercept));
    out << csv.str() << summary.str();
    return in_band ? exit_ok : exit_failure;
  });
}

inline int cmd_identity_check(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  using namespace cmd_detail;
  return run_recorded(cfg, "identity-check", err, [&](RunRecord& rec) {
    constexpr double tolerance = 1e-12;
    if (cfg.d < 2) throw ConfigError("model.d must be at least 2");
    std::ostringstream report;
    report.precision(17);
    if (cfg.d == 2) {
      report << "d = 2: empty sum, identity holds trivially\n";
      write_file(cfg, rec, "identity.txt", report.str());
      out << report.str();
      return exit_ok;
    }
    if (!(cfg.gap_min > 0.0) || !(cfg.gap_max >= cfg.gap_min)) {
      throw ConfigError("identity gaps need 0 < gap_min <= gap_max");
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> log_gap(std::log10(cfg.gap_min), std::log10(cfg.gap_max));
    std::uniform_real_distribution<double> start(-1.0, 1.0);
    std::size_t failures = 0;
    double worst = 0.0;
    std::vector<double> x(cfg.d);
    for (std::size_t s = 0; s < cfg.identity_points; ++s) {
      x[0] = start(rng);
      for (std::size_t i = 1; i < cfg.d; ++i) x[i] = x[i - 1] + std::pow(10.0, log_gap(rng));
      const double rel = pairwise_identity_residual(x).relative();
      worst = std::max(worst, rel);
      if (!(rel <= tolerance)) ++failures;
    }
    report << "d = " << cfg.d << ", points = " << cfg.identity_points << ", gaps log-uniform in ["
           << cfg.gap_min << ", " << cfg.gap_max << "]\n"
           << "max relative residual = " << worst << " (tolerance " << tolerance << ")\n"
           << "failures = " << failures << '\n'
           << (failures == 0 ? "pass" : "FAIL") << '\n';
    write_file(cfg, rec, "identity.txt", report.str());
    rec.result("max_relative_residual", fmt(worst));
    rec.result("failures", std::to_string(failures));
    out << report.str();
    return failures == 0 ? exit_ok : exit_failure;
  });
}

inline int run_command(std::string_view name, const ExperimentConfig& cfg, std::ostream& out,
                       std::ostream& err) {
  if (name == "validate") return cmd_validate(cfg, out, err);
  if (name == "simulate") return cmd_simulate(cfg, out, err);
  if (name == "moments") return cmd_moments(cfg, out, err);
  if (name == "convergence") return cmd_convergence(cfg, out, err);
  if (name == "identity-check") return cmd_identity_check(cfg, out, err);
  err << "unknown command '" << name << "'\n";
  return exit_usage;
}

}  // namespace ncps
