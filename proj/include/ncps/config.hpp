#pragma once

// Experiment configuration: INI-style sections of key = value pairs.
//
//   [model]   catalog, d, lambda, T, v, sigma_base, sigma_amplitude,
//             drift_offset, drift_step, drift_slope
//   [scheme]  name, n_steps
//   [convergence] ns, n_ref, slope_min, slope_max
//   [moments] functional (gap | norm), p, q, pair, times
//   [validate] sample_min, sample_max, sample_count, pair_samples
//   [identity] points, gap_min, gap_max
//   [solver]  grad_tol, max_iters, boundary_fraction
//   [run]     seed, paths, threads, path_index, out, outside_guarantee
//
// Lists are whitespace- or comma-separated. Lines starting with '#' or ';'
// are comments. Unknown keys are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ncps/core_model.hpp"
#include "ncps/errors.hpp"
#include "ncps/schemes.hpp"

namespace ncps {

struct ExperimentConfig {
  // [model]
  std::string catalog = "dyson";
  std::size_t d = 2;
  double lambda = 1.0;
  double horizon = 1.0;
  std::vector<double> v;  ///< empty means 0, 1, ..., d-1
  std::optional<double> sigma_base;
  std::optional<double> sigma_amplitude;
  std::optional<double> drift_offset;
  std::optional<double> drift_step;
  std::optional<double> drift_slope;
  // [scheme]
  std::string scheme = "semi-implicit-em";
  std::size_t n_steps = 1024;
  // [convergence]
  std::vector<std::size_t> ns{16, 32, 64, 128, 256, 512};
  std::size_t n_ref = 16384;
  std::optional<double> slope_min;
  std::optional<double> slope_max;
  // [moments]
  std::string functional = "gap";
  double p = 1.0;
  double q = 1.0;
  std::vector<std::size_t> pair{1, 2};  ///< 1-based
  std::vector<double> times{1.0};
  // [validate]
  double sample_min = -10.0;
  double sample_max = 10.0;
  std::size_t sample_count = 201;
  std::size_t pair_samples = 1000;
  // [identity]
  std::size_t identity_points = 1000;
  double gap_min = 1e-3;
  double gap_max = 1e3;
  // [solver]
  double grad_tol = 1e-12;
  std::size_t max_iters = 100;
  double boundary_fraction = 0.9;
  // [run]
  std::uint64_t seed = 1;
  std::size_t paths = 10000;
  unsigned threads = 1;
  std::uint64_t path_index = 0;
  std::string out = "results";
  bool outside_guarantee = false;

  bool operator==(const ExperimentConfig&) const = default;

  /// Copy with every implicit default made explicit (v, coefficient
  /// parameters, slope band).
  ExperimentConfig resolved() const {
    ExperimentConfig c = *this;
    if (c.v.empty()) {
      for (std::size_t i = 0; i < c.d; ++i) c.v.push_back(static_cast<double>(i));
    }
    const CatalogParams def = catalog_defaults(c.catalog);
    if (!c.sigma_base) c.sigma_base = def.sigma_base;
    if (!c.sigma_amplitude) c.sigma_amplitude = def.sigma_amplitude;
    if (!c.drift_offset) c.drift_offset = def.drift_offset;
    if (!c.drift_step) c.drift_step = def.drift_step;
    if (!c.drift_slope) c.drift_slope = def.drift_slope;
    const bool milstein = parse_scheme(c.scheme) == Scheme::semi_implicit_milstein;
    if (!c.slope_min) c.slope_min = milstein ? -2.3 : -1.25;
    if (!c.slope_max) c.slope_max = milstein ? -1.7 : -0.75;
    return c;
  }

  ModelSpec model() const {
    const ExperimentConfig c = resolved();
    CatalogParams p;
    p.d = c.d;
    p.lambda = c.lambda;
    p.horizon = c.horizon;
    p.initial = c.v;
    p.sigma_base = *c.sigma_base;
    p.sigma_amplitude = *c.sigma_amplitude;
    p.drift_offset = *c.drift_offset;
    p.drift_step = *c.drift_step;
    p.drift_slope = *c.drift_slope;
    return make_model(p);
  }

  SolverConfig solver() const {
    SolverConfig s;
    s.grad_tol = grad_tol;
    s.max_iters = max_iters;
    s.boundary_fraction = boundary_fraction;
    return s;
  }
};

namespace config_detail {

using boost::property_tree::ptree;

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

template <class T>
std::string format_list(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += ' ';
    if constexpr (std::is_floating_point_v<T>) {
      s += format_double(xs[k]);
    } else {
      s += std::to_string(xs[k]);
    }
  }
  return s;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view text, const std::string& key) {
  text = trim(text);
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

template <class T>
std::vector<T> parse_list(std::string_view text, const std::string& key) {
  std::vector<T> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      out.push_back(parse_number<T>(token, key));
      token.clear();
    }
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      flush();
    } else {
      token += c;
    }
  }
  flush();
  return out;
}

inline bool parse_bool(std::string_view text, const std::string& key) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + std::string(text) + "'");
}

/// Keys understood by from_ptree, as "section.key".
inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "model.catalog", "model.d", "model.lambda", "model.T", "model.v", "model.sigma_base",
      "model.sigma_amplitude", "model.drift_offset", "model.drift_step", "model.drift_slope",
      "scheme.name", "scheme.n_steps", "convergence.ns", "convergence.n_ref",
      "convergence.slope_min", "convergence.slope_max", "moments.functional", "moments.p",
      "moments.q", "moments.pair", "moments.times", "validate.sample_min", "validate.sample_max",
      "validate.sample_count", "validate.pair_samples", "identity.points", "identity.gap_min",
      "identity.gap_max", "solver.grad_tol", "solver.max_iters", "solver.boundary_fraction",
      "run.seed", "run.paths", "run.threads", "run.path_index", "run.out",
      "run.outside_guarantee"};
  return keys;
}

}  // namespace config_detail

inline boost::property_tree::ptree to_ptree(const ExperimentConfig& c) {
  using namespace config_detail;
  ptree pt;
  pt.put("model.catalog", c.catalog);
  pt.put("model.d", std::to_string(c.d));
  pt.put("model.lambda", format_double(c.lambda));
  pt.put("model.T", format_double(c.horizon));
  if (!c.v.empty()) pt.put("model.v", format_list(c.v));
  auto put_opt = [&](const char* key, const std::optional<double>& x) {
    if (x) pt.put(key, format_double(*x));
  };
  put_opt("model.sigma_base", c.sigma_base);
  put_opt("model.sigma_amplitude", c.sigma_amplitude);
  put_opt("model.drift_offset", c.drift_offset);
  put_opt("model.drift_step", c.drift_step);
  put_opt("model.drift_slope", c.drift_slope);
  pt.put("scheme.name", c.scheme);
  pt.put("scheme.n_steps", std::to_string(c.n_steps));
  pt.put("convergence.ns", format_list(c.ns));
  pt.put("convergence.n_ref", std::to_string(c.n_ref));
  put_opt("convergence.slope_min", c.slope_min);
  put_opt("convergence.slope_max", c.slope_max);
  pt.put("moments.functional", c.functional);
  pt.put("moments.p", format_double(c.p));
  pt.put("moments.q", format_double(c.q));
  pt.put("moments.pair", format_list(c.pair));
  pt.put("moments.times", format_list(c.times));
  pt.put("validate.sample_min", format_double(c.sample_min));
  pt.put("validate.sample_max", format_double(c.sample_max));
  pt.put("validate.sample_count", std::to_string(c.sample_count));
  pt.put("validate.pair_samples", std::to_string(c.pair_samples));
  pt.put("identity.points", std::to_string(c.identity_points));
  pt.put("identity.gap_min", format_double(c.gap_min));
  pt.put("identity.gap_max", format_double(c.gap_max));
  pt.put("solver.grad_tol", format_double(c.grad_tol));
  pt.put("solver.max_iters", std::to_string(c.max_iters));
  pt.put("solver.boundary_fraction", format_double(c.boundary_fraction));
  pt.put("run.seed", std::to_string(c.seed));
  pt.put("run.paths", std::to_string(c.paths));
  pt.put("run.threads", std::to_string(c.threads));
  pt.put("run.path_index", std::to_string(c.path_index));
  pt.put("run.out", c.out);
  pt.put("run.outside_guarantee", c.outside_guarantee ? "true" : "false");
  return pt;
}

inline ExperimentConfig from_ptree(const boost::property_tree::ptree& pt) {
  using namespace config_detail;
  for (const auto& [section, body] : pt) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' is outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known_keys().contains(full)) throw ConfigError("unknown config key '" + full + "'");
    }
  }

  ExperimentConfig c;
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    if (auto v = pt.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'))) {
      return std::string(trim(*v));
    }
    return std::nullopt;
  };
  auto num = [&](const std::string& key, auto& field) {
    if (auto s = get(key)) field = parse_number<std::decay_t<decltype(field)>>(*s, key);
  };
  auto opt = [&](const std::string& key, std::optional<double>& field) {
    if (auto s = get(key)) field = parse_number<double>(*s, key);
  };
  auto str = [&](const std::string& key, std::string& field) {
    if (auto s = get(key)) field = *s;
  };
  auto list = [&](const std::string& key, auto& field) {
    if (auto s = get(key)) field = parse_list<typename std::decay_t<decltype(field)>::value_type>(*s, key);
  };

  str("model.catalog", c.catalog);
  num("model.d", c.d);
  num("model.lambda", c.lambda);
  num("model.T", c.horizon);
  list("model.v", c.v);
  opt("model.sigma_base", c.sigma_base);
  opt("model.sigma_amplitude", c.sigma_amplitude);
  opt("model.drift_offset", c.drift_offset);
  opt("model.drift_step", c.drift_step);
  opt("model.drift_slope", c.drift_slope);
  str("scheme.name", c.scheme);
  num("scheme.n_steps", c.n_steps);
  list("convergence.ns", c.ns);
  num("convergence.n_ref", c.n_ref);
  opt("convergence.slope_min", c.slope_min);
  opt("convergence.slope_max", c.slope_max);
  str("moments.functional", c.functional);
  num("moments.p", c.p);
  num("moments.q", c.q);
  list("moments.pair", c.pair);
  list("moments.times", c.times);
  num("validate.sample_min", c.sample_min);
  num("validate.sample_max", c.sample_max);
  num("validate.sample_count", c.sample_count);
  num("validate.pair_samples", c.pair_samples);
  num("identity.points", c.identity_points);
  num("identity.gap_min", c.gap_min);
  num("identity.gap_max", c.gap_max);
  num("solver.grad_tol", c.grad_tol);
  num("solver.max_iters", c.max_iters);
  num("solver.boundary_fraction", c.boundary_fraction);
  num("run.seed", c.seed);
  num("run.paths", c.paths);
  num("run.threads", c.threads);
  num("run.path_index", c.path_index);
  str("run.out", c.out);
  if (auto s = get("run.outside_guarantee")) c.outside_guarantee = parse_bool(*s, "run.outside_guarantee");

  if (!is_catalog_key(c.catalog)) throw ConfigError("unknown model catalog '" + c.catalog + "'");
  parse_scheme(c.scheme);
  if (c.functional != "gap" && c.functional != "norm") {
    throw ConfigError("moments.functional must be 'gap' or 'norm'");
  }
  if (c.pair.size() != 2) throw ConfigError("moments.pair needs two 1-based indices");
  return c;
}

/// Read an INI stream into a property tree, dropping '#' comment lines.
inline boost::property_tree::ptree read_config_tree(std::istream& in) {
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = config_detail::trim(line);
    if (!t.empty() && t.front() == '#') continue;
    cleaned << line << '\n';
  }
  std::istringstream src(cleaned.str());
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(src, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  return pt;
}

/// Apply "section.key=value" on top of a tree.
inline void apply_override(boost::property_tree::ptree& pt, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  const std::string key(config_detail::trim(assignment.substr(0, eq)));
  const std::string value(config_detail::trim(assignment.substr(eq + 1)));
  if (!config_detail::known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  pt.put(boost::property_tree::ptree::path_type(key, '.'), value);
}

inline ExperimentConfig parse_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return from_ptree(read_config_tree(in));
}

inline std::string render_config(const ExperimentConfig& c) {
  std::ostringstream os;
  boost::property_tree::write_ini(os, to_ptree(c));
  return os.str();
}

}  // namespace ncps
