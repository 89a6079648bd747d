#pragma once

#include "dlmc/errors.hpp"
#include "dlmc/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dlmc {

inline const std::vector<std::string>& experiment_methods() {
  static const std::vector<std::string> m{"dlmc", "dlmc-no-mh", "dlmc-no-precondition", "dlmc-pp",
                                          "svgd", "mala",       "ula",                  "mh-only"};
  return m;
}

inline const std::vector<std::string>& experiment_targets() {
  static const std::vector<std::string> t{"gaussian", "gaussian_mixture", "rosenbrock", "funnel", "sparse_logistic"};
  return t;
}

/// Everything needed to reproduce one run. Every key has a default; see
/// config_keys() for the list.
struct ExperimentConfig {
  // target
  std::string target = "funnel";
  int dim = 20;
  double funnel_sigma = std::numeric_limits<double>::infinity();
  std::uint64_t data_seed = 0;
  double rosenbrock_q = 0.1;
  double rosenbrock_prior_variance = 6.0;
  std::string dataset_path = "data/german.data-numeric";

  // method and sampler
  std::string method = "dlmc";
  double step_size = 0.05;
  std::string optimizer = "adagrad";
  bool latent_space = true;
  bool mh_enabled = true;
  int n_particles = 500;
  int burnin_iterations = 0;
  int upsample_to = 0;
  int convergence_window = 5;
  double convergence_tol = 0.02;
  bool stop_on_convergence = true;
  int max_iterations = 200;
  bool allow_any_step_size = false;
  double validation_fraction = 0.2;
  double max_step = 0.0;
  bool cross_fit_mh = true;
  bool burnin_mh = false;
  int flow_max_layers = 40;
  int flow_patience = 2;
  int flow_knots = 16;
  int flow_max_directions = 8;
  int flow_direction_iterations = 10;
  double flow_bandwidth_factor = 3.0;

  // baselines
  double kde_bandwidth = 0.0;   // <= 0: median heuristic
  double svgd_bandwidth = 0.0;  // <= 0: median heuristic
  int langevin_chains = 4;
  long long langevin_steps = 100000;
  long long langevin_burn_in = 1000;
  int langevin_thin = 1;
  long long langevin_record_every = 0;
  double langevin_target_acceptance = 0.0;  // > 0: tune the step during burn-in

  // run
  double cost_per_likelihood_call = 60.0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output_dir = "out";
  std::string reference = "auto";     // auto | none | path to a reference file
  std::string moment_space = "auto";  // auto | constrained | unconstrained

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "inf" || s == "infinity" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf" || s == "-infinity") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  return out;
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  if (!v.empty() && v[0] == '-') throw ConfigError("config key '" + key + "': must be nonnegative");
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': not an unsigned integer: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

template <typename T>
ConfigKey key(std::string name, T ExperimentConfig::*field) {
  ConfigKey k;
  k.name = name;
  k.set = [name, field](ExperimentConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*field = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*field = parse_bool(name, v);
    } else if constexpr (std::is_same_v<T, double>) {
      c.*field = parse_real(name, v);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      c.*field = parse_unsigned(name, v);
    } else {
      const long long x = parse_integer(name, v);
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
        throw ConfigError("config key '" + name + "': out of range");
      c.*field = static_cast<T>(x);
    }
  };
  k.get = [field](const ExperimentConfig& c) -> nlohmann::json {
    if constexpr (std::is_same_v<T, double>)
      return real_json(c.*field);
    else
      return c.*field;
  };
  return k;
}

}  // namespace detail

inline const std::vector<detail::ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  using detail::key;
  static const std::vector<detail::ConfigKey> keys{
      key("target", &C::target),
      key("dim", &C::dim),
      key("funnel_sigma", &C::funnel_sigma),
      key("data_seed", &C::data_seed),
      key("rosenbrock_q", &C::rosenbrock_q),
      key("rosenbrock_prior_variance", &C::rosenbrock_prior_variance),
      key("dataset_path", &C::dataset_path),
      key("method", &C::method),
      key("step_size", &C::step_size),
      key("optimizer", &C::optimizer),
      key("latent_space", &C::latent_space),
      key("mh_enabled", &C::mh_enabled),
      key("n_particles", &C::n_particles),
      key("burnin_iterations", &C::burnin_iterations),
      key("upsample_to", &C::upsample_to),
      key("convergence_window", &C::convergence_window),
      key("convergence_tol", &C::convergence_tol),
      key("stop_on_convergence", &C::stop_on_convergence),
      key("max_iterations", &C::max_iterations),
      key("allow_any_step_size", &C::allow_any_step_size),
      key("validation_fraction", &C::validation_fraction),
      key("max_step", &C::max_step),
      key("cross_fit_mh", &C::cross_fit_mh),
      key("burnin_mh", &C::burnin_mh),
      key("flow_max_layers", &C::flow_max_layers),
      key("flow_patience", &C::flow_patience),
      key("flow_knots", &C::flow_knots),
      key("flow_max_directions", &C::flow_max_directions),
      key("flow_direction_iterations", &C::flow_direction_iterations),
      key("flow_bandwidth_factor", &C::flow_bandwidth_factor),
      key("kde_bandwidth", &C::kde_bandwidth),
      key("svgd_bandwidth", &C::svgd_bandwidth),
      key("langevin_chains", &C::langevin_chains),
      key("langevin_steps", &C::langevin_steps),
      key("langevin_burn_in", &C::langevin_burn_in),
      key("langevin_thin", &C::langevin_thin),
      key("langevin_record_every", &C::langevin_record_every),
      key("langevin_target_acceptance", &C::langevin_target_acceptance),
      key("cost_per_likelihood_call", &C::cost_per_likelihood_call),
      key("seed", &C::seed),
      key("workers", &C::workers),
      key("output_dir", &C::output_dir),
      key("reference", &C::reference),
      key("moment_space", &C::moment_space),
  };
  return keys;
}

/// Sets one key from its text form; unknown keys are errors.
inline void set_config_value(ExperimentConfig& c, const std::string& name, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == name) {
      k.set(c, value);
      return;
    }
  throw ConfigError("unknown config key '" + name + "'");
}

inline void validate(const ExperimentConfig& c) {
  const auto& m = experiment_methods();
  if (std::find(m.begin(), m.end(), c.method) == m.end()) throw ConfigError("unknown method '" + c.method + "'");
  const auto& t = experiment_targets();
  if (std::find(t.begin(), t.end(), c.target) == t.end()) throw ConfigError("unknown target '" + c.target + "'");
  if (c.optimizer != "adagrad" && c.optimizer != "plain") throw ConfigError("optimizer must be adagrad or plain");
  if (c.moment_space != "auto" && c.moment_space != "constrained" && c.moment_space != "unconstrained")
    throw ConfigError("moment_space must be auto, constrained or unconstrained");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (!(c.cost_per_likelihood_call >= 0)) throw ConfigError("cost_per_likelihood_call must be nonnegative");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

/// Parses either a flat JSON object or `key = value` lines ('#' starts a
/// comment).
inline ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base = {}) {
  ExperimentConfig c = base;
  const std::string t = detail::trim(text);
  std::set<std::string> seen;
  auto once = [&](const std::string& k) {
    if (!seen.insert(k).second) throw ConfigError("config key '" + k + "' given twice");
  };
  if (!t.empty() && t.front() == '{') {
    nlohmann::json j;
    // the parsed object keeps only the last of repeated keys, so check while parsing
    auto on_event = [&](int depth, nlohmann::json::parse_event_t ev, nlohmann::json& v) {
      if (ev == nlohmann::json::parse_event_t::key && depth == 1) once(v.get<std::string>());
      return true;
    };
    try {
      j = nlohmann::json::parse(t, on_event);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (v.is_object() || v.is_array()) throw ConfigError("config key '" + k + "': nested values are not allowed");
      std::string s;
      if (v.is_string())
        s = v.get<std::string>();
      else if (v.is_boolean())
        s = v.get<bool>() ? "true" : "false";
      else if (v.is_number_float()) {
        std::ostringstream os;
        os.precision(17);
        os << v.get<double>();
        s = os.str();
      } else
        s = v.dump();
      set_config_value(c, k, s);
    }
  } else {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string k = detail::trim(line.substr(0, eq));
      once(k);
      set_config_value(c, k, detail::trim(line.substr(eq + 1)));
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Flat JSON echo of every resolved key, in declaration order.
inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  for (const auto& k : config_keys()) j[k.name] = k.get(c);
  return j;
}

}  // namespace dlmc
