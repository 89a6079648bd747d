#pragma once

#include "dlmc/baselines.hpp"
#include "dlmc/config.hpp"
#include "dlmc/io.hpp"
#include "dlmc/reference.hpp"
#include "dlmc/sampler.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dlmc {

/// Builds the configured target (loading data when needed) and sets its
/// simulated cost per likelihood call.
inline TargetDensity make_target(const ExperimentConfig& c) {
  TargetDensity t = [&]() -> TargetDensity {
    if (c.target == "gaussian") {
      if (c.dim < 1) throw ConfigError("gaussian: dim must be positive");
      return make_gaussian(Eigen::VectorXd::Zero(c.dim), Eigen::MatrixXd::Identity(c.dim, c.dim));
    }
    if (c.target == "gaussian_mixture") return make_gaussian_mixture(default_mixture_options(c.dim));
    if (c.target == "rosenbrock") return make_rosenbrock({c.dim, c.rosenbrock_q, c.rosenbrock_prior_variance});
    if (c.target == "funnel") {
      FunnelOptions o;
      o.dim = c.dim;
      o.noise_sigma = c.funnel_sigma;
      if (std::isfinite(c.funnel_sigma)) o.observed = simulate_funnel_data(c.dim, c.funnel_sigma, c.data_seed);
      return make_funnel(o);
    }
    if (c.target == "sparse_logistic") {
      const CreditData data = load_german_credit(c.dataset_path);
      return make_sparse_logistic(data.features, data.labels);
    }
    throw ConfigError("unknown target '" + c.target + "'");
  }();
  t.set_cost_per_likelihood_call(c.cost_per_likelihood_call);
  return t;
}

/// Reference moments from the declared oracle where one exists in closed
/// form or by quadrature; nullopt for targets that need a reference run.
inline std::optional<ReferenceMoments> oracle_reference(const ExperimentConfig& c) {
  if (c.target == "gaussian")
    return gaussian_reference(Eigen::VectorXd::Zero(c.dim), Eigen::MatrixXd::Identity(c.dim, c.dim));
  if (c.target == "gaussian_mixture") return mixture_reference(default_mixture_options(c.dim));
  if (c.target == "rosenbrock") return rosenbrock_reference({c.dim, c.rosenbrock_q, c.rosenbrock_prior_variance});
  if (c.target == "funnel" && !std::isfinite(c.funnel_sigma)) {
    FunnelOptions o;
    o.dim = c.dim;
    ReferenceMoments r;
    r.target = "funnel";
    r.provenance = ReferenceProvenance::analytic;
    r.mean = Eigen::VectorXd::Zero(c.dim);
    r.second_moment = Eigen::VectorXd::Constant(c.dim, std::exp(funnel_theta_variance / 8.0));  // E[exp(theta/2)]
    r.second_moment(0) = funnel_theta_variance;
    r.mean_stderr = r.second_moment_stderr = Eigen::VectorXd::Zero(c.dim);
    r.notes = "funnel prior: E[theta^2] = 3, E[z^2] = E[exp(theta/2)]";
    return r;
  }
  return std::nullopt;
}

/// Long MALA run used as reference for targets without a cheap oracle.
inline ReferenceMoments reference_run(const ExperimentConfig& c, const TargetDensity& t) {
  LangevinConfig lc;
  lc.n_chains = c.langevin_chains;
  lc.steps = c.langevin_steps;
  lc.burn_in = c.langevin_burn_in;
  lc.target_acceptance = c.langevin_target_acceptance;
  lc.thin = c.langevin_thin;
  lc.step_size = c.step_size;
  lc.seed = c.seed;
  lc.workers = c.workers;
  const bool constrained = c.moment_space == "constrained" ||
                           (c.moment_space == "auto" && c.target != "sparse_logistic");
  ReferenceMoments r = long_mala_reference(t, lc, constrained);
  r.target = c.target;
  return r;
}

inline std::optional<ReferenceMoments> resolve_reference(const ExperimentConfig& c) {
  if (c.reference == "none") return std::nullopt;
  if (c.reference == "auto") {
    auto r = oracle_reference(c);
    if (!r) log(LogLevel::warning, "no closed-form reference for " + c.target + "; set reference=<file>");
    return r;
  }
  ReferenceMoments r = load_reference(c.reference);
  if (r.dim() != c.dim) throw ConfigError("reference " + c.reference + " has dimension " + std::to_string(r.dim()));
  return r;
}

inline bool use_constrained_moments(const ExperimentConfig& c, const std::optional<ReferenceMoments>& ref) {
  if (c.moment_space != "auto") return c.moment_space == "constrained";
  if (ref) return ref->space != "unconstrained";
  return c.target != "sparse_logistic";
}

inline DlmcConfig dlmc_config(const ExperimentConfig& c, bool constrained) {
  DlmcConfig d;
  d.step_size = c.step_size;
  d.optimizer = c.optimizer == "plain" ? Optimizer::plain_gradient : Optimizer::adagrad;
  d.latent_space = c.latent_space;
  d.mh_enabled = c.mh_enabled;
  d.n_particles = c.n_particles;
  d.burnin_iterations = c.burnin_iterations;
  d.upsample_to = c.upsample_to;
  d.convergence_window = c.convergence_window;
  d.convergence_tol = c.convergence_tol;
  d.stop_on_convergence = c.stop_on_convergence;
  d.max_iterations = c.max_iterations;
  d.seed = c.seed;
  d.workers = c.workers;
  d.allow_any_step_size = c.allow_any_step_size;
  d.validation_fraction = c.validation_fraction;
  d.max_step = c.max_step;
  d.cross_fit_mh = c.cross_fit_mh;
  d.burnin_mh = c.burnin_mh;
  d.flow.validation_fraction = c.validation_fraction;
  d.flow.max_layers = c.flow_max_layers;
  d.flow.patience = c.flow_patience;
  d.flow.knots = c.flow_knots;
  d.flow.max_directions = c.flow_max_directions;
  d.flow.direction_iterations = c.flow_direction_iterations;
  d.flow.bandwidth_factor = c.flow_bandwidth_factor;
  d.constrained_moments = constrained;
  if (c.method == "dlmc-no-mh") d.mh_enabled = false;
  if (c.method == "dlmc-no-precondition") d.latent_space = false;
  if (c.method == "mh-only") d.dl_enabled = false;
  return d;
}

struct RunArtifacts {
  ExperimentConfig config;
  std::string method;
  std::vector<std::string> names;  // constrained coordinate names
  std::vector<RunRecord> records;
  Eigen::MatrixXd samples;  // final positions, constrained space when the moments are
  std::optional<ReferenceMoments> reference;
  bool converged = false;
  int iterations = 0;
  SamplerStats stats;
  bool failed = false;
  std::string failure;
  double wall_seconds = 0.0;
};

/// Dispatches the configured method on the configured target.
inline RunResult dispatch(const ExperimentConfig& c, const TargetDensity& t, const ReferenceMoments* ref,
                          bool constrained, const RecordSink& sink) {
  if (c.method == "dlmc" || c.method == "dlmc-no-mh" || c.method == "dlmc-no-precondition" || c.method == "mh-only") {
    RunResult r = run_dlmc(t, dlmc_config(c, constrained), ref, sink);
    r.method = c.method;
    return r;
  }
  if (c.method == "dlmc-pp") {
    RunResult r = run_dlmc_pp(t, dlmc_config(c, constrained), c.kde_bandwidth, ref, sink);
    r.method = c.method;
    return r;
  }
  if (c.method == "svgd") {
    SvgdConfig s;
    s.n_particles = c.n_particles;
    s.step_size = c.step_size;
    s.bandwidth = c.svgd_bandwidth;
    s.max_iterations = c.max_iterations;
    s.seed = c.seed;
    s.workers = c.workers;
    s.convergence_window = c.convergence_window;
    s.convergence_tol = c.convergence_tol;
    s.stop_on_convergence = c.stop_on_convergence;
    s.constrained_moments = constrained;
    return run_svgd(t, s, ref, sink);
  }
  if (c.method == "mala" || c.method == "ula") {
    LangevinConfig lc;
    lc.n_chains = c.langevin_chains;
    lc.steps = c.langevin_steps;
    lc.burn_in = c.langevin_burn_in;
    lc.target_acceptance = c.langevin_target_acceptance;
    lc.step_size = c.step_size;
    lc.adjusted = c.method == "mala";
    lc.thin = c.langevin_thin;
    lc.seed = c.seed;
    lc.workers = c.workers;
    lc.record_every = c.langevin_record_every;
    lc.constrained_moments = constrained;
    LangevinResult lr = run_langevin(t, lc, ref, nullptr, sink);
    RunResult r;
    r.method = c.method;
    r.records = std::move(lr.records);
    r.stats = lr.stats;
    r.ensemble.positions = lr.final_positions;
    r.iterations = static_cast<int>(std::min<long long>(c.langevin_steps, std::numeric_limits<int>::max()));
    std::vector<MomentSummary> history;
    for (const auto& rec : r.records) history.push_back(rec.moments);
    r.converged = check_convergence(history, c.convergence_window, c.convergence_tol);
    return r;
  }
  throw ConfigError("unknown method '" + c.method + "'");
}

/// Runs the configured experiment. Exceptions during the run are captured
/// into the artifacts (failed = true) so the records so far can be written.
inline RunArtifacts run_experiment(const ExperimentConfig& c) {
  validate(c);
  RunArtifacts a;
  a.config = c;
  a.method = c.method;
  const TargetDensity t = make_target(c);
  a.reference = resolve_reference(c);
  const bool constrained = use_constrained_moments(c, a.reference);
  a.names = t.coordinate_names();
  const auto t0 = std::chrono::steady_clock::now();
  RecordSink sink = [&a](const RunRecord& r) { a.records.push_back(r); };
  try {
    RunResult r = dispatch(c, t, a.reference ? &*a.reference : nullptr, constrained, sink);
    a.converged = r.converged;
    a.iterations = r.iterations;
    a.stats = r.stats;
    a.samples = constrained ? constrained_positions(t, r.ensemble.positions) : r.ensemble.positions;
  } catch (const std::exception& e) {
    a.failed = true;
    a.failure = e.what();
    log(LogLevel::error, std::string("run failed: ") + e.what());
  }
  a.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

namespace detail {

inline nlohmann::ordered_json record_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["phase"] = r.phase;
  j["n_particles"] = r.n_particles;
  j["mean"] = vector_json(r.moments.mean);
  j["second_moment"] = vector_json(r.moments.second_moment);
  j["mh_acceptance"] = r.mh_acceptance ? nlohmann::ordered_json(*r.mh_acceptance) : nlohmann::ordered_json();
  j["likelihood_calls"] = r.ledger.likelihood_calls;
  j["gradient_calls"] = r.ledger.gradient_calls;
  j["sequential_seconds"] = r.ledger.sequential_seconds;
  j["parallel_seconds"] = r.ledger.parallel_seconds;
  j["flow_layers"] = r.flow_layers;
  j["skipped_steps"] = r.skipped_steps;
  if (r.bias) {
    j["b2_mean"] = real_json(r.bias->mean);
    j["b2_max"] = real_json(r.bias->max);
  }
  return j;
}

inline std::string csv_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline std::string records_jsonl(const RunArtifacts& a) {
  std::string out;
  for (const auto& r : a.records) out += detail::record_json(r).dump() + "\n";
  if (a.failed) out += nlohmann::ordered_json{{"failure", a.failure}}.dump() + "\n";
  return out;
}

inline std::string curve_csv(const RunArtifacts& a) {
  std::string out =
      "iteration,likelihood_calls,gradient_calls,sequential_seconds,parallel_seconds,b2_mean,b2_max,mh_acceptance\n";
  for (const auto& r : a.records) {
    out += std::to_string(r.iteration) + "," + std::to_string(r.ledger.likelihood_calls) + "," +
           std::to_string(r.ledger.gradient_calls) + "," + detail::csv_real(r.ledger.sequential_seconds) + "," +
           detail::csv_real(r.ledger.parallel_seconds) + "," + (r.bias ? detail::csv_real(r.bias->mean) : "") + "," +
           (r.bias ? detail::csv_real(r.bias->max) : "") + "," +
           (r.mh_acceptance ? detail::csv_real(*r.mh_acceptance) : "") + "\n";
  }
  return out;
}

inline std::string samples_csv(const RunArtifacts& a) {
  std::string out;
  for (std::size_t i = 0; i < a.names.size(); ++i) out += (i ? "," : "") + a.names[i];
  out += "\n";
  for (Eigen::Index r = 0; r < a.samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.samples.cols(); ++c) out += (c ? "," : "") + detail::csv_real(a.samples(r, c));
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json summary_json(const RunArtifacts& a) {
  nlohmann::ordered_json j;
  j["status"] = a.failed ? "failed" : "ok";
  if (a.failed) j["failure"] = a.failure;
  j["method"] = a.method;
  j["target"] = a.config.target;
  j["dim"] = a.config.dim;
  j["seed"] = a.config.seed;
  j["converged"] = a.converged;
  j["iterations"] = a.iterations;
  j["records"] = a.records.size();
  const CostLedger& l = a.records.empty() ? a.stats.ledger : a.records.back().ledger;
  j["likelihood_calls"] = l.likelihood_calls;
  j["gradient_calls"] = l.gradient_calls;
  j["sequential_seconds"] = l.sequential_seconds;
  j["parallel_seconds"] = l.parallel_seconds;
  j["dl_updates"] = a.stats.dl_updates;
  j["mh_passes"] = a.stats.mh_passes;
  j["latent_maps"] = a.stats.latent_maps;
  j["skipped_steps"] = a.stats.skipped_steps;
  j["rejected_nonfinite"] = a.stats.rejected_nonfinite;
  std::optional<BiasSquared> b;
  if (a.reference) {
    if (!a.records.empty() && a.records.back().bias)
      b = a.records.back().bias;
    else if (a.samples.rows() > 0)
      b = bias_squared(summarize(a.samples), *a.reference);
  }
  if (b) {
    j["b2_mean"] = detail::real_json(b->mean);
    j["b2_max"] = detail::real_json(b->max);
    j["ess_equivalent"] = detail::real_json(ess_gaussian_equivalent(b->mean));
  } else {
    j["b2_mean"] = nullptr;
    j["b2_max"] = nullptr;
    j["ess_equivalent"] = nullptr;
  }
  std::vector<double> acc;
  for (const auto& r : a.records)
    if (r.mh_acceptance) acc.push_back(*r.mh_acceptance);
  if (acc.empty()) {
    j["mh_acceptance"] = nullptr;
  } else {
    double s = 0;
    for (double v : acc) s += v;
    j["mh_acceptance"] = {{"first", acc.front()},
                          {"last", acc.back()},
                          {"mean", s / static_cast<double>(acc.size())},
                          {"min", *std::min_element(acc.begin(), acc.end())},
                          {"max", *std::max_element(acc.begin(), acc.end())}};
  }
  if (a.samples.rows() > 0) {
    const MomentSummary m = summarize(a.samples);
    j["final_mean"] = detail::vector_json(m.mean);
    j["final_second_moment"] = detail::vector_json(m.second_moment);
  }
  return j;
}

/// Writes config.json, records.jsonl, curve.csv, samples.csv, reference.json
/// (when a reference exists), summary.json and timing.json. Everything but
/// timing.json is a deterministic function of the config.
inline void emit_outputs(const RunArtifacts& a, const std::filesystem::path& dir) {
  ensure_writable_directory(dir);
  write_file_atomic(dir / "config.json", config_to_json(a.config).dump(1) + "\n");
  write_file_atomic(dir / "records.jsonl", records_jsonl(a));
  write_file_atomic(dir / "curve.csv", curve_csv(a));
  write_file_atomic(dir / "samples.csv", samples_csv(a));
  if (a.reference) write_file_atomic(dir / "reference.json", reference_to_json(*a.reference).dump(1) + "\n");
  write_file_atomic(dir / "summary.json", summary_json(a).dump(1) + "\n");
  nlohmann::ordered_json timing{{"wall_seconds", a.wall_seconds}, {"flow_fit_seconds", a.stats.ledger.flow_fit_seconds}};
  write_file_atomic(dir / "timing.json", timing.dump(1) + "\n");
}

/// Runs and writes outputs to cfg.output_dir, checking it up front.
inline RunArtifacts run_and_emit(const ExperimentConfig& c) {
  ensure_writable_directory(c.output_dir);
  RunArtifacts a = run_experiment(c);
  emit_outputs(a, c.output_dir);
  return a;
}

}  // namespace dlmc
