#pragma once

#include "dlmc/diagnostics.hpp"
#include "dlmc/ensemble.hpp"
#include "dlmc/flow.hpp"
#include "dlmc/latent.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dlmc {

enum class Optimizer { plain_gradient, adagrad };

struct DlmcConfig {
  double step_size = 0.05;  // plain-gradient dt, or the Adagrad learning rate
  Optimizer optimizer = Optimizer::adagrad;
  bool latent_space = true;
  bool mh_enabled = true;
  bool dl_enabled = true;  // false gives the MH-only variant
  int n_particles = 500;
  int burnin_iterations = 0;  // iterations at n_particles before upsampling
  int upsample_to = 0;        // ensemble size after burn-in; 0 keeps n_particles
  int convergence_window = 5;
  double convergence_tol = 0.02;
  bool stop_on_convergence = true;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  int workers = 1;
  bool allow_any_step_size = false;
  double validation_fraction = 0.2;
  FlowFitOptions flow;
  bool constrained_moments = true;  // record moments of constrained coordinates
  double max_step = 0.0;            // per-coordinate displacement cap; 0 disables
  bool cross_fit_mh = true;         // MH proposals from a model fitted on the other half
  bool burnin_mh = false;           // MH also during the small-ensemble burn-in

  void validate() const {
    if (!allow_any_step_size && !(step_size >= 0.001 && step_size <= 0.1))
      throw ConfigError("step size must lie in [0.001, 0.1] (set allow_any_step_size to override)");
    if (!(step_size >= 0)) throw ConfigError("step size must be nonnegative");
    if (n_particles < 2) throw ConfigError("need at least two particles");
    if (upsample_to != 0 && upsample_to < n_particles) throw ConfigError("upsample_to must not shrink the ensemble");
    if (burnin_iterations < 0 || max_iterations < 0) throw ConfigError("iteration counts must be nonnegative");
    if (convergence_window < 1 || !(convergence_tol > 0)) throw ConfigError("bad convergence settings");
    if (!(max_step >= 0)) throw ConfigError("max_step must be nonnegative");
  }
};

/// Per-particle, per-coordinate Adagrad memory.
struct AdagradState {
  Eigen::MatrixXd accumulator;
  double epsilon = 1e-8;

  void reset(int n, int d) { accumulator = Eigen::MatrixXd::Zero(n, d); }
};

namespace detail {

// One optimizer step on row `i`: returns the displacement for direction g
// (the update goes against g).
// Nonzero max_step caps each coordinate of the displacement.
inline Eigen::VectorXd optimizer_step(const Eigen::VectorXd& g, double step, Optimizer opt, AdagradState* ada,
                                      Eigen::Index i, double max_step = 0.0) {
  Eigen::VectorXd s;
  if (opt == Optimizer::plain_gradient) {
    s = -step * g;
  } else {
    auto acc = ada->accumulator.row(i);
    acc += g.cwiseAbs2().transpose();
    s = (-step * g.array() / (acc.transpose().array().sqrt() + ada->epsilon)).matrix();
  }
  if (max_step > 0) s = s.cwiseMax(-max_step).cwiseMin(max_step);
  return s;
}

inline void ensure_adagrad(AdagradState& a, int n, int d) {
  if (a.accumulator.rows() != n || a.accumulator.cols() != d) a.reset(n, d);
}

}  // namespace detail

/// Prior draws moved one step along -grad L (the prior term cancels against
/// the initial density). Draws with non-finite potential are redrawn, up to
/// 100 attempts. With an Adagrad state the step goes through the optimizer.
inline ParticleEnsemble init_from_prior(const TargetDensity& t, int n, double dt, std::uint64_t seed,
                                        SamplerStats* stats = nullptr, Optimizer opt = Optimizer::plain_gradient,
                                        AdagradState* ada = nullptr, bool* moved_out = nullptr,
                                        double max_step = 0.0) {
  if (n < 2) throw ConfigError("init_from_prior needs at least two particles");
  const int d = t.dim();
  ParticleEnsemble e;
  e.positions.resize(n, d);
  e.potential_values.resize(n);
  e.grad_potentials.resize(n, d);
  Eigen::MatrixXd grad_lik(n, d);
  const int workers = stats ? stats->workers : 1;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    Rng rng = make_substream(seed, "prior", i);
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    for (int attempt = 0;; ++attempt) {
      const Eigen::VectorXd x = t.sample_prior(rng);
      const PotentialParts p = t.parts(x);
      const bool finite = std::isfinite(p.potential()) && p.grad_potential().allFinite();
      if (finite || attempt >= 99) {
        if (!finite) throw DomainError("prior draw with finite potential not found in 100 attempts");
        e.positions.row(r) = x.transpose();
        e.potential_values(r) = p.potential();
        e.grad_potentials.row(r) = p.grad_potential().transpose();
        grad_lik.row(r) = p.grad_likelihood.transpose();
        break;
      }
    }
  });
  if (stats) stats->ledger = update_cost_ledger(stats->ledger, n, n, t.cost_per_likelihood_call());
  if (opt == Optimizer::adagrad) {
    if (!ada) throw ConfigError("adagrad initial update needs an optimizer state");
    detail::ensure_adagrad(*ada, n, d);
  }
  bool moved = false;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd g = grad_lik.row(i).transpose();
    if (dt == 0.0 || (g.array() == 0.0).all()) continue;
    e.positions.row(i) += detail::optimizer_step(g, dt, opt, ada, i, max_step).transpose();
    moved = true;
  }
  if (moved) evaluate_potentials(t, e.positions, e.potential_values, e.grad_potentials, stats, n);
  if (moved_out) *moved_out = moved;
  e.flow_log_densities = Eigen::VectorXd::Zero(n);
  e.iteration = 0;
  return e;
}

namespace detail {

template <DensityModel M>
void finish_update(ParticleEnsemble& out, const TargetDensity& t, const M& m, const std::vector<char>& skipped,
                        SamplerStats* stats) {
  long long n_skipped = 0;
  for (char s : skipped) n_skipped += s;
  if (n_skipped > 0) log(LogLevel::warning, "dl update: skipped " + std::to_string(n_skipped) + " particle(s) with non-finite direction");
  evaluate_potentials(t, out.positions, out.potential_values, out.grad_potentials, stats, out.size());
  out.flow_log_densities = model_log_densities(m, out.positions, stats ? stats->workers : 1);
  ++out.iteration;
  if (stats) {
    stats->skipped_steps += n_skipped;
    ++stats->dl_updates;
  }
}

}  // namespace detail


/// Deterministic Langevin step in data space: every particle moves along
/// -grad(U - V) = -(grad U + grad log q). A particle whose direction is not
/// finite keeps its position.
template <DensityModel M>
ParticleEnsemble dl_update(const ParticleEnsemble& e, const TargetDensity& t, const M& m, const DlmcConfig& cfg,
                           AdagradState& ada, SamplerStats* stats = nullptr) {
  const int n = e.size(), d = e.dim();
  if (cfg.optimizer == Optimizer::adagrad) detail::ensure_adagrad(ada, n, d);
  ParticleEnsemble out = e;
  std::vector<char> skipped(static_cast<std::size_t>(n), 0);
  const int workers = stats ? stats->workers : 1;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = e.positions.row(r).transpose();
    const Eigen::VectorXd g = e.grad_potentials.row(r).transpose() + m.grad_log_density(x);
    if (!g.allFinite()) {
      skipped[i] = 1;
      return;
    }
    out.positions.row(r) = (x + detail::optimizer_step(g, cfg.step_size, cfg.optimizer, &ada, r, cfg.max_step)).transpose();
  });
  detail::finish_update(out, t, m, skipped, stats);
  return out;
}

/// Deterministic Langevin step in the flow's latent space:
/// z <- z - grad U(z) dt + z dt, mapped back through the inverse flow. The
/// combined direction grad U(z) - z equals (dx/dz)^T grad_x(U - V).
inline ParticleEnsemble dl_update_latent(const ParticleEnsemble& e, const TargetDensity& t, const FlowModel& m,
                                         const DlmcConfig& cfg, AdagradState& ada, SamplerStats* stats = nullptr) {
  const int n = e.size(), d = e.dim();
  if (cfg.optimizer == Optimizer::adagrad) detail::ensure_adagrad(ada, n, d);
  ParticleEnsemble out = e;
  std::vector<char> skipped(static_cast<std::size_t>(n), 0);
  const int workers = stats ? stats->workers : 1;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = e.positions.row(r).transpose();
    const FlowModel::Evaluation fe = m.evaluate(x);
    const Eigen::VectorXd gx = e.grad_potentials.row(r).transpose() + fe.grad_log_density;
    const Eigen::VectorXd g = m.latent_pullback(x, gx);
    if (!g.allFinite()) {
      skipped[i] = 1;
      return;
    }
    const Eigen::VectorXd z = fe.z + detail::optimizer_step(g, cfg.step_size, cfg.optimizer, &ada, r, cfg.max_step);
    const Eigen::VectorXd xn = m.inverse(z);
    if (!xn.allFinite()) {
      skipped[i] = 1;
      return;
    }
    out.positions.row(r) = xn.transpose();
  });
  if (stats) stats->latent_maps += n;
  detail::finish_update(out, t, m, skipped, stats);
  return out;
}

struct MhResult {
  ParticleEnsemble ensemble;
  double acceptance_rate = 0.0;
};

/// Independent-proposal Metropolis-Hastings: each particle proposes one
/// fresh draw from the density model and accepts with probability
/// min{1, p(x~) q(x) / (p(x) q(x~))}, evaluated in log space. The cached
/// flow_log_densities must refer to `m`.
namespace detail {

// MH pass over the rows listed in `rows` (all rows when empty); the counters
// are updated but the pass itself is not counted.
template <DensityModel M>
long long mh_kernel(ParticleEnsemble& out, const ParticleEnsemble& e, const TargetDensity& t, const M& m,
                    const std::vector<Eigen::Index>& rows, std::uint64_t seed, std::uint64_t round,
                    SamplerStats* stats) {
  const int n = rows.empty() ? e.size() : static_cast<int>(rows.size());
  std::vector<char> accepted(static_cast<std::size_t>(n), 0), bad(static_cast<std::size_t>(n), 0);
  const int workers = stats ? stats->workers : 1;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const Eigen::Index r = rows.empty() ? static_cast<Eigen::Index>(i) : rows[i];
    Rng rng = make_substream(seed, "mh", static_cast<std::uint64_t>(r), round);
    const Eigen::VectorXd prop = m.sample_one(rng);
    const double u = uniform01(rng);
    if (!prop.allFinite()) {
      bad[i] = 1;
      return;
    }
    const PotentialParts p = t.parts(prop);
    const double up = p.potential();
    const double lq = m.log_density(prop);
    const double log_r = (-up + e.potential_values(r)) + (e.flow_log_densities(r) - lq);
    if (!std::isfinite(up) || !std::isfinite(lq) || std::isnan(log_r)) {
      bad[i] = 1;
      return;
    }
    const Eigen::VectorXd gp = p.grad_potential();
    if (!gp.allFinite()) {
      bad[i] = 1;
      return;
    }
    if (log_r >= 0.0 || std::log(u) < log_r) {
      accepted[i] = 1;
      out.positions.row(r) = prop.transpose();
      out.potential_values(r) = up;
      out.grad_potentials.row(r) = gp.transpose();
      out.flow_log_densities(r) = lq;
    }
  });
  long long n_acc = 0, n_bad = 0;
  for (int i = 0; i < n; ++i) {
    n_acc += accepted[static_cast<std::size_t>(i)];
    n_bad += bad[static_cast<std::size_t>(i)];
  }
  if (n_bad > 0) log(LogLevel::warning, "mh: auto-rejected " + std::to_string(n_bad) + " non-finite proposal(s)");
  if (stats) {
    stats->ledger = update_cost_ledger(stats->ledger, n, n, t.cost_per_likelihood_call());
    stats->rejected_nonfinite += n_bad;
  }
  return n_acc;
}

}  // namespace detail

template <DensityModel M>
MhResult mh_adjust(const ParticleEnsemble& e, const TargetDensity& t, const M& m, std::uint64_t seed,
                   std::uint64_t round, SamplerStats* stats = nullptr) {
  MhResult res{e, 0.0};
  const long long n_acc = detail::mh_kernel(res.ensemble, e, t, m, {}, seed, round, stats);
  res.acceptance_rate = static_cast<double>(n_acc) / e.size();
  if (stats) ++stats->mh_passes;
  return res;
}

/// Cross-fitted MH: particles are split into even and odd rows. Each half is
/// updated with a model fitted on the other half, the second half seeing the
/// already updated first half. The proposal density then never depends on
/// the particle it is tested against. fit(positions, fold) must return a
/// model of type M. With fewer than four particles this falls back to a
/// single model fitted on the whole ensemble.
template <DensityModel M, typename Fit>
MhResult mh_adjust_cross_fit(const ParticleEnsemble& e, const TargetDensity& t, Fit&& fit, std::uint64_t seed,
                             std::uint64_t round, SamplerStats* stats = nullptr) {
  const int n = e.size();
  if (n < 4) {
    ParticleEnsemble local = e;
    const M m = fit(e.positions, 0);
    local.flow_log_densities = model_log_densities(m, e.positions, stats ? stats->workers : 1);
    return mh_adjust(local, t, m, seed, round, stats);
  }
  MhResult res{e, 0.0};
  long long n_acc = 0;
  for (int fold = 0; fold < 2; ++fold) {
    std::vector<Eigen::Index> rows, others;
    for (Eigen::Index i = 0; i < n; ++i) (i % 2 == fold ? rows : others).push_back(i);
    const M m = fit(res.ensemble.positions(others, Eigen::all), fold);
    ParticleEnsemble cur = res.ensemble;
    for (Eigen::Index r : rows) cur.flow_log_densities(r) = m.log_density(cur.positions.row(r).transpose());
    res.ensemble = cur;
    n_acc += detail::mh_kernel(res.ensemble, cur, t, m, rows, seed, 2 * round + static_cast<std::uint64_t>(fold),
                               stats);
  }
  res.acceptance_rate = static_cast<double>(n_acc) / n;
  if (stats) ++stats->mh_passes;
  return res;
}

/// Grows the ensemble to n_new particles drawn from the fitted density model,
/// followed by one MH pass against fresh model draws.
template <DensityModel M>
MhResult upsample_ensemble(const ParticleEnsemble& e, const TargetDensity& t, const M& m, int n_new,
                           std::uint64_t seed, std::uint64_t round, SamplerStats* stats = nullptr) {
  if (n_new < e.size()) throw ConfigError("upsample target smaller than the current ensemble");
  const int d = e.dim();
  ParticleEnsemble out;
  out.positions.resize(n_new, d);
  const int workers = stats ? stats->workers : 1;
  parallel_for(static_cast<std::size_t>(n_new), workers, [&](std::size_t i) {
    Rng rng = make_substream(seed, "upsample", i, round);
    out.positions.row(static_cast<Eigen::Index>(i)) = m.sample_one(rng).transpose();
  });
  evaluate_potentials(t, out.positions, out.potential_values, out.grad_potentials, stats, n_new);
  out.flow_log_densities = model_log_densities(m, out.positions, workers);
  out.iteration = e.iteration;
  // draws with a non-finite potential are left for MH to replace
  return mh_adjust(out, t, m, seed, round ^ 0x75706d68ULL, stats);
}

/// True when, over the trailing window, the least-squares drift per
/// iteration of every first moment (relative to the coordinate's standard
/// deviation) and every second moment (relative to itself) is at most tol.
inline bool check_convergence(const std::vector<MomentSummary>& history, int window, double tol) {
  if (window < 1 || static_cast<int>(history.size()) < window + 1) return false;
  const std::size_t start = history.size() - static_cast<std::size_t>(window) - 1;
  const int m = window + 1;
  const double tbar = 0.5 * window;
  double sxx = 0.0;
  for (int k = 0; k < m; ++k) sxx += (k - tbar) * (k - tbar);
  const MomentSummary& last = history.back();
  const Eigen::VectorXd sd = last.variance().cwiseSqrt();
  for (int i = 0; i < last.dim(); ++i) {
    double s_mean = 0.0, s_second = 0.0;
    for (int k = 0; k < m; ++k) {
      const MomentSummary& h = history[start + static_cast<std::size_t>(k)];
      s_mean += (k - tbar) * h.mean(i);
      s_second += (k - tbar) * h.second_moment(i);
    }
    const double scale_mean = sd(i) > 0 ? sd(i) : std::max(std::abs(last.mean(i)), 1e-300);
    const double scale_second = last.second_moment(i) > 0 ? last.second_moment(i) : 1e-300;
    if (std::abs(s_mean / sxx) > tol * scale_mean) return false;
    if (std::abs(s_second / sxx) > tol * scale_second) return false;
  }
  return true;
}

/// Per-iteration diagnostics.
struct RunRecord {
  int iteration = 0;
  std::string phase;
  int n_particles = 0;
  MomentSummary moments;
  std::optional<double> mh_acceptance;
  CostLedger ledger;
  int flow_layers = 0;
  long long skipped_steps = 0;
  std::optional<BiasSquared> bias;
};

struct RunResult {
  ParticleEnsemble ensemble;
  std::vector<RunRecord> records;
  bool converged = false;
  int iterations = 0;
  SamplerStats stats;
  std::string method;
};

/// Callback invoked after each recorded iteration (used for streaming output).
using RecordSink = std::function<void(const RunRecord&)>;

namespace detail {

inline MomentSummary ensemble_moments(const TargetDensity& t, const ParticleEnsemble& e, bool constrained, int it) {
  return summarize(constrained ? constrained_positions(t, e.positions) : e.positions, it);
}

/// What one sampler iteration does with its density model.
struct LoopHooks {
  // fit the density model to the current ensemble, refresh the cached log
  // densities and return the layer count for the record
  std::function<int(ParticleEnsemble&, int iteration, SamplerStats&)> fit;
  std::function<ParticleEnsemble(const ParticleEnsemble&, AdagradState&, SamplerStats&)> dl_step;
  std::function<MhResult(const ParticleEnsemble&, int iteration, SamplerStats&)> mh_step;
  std::function<MhResult(const ParticleEnsemble&, int n_new, int iteration, SamplerStats&)> upsample;
};

inline RunResult run_particle_loop(const TargetDensity& t, const DlmcConfig& cfg, const LoopHooks& hooks,
                                   const ReferenceMoments* ref, const RecordSink& sink, std::string method) {
  cfg.validate();
  RunResult res;
  res.method = std::move(method);
  res.stats.workers = cfg.workers;
  AdagradState ada;
  const bool use_ada = cfg.optimizer == Optimizer::adagrad;
  bool moved = false;
  ParticleEnsemble e = init_from_prior(t, cfg.n_particles, cfg.dl_enabled ? cfg.step_size : 0.0, cfg.seed,
                                       &res.stats, cfg.optimizer, use_ada ? &ada : nullptr, &moved, cfg.max_step);
  if (cfg.dl_enabled && !moved) {
    // grad L vanished at every prior draw: the prior is already the posterior
    log(LogLevel::info, "likelihood gradient is zero at all prior draws; stopping at iteration 0");
    res.ensemble = std::move(e);
    res.converged = true;
    return res;
  }

  bool in_burnin = cfg.burnin_iterations > 0 && cfg.upsample_to > 0;
  std::vector<MomentSummary> history;
  int it = 0;
  while (true) {
    if (in_burnin && it >= cfg.burnin_iterations) {
      hooks.fit(e, it, res.stats);
      MhResult up = hooks.upsample(e, cfg.upsample_to, it, res.stats);
      e = std::move(up.ensemble);
      if (use_ada) ada.reset(e.size(), e.dim());
      in_burnin = false;
      history.clear();
    }
    if (it >= cfg.max_iterations) break;
    ++it;
    RunRecord rec;
    rec.iteration = it;
    rec.phase = in_burnin ? "burnin" : "main";
    rec.flow_layers = hooks.fit(e, it, res.stats);
    if (cfg.dl_enabled) e = hooks.dl_step(e, ada, res.stats);
    if (cfg.mh_enabled && (!in_burnin || cfg.burnin_mh)) {
      MhResult r = hooks.mh_step(e, it, res.stats);
      e = std::move(r.ensemble);
      rec.mh_acceptance = r.acceptance_rate;
    }
    e.iteration = it;
    rec.n_particles = e.size();
    rec.moments = ensemble_moments(t, e, cfg.constrained_moments, it);
    rec.ledger = res.stats.ledger;
    rec.skipped_steps = res.stats.skipped_steps;
    if (ref) rec.bias = bias_squared(rec.moments, *ref);
    if (sink) sink(rec);
    history.push_back(rec.moments);
    res.records.push_back(std::move(rec));
    if (!in_burnin && cfg.stop_on_convergence &&
        check_convergence(history, cfg.convergence_window, cfg.convergence_tol)) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it;
  res.ensemble = std::move(e);
  return res;
}

inline FlowModel fit_ensemble_flow(const Eigen::MatrixXd& positions, const DlmcConfig& cfg, int it,
                                   std::uint64_t stream = 0) {
  if (positions.rows() >= cfg.flow.min_samples) {
    Rng rng = make_substream(cfg.seed, "flow", stream, static_cast<std::uint64_t>(it));
    return fit_flow(positions, cfg.validation_fraction, rng, cfg.flow);
  }
  return fit_gaussian_flow(positions, cfg.flow.covariance_jitter);
}

/// Hooks that drive the loop with a normalizing flow refitted every iteration.
inline LoopHooks flow_hooks(const TargetDensity& t, const DlmcConfig& cfg, FlowModel& flow) {
  LoopHooks h;
  h.fit = [&t, &cfg, &flow](ParticleEnsemble& e, int it, SamplerStats& s) {
    (void)t;
    const auto t0 = std::chrono::steady_clock::now();
    flow = fit_ensemble_flow(e.positions, cfg, it);
    s.ledger.flow_fit_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    e.flow_log_densities = model_log_densities(flow, e.positions, cfg.workers);
    return flow.num_layers();
  };
  h.dl_step = [&t, &cfg, &flow](const ParticleEnsemble& e, AdagradState& ada, SamplerStats& s) {
    return cfg.latent_space ? dl_update_latent(e, t, flow, cfg, ada, &s) : dl_update(e, t, flow, cfg, ada, &s);
  };
  h.mh_step = [&t, &cfg, &flow](const ParticleEnsemble& e, int it, SamplerStats& s) {
    if (!cfg.cross_fit_mh) return mh_adjust(e, t, flow, cfg.seed, static_cast<std::uint64_t>(it), &s);
    auto fit = [&cfg, &s, it](const Eigen::MatrixXd& x, int fold) {
      const auto t0 = std::chrono::steady_clock::now();
      FlowModel m = fit_ensemble_flow(x, cfg, it, 1 + static_cast<std::uint64_t>(fold));
      s.ledger.flow_fit_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return m;
    };
    return mh_adjust_cross_fit<FlowModel>(e, t, fit, cfg.seed, static_cast<std::uint64_t>(it), &s);
  };
  h.upsample = [&t, &cfg, &flow](const ParticleEnsemble& e, int n_new, int it, SamplerStats& s) {
    return upsample_ensemble(e, t, flow, n_new, cfg.seed, static_cast<std::uint64_t>(it), &s);
  };
  return h;
}

}  // namespace detail

/// Full DLMC loop: fit the flow on the current particles, deterministic
/// Langevin update (latent or data space), MH adjustment, repeat until the
/// moments are stationary or max_iterations is reached. An optional burn-in
/// runs at n_particles before upsampling to upsample_to.
inline RunResult run_dlmc(const TargetDensity& t, const DlmcConfig& cfg, const ReferenceMoments* ref = nullptr,
                          const RecordSink& sink = {}, FlowModel* final_flow = nullptr) {
  FlowModel flow = FlowModel::identity(t.dim());
  RunResult r = detail::run_particle_loop(t, cfg, detail::flow_hooks(t, cfg, flow), ref, sink,
                                          cfg.dl_enabled ? "dlmc" : "mh_only");
  if (final_flow) *final_flow = flow;
  return r;
}

}  // namespace dlmc
