#pragma once

#include "dlmc/diagnostics.hpp"
#include "dlmc/ensemble.hpp"
#include "dlmc/sampler.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace dlmc {

// ---------------------------------------------------------------------------
// Unadjusted and Metropolis-adjusted Langevin

struct LangevinState {
  Eigen::VectorXd x;
  double potential = 0.0;
  Eigen::VectorXd grad;
};

inline LangevinState langevin_state(const TargetDensity& t, const Eigen::VectorXd& x) {
  const PotentialParts p = t.parts(x);
  return {x, p.potential(), p.grad_potential()};
}

namespace detail {

// log N(to; from - grad*dt, 2 dt I) up to a constant shared by both directions
inline double langevin_log_transition(const Eigen::VectorXd& to, const Eigen::VectorXd& from,
                                      const Eigen::VectorXd& grad_from, double dt) {
  return -(to - from + dt * grad_from).squaredNorm() / (4.0 * dt);
}

}  // namespace detail

/// One Langevin step x' = x - grad U(x) dt + sqrt(2 dt) xi. With `adjusted`
/// the move is accepted by the Metropolis-Hastings rule for the asymmetric
/// Gaussian proposal. Returns true when the state moved.
inline bool langevin_step(LangevinState& s, const TargetDensity& t, double dt, Rng& rng, bool adjusted) {
  if (!(dt > 0)) throw ConfigError("langevin step needs dt > 0");
  Eigen::VectorXd prop = s.x - dt * s.grad;
  const double scale = std::sqrt(2.0 * dt);
  for (Eigen::Index i = 0; i < prop.size(); ++i) prop(i) += scale * standard_normal(rng);
  const double u = adjusted ? uniform01(rng) : 0.0;
  const PotentialParts p = t.parts(prop);
  const double up = p.potential();
  const Eigen::VectorXd gp = p.grad_potential();
  if (!std::isfinite(up) || !gp.allFinite()) {
    log(LogLevel::debug, adjusted ? "mala: auto-rejected non-finite proposal" : "ula: rejected non-finite step");
    return false;
  }
  if (adjusted) {
    const double log_r = -up + s.potential + detail::langevin_log_transition(s.x, prop, gp, dt) -
                         detail::langevin_log_transition(prop, s.x, s.grad, dt);
    if (!(log_r >= 0.0 || std::log(u) < log_r)) return false;
  }
  s.x = std::move(prop);
  s.potential = up;
  s.grad = gp;
  return true;
}

struct LangevinStep {
  Eigen::VectorXd x;
  bool accepted = true;
};

/// Stateless form of langevin_step.
inline LangevinStep ula_step(const Eigen::VectorXd& x, const TargetDensity& t, double dt, Rng& rng, bool adjusted) {
  LangevinState s = langevin_state(t, x);
  const bool moved = langevin_step(s, t, dt, rng, adjusted);
  return {s.x, moved || !adjusted};
}

struct LangevinConfig {
  int n_chains = 4;
  long long steps = 100000;  // per chain, after burn-in
  long long burn_in = 1000;
  double step_size = 0.05;
  bool adjusted = true;
  int thin = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  int n_batches = 50;   // batch means for standard errors
  int record_every = 0;  // steps between records; 0 gives ten records
  bool constrained_moments = true;
  // adjusted chains only: tune each chain's step during burn-in toward this
  // acceptance rate, then keep it fixed; 0 disables
  double target_acceptance = 0.0;
};

/// Pooled output of independent Langevin chains.
struct LangevinResult {
  MomentSummary moments;
  Eigen::VectorXd mean_stderr;
  Eigen::VectorXd second_moment_stderr;
  double acceptance_rate = 0.0;
  Eigen::MatrixXd final_positions;  // one row per chain
  std::vector<double> step_sizes;   // per chain, after burn-in
  std::vector<RunRecord> records;
  SamplerStats stats;
  long long total_steps = 0;
};

/// Runs cfg.n_chains chains from prior draws (or from `start` rows). Moments
/// and batch-means standard errors are pooled over all retained draws.
inline LangevinResult run_langevin(const TargetDensity& t, const LangevinConfig& cfg,
                                   const ReferenceMoments* ref = nullptr, const Eigen::MatrixXd* start = nullptr,
                                   const RecordSink& sink = {}) {
  if (cfg.n_chains < 1 || cfg.steps < 1 || cfg.burn_in < 0 || cfg.thin < 1 || cfg.n_batches < 2)
    throw ConfigError("bad langevin chain settings");
  if (!(cfg.target_acceptance >= 0 && cfg.target_acceptance < 1)) throw ConfigError("target acceptance must lie in [0, 1)");
  const int d = t.dim(), nc = cfg.n_chains;
  const long long n_keep = cfg.steps / cfg.thin;
  if (n_keep < cfg.n_batches) throw ConfigError("too few retained draws for batch means");
  const long long record_every = cfg.record_every > 0 ? cfg.record_every : std::max<long long>(cfg.steps / 10, 1);
  const long long n_slots = (cfg.steps + record_every - 1) / record_every;

  // per chain: batch sums of x and x^2, cumulative sums at record points
  std::vector<Eigen::MatrixXd> batch_s1(nc), batch_s2(nc);
  std::vector<Eigen::MatrixXd> rec_s1(nc), rec_s2(nc);
  std::vector<std::vector<long long>> rec_count(nc), rec_acc(nc);
  std::vector<long long> accepted(nc, 0), kept(nc, 0);
  Eigen::MatrixXd finals(nc, d);
  std::vector<double> step_sizes(nc, cfg.step_size);
  const long long per_batch = n_keep / cfg.n_batches;

  parallel_for(static_cast<std::size_t>(nc), cfg.workers, [&](std::size_t c) {
    Rng rng = make_substream(cfg.seed, cfg.adjusted ? "mala" : "ula", c);
    LangevinState s = langevin_state(t, start ? Eigen::VectorXd(start->row(static_cast<Eigen::Index>(c)).transpose())
                                              : t.sample_prior(rng));
    if (!std::isfinite(s.potential)) throw DomainError("langevin chain started at a non-finite potential");
    double dt = cfg.step_size;
    const bool adapt = cfg.adjusted && cfg.target_acceptance > 0;
    for (long long k = 0; k < cfg.burn_in; ++k) {
      const bool acc = langevin_step(s, t, dt, rng, cfg.adjusted);
      if (adapt) dt *= std::exp(((acc ? 1.0 : 0.0) - cfg.target_acceptance) / std::pow(1.0 + static_cast<double>(k), 0.6));
    }
    step_sizes[c] = dt;
    batch_s1[c] = Eigen::MatrixXd::Zero(cfg.n_batches, d);
    batch_s2[c] = Eigen::MatrixXd::Zero(cfg.n_batches, d);
    rec_s1[c] = Eigen::MatrixXd::Zero(n_slots, d);
    rec_s2[c] = Eigen::MatrixXd::Zero(n_slots, d);
    rec_count[c].assign(static_cast<std::size_t>(n_slots), 0);
    rec_acc[c].assign(static_cast<std::size_t>(n_slots), 0);
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d), s2 = Eigen::VectorXd::Zero(d);
    long long slot = 0;
    for (long long k = 1; k <= cfg.steps; ++k) {
      if (langevin_step(s, t, dt, rng, cfg.adjusted)) ++accepted[c];
      if (k % cfg.thin == 0) {
        const long long j = kept[c]++;
        const Eigen::VectorXd y = cfg.constrained_moments ? t.transform().to_constrained(s.x) : s.x;
        s1 += y;
        s2 += y.cwiseAbs2();
        const long long b = std::min<long long>(j / std::max<long long>(per_batch, 1), cfg.n_batches - 1);
        batch_s1[c].row(b) += y.transpose();
        batch_s2[c].row(b) += y.cwiseAbs2().transpose();
      }
      if (k % record_every == 0 || k == cfg.steps) {
        rec_s1[c].row(slot) = s1.transpose();
        rec_s2[c].row(slot) = s2.transpose();
        rec_count[c][static_cast<std::size_t>(slot)] = kept[c];
        rec_acc[c][static_cast<std::size_t>(slot)] = accepted[c];
        ++slot;
      }
    }
    finals.row(static_cast<Eigen::Index>(c)) = s.x.transpose();
  });

  LangevinResult res;
  res.stats.workers = cfg.workers;
  res.final_positions = finals;
  res.step_sizes = step_sizes;
  res.total_steps = (cfg.steps + cfg.burn_in) * nc;
  // one gradient evaluation per step per chain (plus the start), chains in parallel
  const double cost = t.cost_per_likelihood_call();
  res.stats.ledger = update_cost_ledger(res.stats.ledger, nc, nc, cost);
  res.stats.ledger = update_cost_ledger(res.stats.ledger, cfg.burn_in * nc, nc, cost);

  long long prev_step = 0;
  for (long long slot = 0; slot < n_slots; ++slot) {
    const long long step = std::min(cfg.steps, (slot + 1) * record_every);
    res.stats.ledger = update_cost_ledger(res.stats.ledger, (step - prev_step) * nc, nc, cost);
    prev_step = step;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d), s2 = Eigen::VectorXd::Zero(d);
    long long cnt = 0, acc = 0;
    for (int c = 0; c < nc; ++c) {
      s1 += rec_s1[c].row(slot).transpose();
      s2 += rec_s2[c].row(slot).transpose();
      cnt += rec_count[c][static_cast<std::size_t>(slot)];
      acc += rec_acc[c][static_cast<std::size_t>(slot)];
    }
    RunRecord rec;
    rec.iteration = static_cast<int>(step);
    rec.phase = "main";
    rec.n_particles = nc;
    rec.moments.count = cnt;
    rec.moments.iteration = rec.iteration;
    const double n = static_cast<double>(std::max<long long>(cnt, 1));
    rec.moments.mean = s1 / n;
    rec.moments.second_moment = (s2 / n).cwiseMax(rec.moments.mean.cwiseAbs2());
    if (cfg.adjusted) rec.mh_acceptance = static_cast<double>(acc) / (static_cast<double>(step) * nc);
    rec.ledger = res.stats.ledger;
    if (ref) rec.bias = bias_squared(rec.moments, *ref);
    if (sink) sink(rec);
    res.records.push_back(std::move(rec));
  }
  res.moments = res.records.back().moments;

  // batch means: pooled over chains, per_batch draws per chain per batch
  const int nb = cfg.n_batches;
  Eigen::MatrixXd bm1 = Eigen::MatrixXd::Zero(nb * nc, d), bm2 = Eigen::MatrixXd::Zero(nb * nc, d);
  for (int c = 0; c < nc; ++c)
    for (int b = 0; b < nb; ++b) {
      const long long size = b == nb - 1 ? n_keep - per_batch * (nb - 1) : per_batch;
      bm1.row(c * nb + b) = batch_s1[c].row(b) / static_cast<double>(size);
      bm2.row(c * nb + b) = batch_s2[c].row(b) / static_cast<double>(size);
    }
  auto stderr_of = [&](const Eigen::MatrixXd& bm) {
    const Eigen::RowVectorXd mu = bm.colwise().mean();
    const double m = static_cast<double>(bm.rows());
    const Eigen::RowVectorXd var = (bm.rowwise() - mu).array().square().colwise().sum() / (m - 1.0);
    return Eigen::VectorXd((var.array() / m).sqrt().transpose());
  };
  res.mean_stderr = stderr_of(bm1);
  res.second_moment_stderr = stderr_of(bm2);
  long long acc_total = 0;
  for (long long a : accepted) acc_total += a;
  res.acceptance_rate = static_cast<double>(acc_total) / (static_cast<double>(cfg.steps) * nc);
  return res;
}

/// Long adjusted-Langevin run packaged as reference moments.
inline ReferenceMoments long_mala_reference(const TargetDensity& t, const LangevinConfig& cfg, bool constrained,
                                            const Eigen::MatrixXd* start = nullptr) {
  LangevinConfig c = cfg;
  c.adjusted = true;
  c.constrained_moments = constrained;
  const LangevinResult r = run_langevin(t, c, nullptr, start);
  ReferenceMoments ref;
  ref.target = t.name();
  ref.space = constrained ? "constrained" : "unconstrained";
  ref.provenance = ReferenceProvenance::long_reference_run;
  ref.mean = r.moments.mean;
  ref.second_moment = r.moments.second_moment;
  ref.mean_stderr = r.mean_stderr;
  ref.second_moment_stderr = r.second_moment_stderr;
  ref.chain_steps = static_cast<long long>(c.n_chains) * c.steps;
  ref.notes = "mala: " + std::to_string(c.n_chains) + " chains x " + std::to_string(c.steps) + " steps, dt " +
              std::to_string(c.step_size) + ", thin " + std::to_string(c.thin) + ", acceptance " +
              std::to_string(r.acceptance_rate);
  if (c.target_acceptance > 0) {
    ref.notes += ", adapted dt";
    for (double h : r.step_sizes) ref.notes += " " + std::to_string(h);
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Kernel density estimate

/// Gaussian KDE over particle positions with isotropic width sigma.
class KdeModel {
 public:
  KdeModel(Eigen::MatrixXd positions, double sigma) : x_(std::move(positions)), sigma_(sigma) {
    if (x_.rows() < 1) throw ConfigError("kde needs at least one particle");
    if (!(sigma_ > 0) || !std::isfinite(sigma_)) throw ConfigError("kde bandwidth must be positive");
  }

  int size() const { return static_cast<int>(x_.rows()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  double bandwidth() const { return sigma_; }
  const Eigen::MatrixXd& positions() const { return x_; }

  /// log k_G(x, x^j) for every j, with k_G the normalized Gaussian kernel.
  Eigen::VectorXd log_kernels(const Eigen::VectorXd& x) const {
    const double s2 = sigma_ * sigma_;
    const double norm = -0.5 * dim() * std::log(2.0 * std::numbers::pi * s2);
    return ((x_.rowwise() - x.transpose()).rowwise().squaredNorm().array() * (-0.5 / s2) + norm).matrix();
  }

  double log_density(const Eigen::VectorXd& x) const {
    return log_sum_exp(log_kernels(x)) - std::log(static_cast<double>(size()));
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd lk = log_kernels(x);
    const double mx = lk.maxCoeff();
    if (!std::isfinite(mx)) {
      log(LogLevel::warning, "kde: all kernel weights underflow; bandwidth too small?");
      return Eigen::VectorXd::Zero(dim());
    }
    const Eigen::VectorXd w = (lk.array() - mx).exp().matrix();
    const Eigen::VectorXd num = x_.transpose() * w - w.sum() * x;
    return num / (sigma_ * sigma_ * w.sum());
  }

  Eigen::VectorXd sample_one(Rng& rng) const {
    std::uniform_int_distribution<int> pick(0, size() - 1);
    const int j = pick(rng);
    return x_.row(j).transpose() + sigma_ * standard_normal_vector(rng, dim());
  }

 private:
  static double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
  }

  Eigen::MatrixXd x_;
  double sigma_;
};

/// Gradient of the log KDE evaluated at particle i.
inline Eigen::VectorXd kde_grad_log_density(const KdeModel& m, int i) {
  if (i < 0 || i >= m.size()) throw std::out_of_range("kde particle index");
  return m.grad_log_density(m.positions().row(i).transpose());
}

/// Median heuristic: sigma^2 = median squared pairwise distance / (2 log N).
inline double median_bandwidth(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) return 1.0;
  std::vector<double> r2;
  r2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) r2.push_back((x.row(i) - x.row(j)).squaredNorm());
  auto mid = r2.begin() + static_cast<std::ptrdiff_t>(r2.size() / 2);
  std::nth_element(r2.begin(), mid, r2.end());
  double med = *mid;
  if (r2.size() % 2 == 0) med = 0.5 * (med + *std::max_element(r2.begin(), mid));
  const double denom = n > 2 ? 2.0 * std::log(static_cast<double>(n)) : 1.0;
  const double s = std::sqrt(med / denom);
  return s > 0 && std::isfinite(s) ? s : 1.0;
}

/// DLMC with the KDE in place of the flow: data-space updates only, MH
/// optional with KDE proposals. sigma <= 0 selects the median heuristic,
/// recomputed every iteration.
inline RunResult run_dlmc_pp(const TargetDensity& t, const DlmcConfig& cfg, double sigma,
                             const ReferenceMoments* ref = nullptr, const RecordSink& sink = {}) {
  DlmcConfig c = cfg;
  c.latent_space = false;
  KdeModel kde(Eigen::MatrixXd::Zero(1, t.dim()), 1.0);
  detail::LoopHooks h;
  h.fit = [&](ParticleEnsemble& e, int, SamplerStats&) {
    kde = KdeModel(e.positions, sigma > 0 ? sigma : median_bandwidth(e.positions));
    e.flow_log_densities = model_log_densities(kde, e.positions, c.workers);
    return 0;
  };
  h.dl_step = [&](const ParticleEnsemble& e, AdagradState& ada, SamplerStats& s) {
    return dl_update(e, t, kde, c, ada, &s);
  };
  h.mh_step = [&](const ParticleEnsemble& e, int it, SamplerStats& s) {
    if (!c.cross_fit_mh) return mh_adjust(e, t, kde, c.seed, static_cast<std::uint64_t>(it), &s);
    auto fit = [sigma](const Eigen::MatrixXd& x, int) { return KdeModel(x, sigma > 0 ? sigma : median_bandwidth(x)); };
    return mh_adjust_cross_fit<KdeModel>(e, t, fit, c.seed, static_cast<std::uint64_t>(it), &s);
  };
  h.upsample = [&](const ParticleEnsemble& e, int n_new, int it, SamplerStats& s) {
    return upsample_ensemble(e, t, kde, n_new, c.seed, static_cast<std::uint64_t>(it), &s);
  };
  return detail::run_particle_loop(t, c, h, ref, sink, "dlmc_pp");
}

// ---------------------------------------------------------------------------
// Stein variational gradient descent

/// One SVGD step with the Gaussian kernel k = exp(-|x - x'|^2 / (2 sigma^2)):
/// dx^i = dt / N * sum_j [-grad U(x^j) k(x^i, x^j) + grad_{x^j} k(x^i, x^j)].
/// Expects e.grad_potentials to be current; refreshes the caches after moving.
inline ParticleEnsemble svgd_step(const ParticleEnsemble& e, const TargetDensity& t, double sigma, double dt,
                                  SamplerStats* stats = nullptr, double* max_displacement = nullptr) {
  if (!(sigma > 0) || !(dt > 0)) throw ConfigError("svgd needs positive bandwidth and step");
  const int n = e.size(), d = e.dim();
  std::vector<char> ok(static_cast<std::size_t>(n));
  long long dropped = 0;
  for (int j = 0; j < n; ++j) {
    ok[static_cast<std::size_t>(j)] = e.grad_potentials.row(j).allFinite();
    dropped += !ok[static_cast<std::size_t>(j)];
  }
  if (dropped > 0) log(LogLevel::warning, "svgd: dropped " + std::to_string(dropped) + " non-finite gradient(s)");
  const double inv_s2 = 1.0 / (sigma * sigma);
  ParticleEnsemble out = e;
  Eigen::VectorXd disp(n);
  parallel_for(static_cast<std::size_t>(n), stats ? stats->workers : 1, [&](std::size_t ii) {
    const Eigen::Index i = static_cast<Eigen::Index>(ii);
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!ok[static_cast<std::size_t>(j)]) continue;
      const Eigen::VectorXd diff = e.positions.row(i).transpose() - e.positions.row(j).transpose();
      const double k = std::exp(-0.5 * diff.squaredNorm() * inv_s2);
      phi += k * (-e.grad_potentials.row(j).transpose() + inv_s2 * diff);
    }
    const Eigen::VectorXd step = dt / n * phi;
    out.positions.row(i) += step.transpose();
    disp(i) = step.norm();
  });
  evaluate_potentials(t, out.positions, out.potential_values, out.grad_potentials, stats, n);
  ++out.iteration;
  if (max_displacement) *max_displacement = disp.maxCoeff();
  return out;
}

struct SvgdConfig {
  int n_particles = 500;
  double step_size = 0.05;
  double bandwidth = 0.0;  // <= 0: median heuristic every step
  int max_iterations = 200;
  std::uint64_t seed = 0;
  int workers = 1;
  int convergence_window = 5;
  double convergence_tol = 0.02;
  bool stop_on_convergence = true;
  double stationary_eps = 1e-8;
  bool constrained_moments = true;
};

/// SVGD from prior draws with a fixed step.
inline RunResult run_svgd(const TargetDensity& t, const SvgdConfig& cfg, const ReferenceMoments* ref = nullptr,
                          const RecordSink& sink = {}) {
  if (cfg.n_particles < 1 || !(cfg.step_size > 0) || cfg.max_iterations < 0) throw ConfigError("bad svgd settings");
  RunResult res;
  res.method = "svgd";
  res.stats.workers = cfg.workers;
  ParticleEnsemble e;
  const int n = cfg.n_particles, d = t.dim();
  e.positions.resize(n, d);
  for (int i = 0; i < n; ++i) {
    Rng rng = make_substream(cfg.seed, "prior", static_cast<std::uint64_t>(i));
    e.positions.row(i) = t.sample_prior(rng).transpose();
  }
  evaluate_potentials(t, e.positions, e.potential_values, e.grad_potentials, &res.stats, n);
  e.flow_log_densities = Eigen::VectorXd::Zero(n);
  std::vector<MomentSummary> history;
  int it = 0;
  while (it < cfg.max_iterations) {
    ++it;
    const double sigma = cfg.bandwidth > 0 ? cfg.bandwidth : median_bandwidth(e.positions);
    double moved = 0.0;
    e = svgd_step(e, t, sigma, cfg.step_size, &res.stats, &moved);
    e.iteration = it;
    RunRecord rec;
    rec.iteration = it;
    rec.phase = "main";
    rec.n_particles = n;
    rec.moments = detail::ensemble_moments(t, e, cfg.constrained_moments, it);
    rec.ledger = res.stats.ledger;
    if (ref) rec.bias = bias_squared(rec.moments, *ref);
    if (sink) sink(rec);
    history.push_back(rec.moments);
    res.records.push_back(std::move(rec));
    if (moved <= cfg.stationary_eps ||
        (cfg.stop_on_convergence && check_convergence(history, cfg.convergence_window, cfg.convergence_tol))) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it;
  res.ensemble = std::move(e);
  return res;
}

// ---------------------------------------------------------------------------
// MH-only ablation

/// The DLMC loop without the deterministic Langevin update: refit the flow,
/// apply an MH pass, repeat.
inline RunResult run_mh_only(const TargetDensity& t, const DlmcConfig& cfg, const ReferenceMoments* ref = nullptr,
                             const RecordSink& sink = {}) {
  DlmcConfig c = cfg;
  c.dl_enabled = false;
  c.mh_enabled = true;
  return run_dlmc(t, c, ref, sink);
}

}  // namespace dlmc
