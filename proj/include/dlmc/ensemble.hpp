#pragma once

#include "dlmc/diagnostics.hpp"
#include "dlmc/log.hpp"
#include "dlmc/parallel.hpp"
#include "dlmc/random.hpp"
#include "dlmc/target.hpp"

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <vector>

namespace dlmc {

/// N particles in the unconstrained space with cached target and density
/// values. Row i of every matrix belongs to particle i.
struct ParticleEnsemble {
  Eigen::MatrixXd positions;
  Eigen::VectorXd potential_values;
  Eigen::MatrixXd grad_potentials;
  Eigen::VectorXd flow_log_densities;  // log q(x^i) = -V(x^i) under the current density model
  int iteration = 0;

  int size() const { return static_cast<int>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
};

/// Density models that can drive the deterministic Langevin and MH steps.
template <typename M>
concept DensityModel = requires(const M& m, const Eigen::VectorXd& x, Rng& rng) {
  { m.log_density(x) } -> std::convertible_to<double>;
  { m.grad_log_density(x) } -> std::convertible_to<Eigen::VectorXd>;
  { m.sample_one(rng) } -> std::convertible_to<Eigen::VectorXd>;
};

/// Counters shared by all samplers: the simulated cost ledger plus event
/// tallies used to audit which operations ran.
struct SamplerStats {
  CostLedger ledger;
  long long skipped_steps = 0;
  long long rejected_nonfinite = 0;
  long long dl_updates = 0;
  long long mh_passes = 0;
  long long latent_maps = 0;  // flow forward/inverse round trips inside updates
  int workers = 1;
};

/// Evaluates U and grad U at every row of `points`, accounting one call per
/// row with parallel width `width`.
inline void evaluate_potentials(const TargetDensity& t, const Eigen::MatrixXd& points, Eigen::VectorXd& values,
                                Eigen::MatrixXd& grads, SamplerStats* stats, long long width = -1) {
  const Eigen::Index n = points.rows();
  values.resize(n);
  grads.resize(n, points.cols());
  parallel_for(static_cast<std::size_t>(n), stats ? stats->workers : 1, [&](std::size_t i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    const PotentialParts p = t.parts(points.row(r).transpose());
    values(r) = p.potential();
    grads.row(r) = p.grad_potential().transpose();
  });
  if (stats)
    stats->ledger = update_cost_ledger(stats->ledger, n, width > 0 ? width : n, t.cost_per_likelihood_call());
}

template <DensityModel M>
Eigen::VectorXd model_log_densities(const M& m, const Eigen::MatrixXd& points, int workers) {
  Eigen::VectorXd out(points.rows());
  parallel_for(static_cast<std::size_t>(points.rows()), workers, [&](std::size_t i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    out(r) = m.log_density(points.row(r).transpose());
  });
  return out;
}

/// Positions mapped to the constrained space of the target.
inline Eigen::MatrixXd constrained_positions(const TargetDensity& t, const Eigen::MatrixXd& positions) {
  if (t.transform().is_identity()) return positions;
  Eigen::MatrixXd out(positions.rows(), positions.cols());
  for (Eigen::Index i = 0; i < positions.rows(); ++i)
    out.row(i) = t.transform().to_constrained(positions.row(i).transpose()).transpose();
  return out;
}

}  // namespace dlmc
