#pragma once

#include "dlmc/flow.hpp"
#include "dlmc/target.hpp"

namespace dlmc {

/// Potential of the target pulled back to the flow's latent space,
/// U(z) = U(f^{-1}(z)) - log|det df^{-1}/dz|, with its gradient.
struct LatentPotential {
  double value;
  Eigen::VectorXd grad;
};

inline LatentPotential latent_potential_and_grad(const FlowModel& m, const TargetDensity& t, const Eigen::VectorXd& z) {
  const Eigen::VectorXd x = m.inverse(z);
  const PotentialParts p = t.parts(x);
  const FlowModel::Evaluation e = m.evaluate(x);
  // grad_x [U + log|det dz/dx|] = grad U + grad log q + (dz/dx)^T z; the last
  // term pulls back to exactly z.
  Eigen::VectorXd g = m.latent_pullback(x, p.grad_potential() + e.grad_log_density);
  g += z;
  return {p.potential() + e.log_det, std::move(g)};
}

}  // namespace dlmc
