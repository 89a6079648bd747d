#pragma once

#include "dlmc/errors.hpp"
#include "dlmc/log.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dlmc {

/// Per-coordinate first and second raw moments of a sample set.
struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd second_moment;  // E[x^2]
  long long count = 0;
  int iteration = 0;

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd variance() const { return (second_moment - mean.cwiseAbs2()).cwiseMax(0.0); }
};

/// Moments of the rows of `samples`.
inline MomentSummary summarize(const Eigen::MatrixXd& samples, int iteration = 0) {
  MomentSummary m;
  m.count = samples.rows();
  m.iteration = iteration;
  const double n = static_cast<double>(std::max<Eigen::Index>(samples.rows(), 1));
  m.mean = samples.colwise().sum().transpose() / n;
  m.second_moment = samples.array().square().colwise().sum().transpose() / n;
  // keep E[x^2] >= mean^2 under rounding
  m.second_moment = m.second_moment.cwiseMax(m.mean.cwiseAbs2());
  return m;
}

enum class ReferenceProvenance { analytic, quadrature_oracle, long_reference_run };

inline std::string to_string(ReferenceProvenance p) {
  switch (p) {
    case ReferenceProvenance::analytic: return "analytic";
    case ReferenceProvenance::quadrature_oracle: return "quadrature-oracle";
    case ReferenceProvenance::long_reference_run: return "long-reference-run";
  }
  return "unknown";
}

inline ReferenceProvenance provenance_from_string(const std::string& s) {
  if (s == "analytic") return ReferenceProvenance::analytic;
  if (s == "quadrature-oracle") return ReferenceProvenance::quadrature_oracle;
  if (s == "long-reference-run") return ReferenceProvenance::long_reference_run;
  throw ConfigError("unknown reference provenance '" + s + "'");
}

/// True moments of a target, with where they came from. Standard errors are
/// zero for analytic and quadrature references.
struct ReferenceMoments {
  std::string target;
  std::string space = "constrained";  // coordinate space the moments refer to
  ReferenceProvenance provenance = ReferenceProvenance::analytic;
  Eigen::VectorXd mean;
  Eigen::VectorXd second_moment;
  Eigen::VectorXd mean_stderr;
  Eigen::VectorXd second_moment_stderr;
  int grid_resolution = 0;    // quadrature oracles
  long long chain_steps = 0;  // reference runs
  std::string notes;

  int dim() const { return static_cast<int>(second_moment.size()); }
};

struct BiasSquared {
  double mean = 0.0;
  double max = 0.0;
  int used = 0;  // coordinates with nonzero reference moment
};

/// Squared relative error of the second moments, averaged over coordinates
/// (and its maximum). Coordinates whose reference moment is zero are skipped.
inline BiasSquared bias_squared(const MomentSummary& est, const ReferenceMoments& ref) {
  if (est.second_moment.size() != ref.second_moment.size())
    throw DomainError("bias squared: dimension mismatch");
  BiasSquared b;
  for (Eigen::Index i = 0; i < est.second_moment.size(); ++i) {
    const double r = ref.second_moment(i);
    if (r == 0.0) {
      log(LogLevel::warning, "bias squared: zero reference second moment at coordinate " + std::to_string(i));
      continue;
    }
    const double e = (est.second_moment(i) - r) / r;
    b.mean += e * e;
    b.max = std::max(b.max, e * e);
    ++b.used;
  }
  if (b.used > 0) b.mean /= b.used;
  return b;
}

inline double bias_squared_second_moment(const MomentSummary& est, const ReferenceMoments& ref) {
  return bias_squared(est, ref).mean;
}

/// Gaussian-equivalent effective sample size implied by a bias^2 level.
inline double ess_gaussian_equivalent(double b2) {
  if (b2 < 0) throw DomainError("bias squared must be nonnegative");
  if (b2 == 0) return std::numeric_limits<double>::infinity();
  return 2.0 / b2;
}

/// Simulated wall-clock accounting for expensive likelihood evaluations.
struct CostLedger {
  long long likelihood_calls = 0;
  long long gradient_calls = 0;
  long long rounds = 0;
  double sequential_seconds = 0.0;
  double parallel_seconds = 0.0;
  double flow_fit_seconds = 0.0;  // measured, not simulated
};

/// Each evaluation computes the potential together with its gradient, so
/// both counters advance. Parallel time assumes n_particles concurrent workers.
inline CostLedger update_cost_ledger(CostLedger l, long long n_calls, long long n_particles, double cost_per_call) {
  if (n_calls < 0 || n_particles < 0 || cost_per_call < 0) throw DomainError("cost ledger: negative input");
  if (n_calls == 0) return l;
  const long long width = std::max<long long>(n_particles, 1);
  const long long rounds = (n_calls + width - 1) / width;
  l.likelihood_calls += n_calls;
  l.gradient_calls += n_calls;
  l.rounds += rounds;
  l.sequential_seconds += static_cast<double>(n_calls) * cost_per_call;
  l.parallel_seconds += static_cast<double>(rounds) * cost_per_call;
  return l;
}

}  // namespace dlmc
