#pragma once

#include "dlmc/diagnostics.hpp"
#include "dlmc/flow.hpp"
#include "dlmc/target.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace dlmc {

namespace detail {

struct TruncatedMoments {
  double mass, mean, second;
};

// N(mu, var) restricted to (a, b)
inline TruncatedMoments truncated_normal_moments(double mu, double var, double a, double b) {
  const double sd = std::sqrt(var);
  const double al = (a - mu) / sd, be = (b - mu) / sd;
  const double z = normal_cdf(be) - normal_cdf(al);
  const double pa = normal_pdf(al), pb = normal_pdf(be);
  const double mean = mu + sd * (pa - pb) / z;
  const double v = var * (1.0 + (al * pa - be * pb) / z - std::pow((pa - pb) / z, 2));
  return {z, mean, v + mean * mean};
}

}  // namespace detail

/// Constrained-space moments of the box-truncated two-component mixture.
inline ReferenceMoments mixture_reference(const MixtureOptions& o) {
  const int d = o.dim;
  ReferenceMoments r;
  r.target = "gaussian_mixture";
  r.space = "constrained";
  r.provenance = ReferenceProvenance::analytic;
  r.mean = Eigen::VectorXd::Zero(d);
  r.second_moment = Eigen::VectorXd::Zero(d);
  std::array<double, 2> log_mass{};
  std::array<std::vector<detail::TruncatedMoments>, 2> per;
  for (int k = 0; k < 2; ++k) {
    log_mass[k] = std::log(o.weights[k]);
    for (int i = 0; i < d; ++i) {
      per[k].push_back(detail::truncated_normal_moments(o.means[k](i), o.variances[k](i), o.lower, o.upper));
      log_mass[k] += std::log(per[k].back().mass);
    }
  }
  const double lse = detail::log_sum_exp(log_mass.data(), 2);
  for (int k = 0; k < 2; ++k) {
    const double w = std::exp(log_mass[k] - lse);
    for (int i = 0; i < d; ++i) {
      r.mean(i) += w * per[k][static_cast<std::size_t>(i)].mean;
      r.second_moment(i) += w * per[k][static_cast<std::size_t>(i)].second;
    }
  }
  r.mean_stderr = Eigen::VectorXd::Zero(d);
  r.second_moment_stderr = Eigen::VectorXd::Zero(d);
  return r;
}

/// Posterior mass of each mixture component after truncation to the box.
inline std::array<double, 2> mixture_component_masses(const MixtureOptions& o) {
  std::array<double, 2> lm{};
  for (int k = 0; k < 2; ++k) {
    lm[k] = std::log(o.weights[k]);
    for (int i = 0; i < o.dim; ++i)
      lm[k] += std::log(detail::truncated_normal_moments(o.means[k](i), o.variances[k](i), o.lower, o.upper).mass);
  }
  const double lse = detail::log_sum_exp(lm.data(), 2);
  return {std::exp(lm[0] - lse), std::exp(lm[1] - lse)};
}

struct PairMoments {
  double mean_a, second_a, mean_b, second_b;
};

/// Moments of one 2-d Rosenbrock pair by direct grid quadrature of exp(-U).
/// The grid is `resolution` x `resolution` over [a_lo, a_hi] x [b_lo, b_hi].
inline PairMoments rosenbrock_pair_quadrature(const RosenbrockOptions& o, int resolution, double a_lo, double a_hi,
                                              double b_lo, double b_hi) {
  const RosenbrockOptions pair{2, o.q, o.prior_variance};
  const TargetDensity t = make_rosenbrock(pair);
  const double ha = (a_hi - a_lo) / (resolution - 1), hb = (b_hi - b_lo) / (resolution - 1);
  // shift by the potential at the likelihood maximum to avoid underflow
  const double u0 = t.potential(Eigen::Vector2d(1.0, 1.0));
  double z = 0, ma = 0, sa = 0, mb = 0, sb = 0;
  Eigen::Vector2d x;
  for (int i = 0; i < resolution; ++i) {
    x(0) = a_lo + i * ha;
    for (int j = 0; j < resolution; ++j) {
      x(1) = b_lo + j * hb;
      const double w = std::exp(u0 - t.potential(x));
      z += w;
      ma += w * x(0);
      sa += w * x(0) * x(0);
      mb += w * x(1);
      sb += w * x(1) * x(1);
    }
  }
  return {ma / z, sa / z, mb / z, sb / z};
}

/// Same moments with the inner (Gaussian) integral over the second
/// coordinate done in closed form and a 1-d Simpson rule over the first.
inline PairMoments rosenbrock_pair_semi_analytic(const RosenbrockOptions& o, int points = 200001, double range = 12.0) {
  const double a = 2.0 / o.q + 1.0 / o.prior_variance;  // precision of x2 | x1
  const double h = 2.0 * range / (points - 1);
  auto log_marginal = [&](double x1) {
    const double mu = (2.0 * x1 * x1 / o.q) / a;
    return -(x1 - 1.0) * (x1 - 1.0) - x1 * x1 / (2.0 * o.prior_variance) + 0.5 * a * mu * mu - std::pow(x1, 4) / o.q;
  };
  const double ref = log_marginal(1.0);
  double z = 0, ma = 0, sa = 0, mb = 0, sb = 0;
  for (int i = 0; i < points; ++i) {
    const double x1 = -range + i * h;
    const double c = (i == 0 || i == points - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double w = c * std::exp(log_marginal(x1) - ref);
    const double mu = (2.0 * x1 * x1 / o.q) / a;
    z += w;
    ma += w * x1;
    sa += w * x1 * x1;
    mb += w * mu;
    sb += w * (mu * mu + 1.0 / a);
  }
  return {ma / z, sa / z, mb / z, sb / z};
}

/// Grid quadrature reference for the factorized Rosenbrock target.
inline ReferenceMoments rosenbrock_reference(const RosenbrockOptions& o, int resolution = 2000) {
  // x2 ~ x1^2 reaches well past 6, so the second axis extends to 36
  const PairMoments p = rosenbrock_pair_quadrature(o, resolution, -6.0, 6.0, -6.0, 36.0);
  ReferenceMoments r;
  r.target = "rosenbrock";
  r.space = "constrained";
  r.provenance = ReferenceProvenance::quadrature_oracle;
  r.grid_resolution = resolution;
  r.mean.resize(o.dim);
  r.second_moment.resize(o.dim);
  for (int i = 0; i < o.dim; i += 2) {
    r.mean(i) = p.mean_a;
    r.mean(i + 1) = p.mean_b;
    r.second_moment(i) = p.second_a;
    r.second_moment(i + 1) = p.second_b;
  }
  r.mean_stderr = Eigen::VectorXd::Zero(o.dim);
  r.second_moment_stderr = Eigen::VectorXd::Zero(o.dim);
  r.notes = "2-d grid over [-6,6]x[-6,36] per coordinate pair";
  return r;
}

/// Funnel posterior moments by 1-d quadrature over theta: given theta the
/// z_i are conditionally Gaussian, so only the theta marginal is numerical.
inline ReferenceMoments funnel_quadrature_reference(const FunnelOptions& o, int resolution = 20001) {
  const int d = o.dim;
  const int m = d - 1;
  const bool informative = std::isfinite(o.noise_sigma);
  const double s2 = informative ? o.noise_sigma * o.noise_sigma : 0.0;
  const double lo = -20.0, hi = 20.0;
  const double h = (hi - lo) / (resolution - 1);
  std::vector<double> logw(static_cast<std::size_t>(resolution));
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < resolution; ++k) {
    const double theta = lo + k * h;
    const double power = std::exp(0.5 * theta);
    double lw = -0.5 * theta * theta / funnel_theta_variance;
    if (informative)
      for (int i = 0; i < m; ++i) {
        const double v = power + s2;
        lw += -0.5 * std::log(v) - 0.5 * o.observed(i) * o.observed(i) / v;
      }
    logw[static_cast<std::size_t>(k)] = lw;
    mx = std::max(mx, lw);
  }
  ReferenceMoments r;
  r.target = "funnel";
  r.space = "constrained";
  r.provenance = ReferenceProvenance::quadrature_oracle;
  r.grid_resolution = resolution;
  r.mean = Eigen::VectorXd::Zero(d);
  r.second_moment = Eigen::VectorXd::Zero(d);
  double z = 0.0;
  for (int k = 0; k < resolution; ++k) {
    const double theta = lo + k * h;
    const double w = std::exp(logw[static_cast<std::size_t>(k)] - mx);
    const double power = std::exp(0.5 * theta);
    z += w;
    r.mean(0) += w * theta;
    r.second_moment(0) += w * theta * theta;
    for (int i = 0; i < m; ++i) {
      double v = power, mu = 0.0;
      if (informative) {
        v = power * s2 / (power + s2);
        mu = power * o.observed(i) / (power + s2);
      }
      r.mean(i + 1) += w * mu;
      r.second_moment(i + 1) += w * (v + mu * mu);
    }
  }
  r.mean /= z;
  r.second_moment /= z;
  r.mean_stderr = Eigen::VectorXd::Zero(d);
  r.second_moment_stderr = Eigen::VectorXd::Zero(d);
  r.notes = "1-d quadrature over theta in [-20,20], z | theta analytic";
  return r;
}

inline ReferenceMoments gaussian_reference(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
  ReferenceMoments r;
  r.target = "gaussian";
  r.provenance = ReferenceProvenance::analytic;
  r.mean = mean;
  r.second_moment = covariance.diagonal() + mean.cwiseAbs2();
  r.mean_stderr = Eigen::VectorXd::Zero(mean.size());
  r.second_moment_stderr = Eigen::VectorXd::Zero(mean.size());
  return r;
}

}  // namespace dlmc
