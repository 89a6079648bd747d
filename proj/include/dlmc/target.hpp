#pragma once

#include "dlmc/errors.hpp"
#include "dlmc/random.hpp"
#include "dlmc/transform.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace dlmc {

/// Likelihood and prior pieces of the potential at one point, with gradients.
/// Everything is expressed in the unconstrained sampling space; the prior part
/// carries the log-Jacobian of the parameter transform.
struct PotentialParts {
  double likelihood = 0.0;
  double prior = 0.0;
  Eigen::VectorXd grad_likelihood;
  Eigen::VectorXd grad_prior;

  double potential() const { return likelihood + prior; }
  Eigen::VectorXd grad_potential() const { return grad_likelihood + grad_prior; }
};

/// A posterior known through U(x) = L(x) + P(x), the negative log joint, in
/// unconstrained coordinates.
class TargetDensity {
 public:
  using PartsFn = std::function<PotentialParts(const Eigen::VectorXd&)>;
  using PriorSampler = std::function<Eigen::VectorXd(Rng&)>;

  TargetDensity() = default;
  TargetDensity(std::string name, int dim, PartsFn parts, PriorSampler prior_sampler, ParameterTransform transform,
                std::vector<std::string> coordinate_names = {})
      : name_(std::move(name)),
        dim_(dim),
        parts_(std::move(parts)),
        prior_sampler_(std::move(prior_sampler)),
        transform_(std::move(transform)),
        names_(std::move(coordinate_names)) {
    if (dim_ < 1) throw ConfigError("target dimension must be positive");
    if (transform_.dim() != dim_) throw ConfigError("transform dimension does not match target");
    if (names_.empty())
      for (int i = 0; i < dim_; ++i) names_.push_back("x" + std::to_string(i + 1));
  }

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const ParameterTransform& transform() const { return transform_; }
  const std::vector<std::string>& coordinate_names() const { return names_; }

  double cost_per_likelihood_call() const { return cost_per_call_; }
  void set_cost_per_likelihood_call(double seconds) {
    if (!(seconds >= 0)) throw ConfigError("cost per likelihood call must be nonnegative");
    cost_per_call_ = seconds;
  }

  PotentialParts parts(const Eigen::VectorXd& u) const {
    if (u.size() != dim_) throw DomainError("point dimension does not match target");
    return parts_(u);
  }
  double potential(const Eigen::VectorXd& u) const { return parts(u).potential(); }
  Eigen::VectorXd grad_potential(const Eigen::VectorXd& u) const { return parts(u).grad_potential(); }
  double likelihood_potential(const Eigen::VectorXd& u) const { return parts(u).likelihood; }
  Eigen::VectorXd grad_likelihood(const Eigen::VectorXd& u) const { return parts(u).grad_likelihood; }
  double prior_potential(const Eigen::VectorXd& u) const { return parts(u).prior; }

  /// One prior draw, already mapped to unconstrained space.
  Eigen::VectorXd sample_prior(Rng& rng) const { return prior_sampler_(rng); }

 private:
  std::string name_;
  int dim_ = 0;
  PartsFn parts_;
  PriorSampler prior_sampler_;
  ParameterTransform transform_;
  std::vector<std::string> names_;
  double cost_per_call_ = 0.0;
};

namespace detail {

inline constexpr double log_2pi = 1.8378770664093454836;  // log(2*pi)

inline double log_sum_exp(const double* v, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// log(1 + exp(x)) without overflow
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Gaussian target N(mean, covariance) used as its own prior (L = 0).
inline TargetDensity make_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
  const int d = static_cast<int>(mean.size());
  if (d < 1 || covariance.rows() != d || covariance.cols() != d) throw ConfigError("gaussian: bad dimensions");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ConfigError("gaussian: covariance not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();
  const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
  const double log_norm = 0.5 * d * detail::log_2pi + chol.diagonal().array().log().sum();
  auto parts = [=](const Eigen::VectorXd& x) {
    PotentialParts p;
    const Eigen::VectorXd r = x - mean;
    const Eigen::VectorXd pr = precision * r;
    p.prior = 0.5 * r.dot(pr) + log_norm;
    p.grad_prior = pr;
    p.grad_likelihood = Eigen::VectorXd::Zero(d);
    return p;
  };
  auto sampler = [=](Rng& rng) -> Eigen::VectorXd { return mean + chol * standard_normal_vector(rng, d); };
  return TargetDensity("gaussian", d, parts, sampler, ParameterTransform::identity(d));
}

// ---------------------------------------------------------------------------
// Two-component Gaussian mixture inside a box prior, sampled in logit space.

struct MixtureOptions {
  int dim = 100;
  std::array<Eigen::VectorXd, 2> means;
  std::array<Eigen::VectorXd, 2> variances;  // diagonal covariances
  std::array<double, 2> weights{1.0 / 3.0, 2.0 / 3.0};
  double lower = -2.0;
  double upper = 2.0;
};

/// Benchmark defaults: unit-variance components centred at -0.75 and +0.75
/// in every coordinate, weights 1/3 and 2/3, box (-2, 2)^d.
inline MixtureOptions default_mixture_options(int dim) {
  MixtureOptions o;
  o.dim = dim;
  o.means = {Eigen::VectorXd::Constant(dim, -0.75), Eigen::VectorXd::Constant(dim, 0.75)};
  o.variances = {Eigen::VectorXd::Ones(dim), Eigen::VectorXd::Ones(dim)};
  return o;
}

inline TargetDensity make_gaussian_mixture(const MixtureOptions& o) {
  const int d = o.dim;
  if (d < 2) throw ConfigError("gaussian mixture: dimension must be at least 2");
  if (!(o.weights[0] > 0 && o.weights[1] > 0) || std::abs(o.weights[0] + o.weights[1] - 1.0) > 1e-12)
    throw ConfigError("gaussian mixture: weights must be positive and sum to 1");
  for (int k = 0; k < 2; ++k) {
    if (o.means[k].size() != d || o.variances[k].size() != d)
      throw ConfigError("gaussian mixture: component dimension mismatch");
    if (!(o.variances[k].array() > 0).all()) throw ConfigError("gaussian mixture: variances must be positive");
  }
  if (!(o.lower < o.upper)) throw ConfigError("gaussian mixture: empty box");

  const ParameterTransform transform = ParameterTransform::logit_box(d, o.lower, o.upper);
  std::array<double, 2> log_coef{};
  for (int k = 0; k < 2; ++k)
    log_coef[k] = std::log(o.weights[k]) - 0.5 * d * detail::log_2pi - 0.5 * o.variances[k].array().log().sum();
  const double log_box_volume = d * std::log(o.upper - o.lower);

  auto parts = [=](const Eigen::VectorXd& u) {
    const Eigen::VectorXd x = transform.to_constrained(u);
    std::array<double, 2> logp{};
    std::array<Eigen::VectorXd, 2> gx;
    for (int k = 0; k < 2; ++k) {
      const Eigen::ArrayXd r = (x - o.means[k]).array();
      logp[k] = log_coef[k] - 0.5 * (r.square() / o.variances[k].array()).sum();
      gx[k] = (r / o.variances[k].array()).matrix();
    }
    const double lse = detail::log_sum_exp(logp.data(), 2);
    const double r0 = std::exp(logp[0] - lse);
    const double r1 = std::exp(logp[1] - lse);
    // dx/du for the logit map
    Eigen::VectorXd dxdu(d);
    for (int i = 0; i < d; ++i) dxdu(i) = std::exp(transform.log_jacobian_coordinate(i, u(i)));
    PotentialParts p;
    p.likelihood = -lse;
    p.grad_likelihood = ((r0 * gx[0] + r1 * gx[1]).array() * dxdu.array()).matrix();
    p.prior = log_box_volume - transform.log_jacobian(u);
    p.grad_prior = -transform.grad_log_jacobian(u);
    return p;
  };
  auto sampler = [=](Rng& rng) -> Eigen::VectorXd {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd u(d);
    for (int i = 0; i < d; ++i) {
      double p = unif(rng);
      while (p == 0.0) p = unif(rng);
      u(i) = std::log(p) - std::log1p(-p);
    }
    return u;
  };
  return TargetDensity("gaussian_mixture", d, parts, sampler, transform);
}

/// Spec-style entry point with the default component shapes.
inline TargetDensity make_gaussian_mixture(int dim, const std::array<Eigen::VectorXd, 2>& means,
                                           const std::array<double, 2>& weights) {
  MixtureOptions o = default_mixture_options(dim);
  o.means = means;
  o.weights = weights;
  return make_gaussian_mixture(o);
}

// ---------------------------------------------------------------------------
// Sum of independent 2-d Rosenbrock bananas with a Gaussian prior.

struct RosenbrockOptions {
  int dim = 32;
  double q = 0.1;
  double prior_variance = 6.0;
};

inline TargetDensity make_rosenbrock(const RosenbrockOptions& o) {
  const int d = o.dim;
  if (d < 2 || d % 2 != 0) throw ConfigError("rosenbrock: dimension must be even and positive");
  if (!(o.q > 0)) throw ConfigError("rosenbrock: Q must be positive");
  if (!(o.prior_variance > 0)) throw ConfigError("rosenbrock: prior variance must be positive");
  const double q = o.q;
  const double pv = o.prior_variance;
  const double log_norm = 0.5 * d * (detail::log_2pi + std::log(pv));
  auto parts = [=](const Eigen::VectorXd& x) {
    PotentialParts p;
    p.grad_likelihood.resize(d);
    double l = 0.0;
    for (int i = 0; i < d; i += 2) {
      const double a = x(i), b = x(i + 1);
      const double r = a * a - b;
      l += r * r / q + (a - 1.0) * (a - 1.0);
      p.grad_likelihood(i) = 4.0 * a * r / q + 2.0 * (a - 1.0);
      p.grad_likelihood(i + 1) = -2.0 * r / q;
    }
    p.likelihood = l;
    p.prior = 0.5 * x.squaredNorm() / pv + log_norm;
    p.grad_prior = x / pv;
    return p;
  };
  const double sd = std::sqrt(pv);
  auto sampler = [=](Rng& rng) -> Eigen::VectorXd { return sd * standard_normal_vector(rng, d); };
  return TargetDensity("rosenbrock", d, parts, sampler, ParameterTransform::identity(d));
}

inline TargetDensity make_rosenbrock(int dim, double q, double prior_variance) {
  return make_rosenbrock(RosenbrockOptions{dim, q, prior_variance});
}

// ---------------------------------------------------------------------------
// Hierarchical variance ("funnel") model over (theta, z_1..z_{d-1}):
//   theta ~ N(0, 3), z_i | theta ~ N(0, exp(theta/2)), y_i | z_i ~ N(z_i, sigma^2).
// Second arguments of N are variances.

struct FunnelOptions {
  int dim = 100;
  double noise_sigma = std::numeric_limits<double>::infinity();
  Eigen::VectorXd observed = {};  // length dim - 1; ignored when sigma is infinite
};

inline constexpr double funnel_theta_variance = 3.0;

/// Simulated observations with theta_true = 0: z_i ~ N(0, 1), y_i = z_i + sigma * eps_i.
inline Eigen::VectorXd simulate_funnel_data(int dim, double noise_sigma, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("funnel: dimension must be at least 2");
  Rng rng = make_substream(seed, "funnel-data");
  Eigen::VectorXd y(dim - 1);
  const double s = std::isfinite(noise_sigma) ? noise_sigma : 0.0;
  for (int i = 0; i < dim - 1; ++i) {
    const double z = standard_normal(rng);
    y(i) = z + s * standard_normal(rng);
  }
  return y;
}

inline TargetDensity make_funnel(const FunnelOptions& o) {
  const int d = o.dim;
  if (d < 2) throw ConfigError("funnel: dimension must be at least 2");
  if (!(o.noise_sigma > 0)) throw ConfigError("funnel: noise sigma must be positive");
  const bool informative = std::isfinite(o.noise_sigma);
  if (informative && o.observed.size() != d - 1) throw ConfigError("funnel: observed data must have length dim-1");
  const Eigen::VectorXd y = informative ? o.observed : Eigen::VectorXd::Zero(d - 1);
  const double s2 = informative ? o.noise_sigma * o.noise_sigma : 1.0;
  const double tv = funnel_theta_variance;
  auto parts = [=](const Eigen::VectorXd& x) {
    PotentialParts p;
    const double theta = x(0);
    const Eigen::VectorXd z = x.tail(d - 1);
    const double inv_power = std::exp(-0.5 * theta);  // 1 / P
    const int m = d - 1;
    p.grad_prior.resize(d);
    const double zz = z.squaredNorm();
    p.prior = 0.5 * theta * theta / tv + 0.5 * (detail::log_2pi + std::log(tv)) + 0.5 * zz * inv_power +
              0.5 * m * detail::log_2pi + 0.25 * m * theta;
    p.grad_prior(0) = theta / tv - 0.25 * zz * inv_power + 0.25 * m;
    p.grad_prior.tail(m) = z * inv_power;
    p.grad_likelihood = Eigen::VectorXd::Zero(d);
    if (informative) {
      const Eigen::VectorXd r = z - y;
      p.likelihood = 0.5 * r.squaredNorm() / s2 + 0.5 * m * (detail::log_2pi + std::log(s2));
      p.grad_likelihood.tail(m) = r / s2;
    }
    return p;
  };
  auto sampler = [=](Rng& rng) -> Eigen::VectorXd {
    Eigen::VectorXd x(d);
    x(0) = std::sqrt(tv) * standard_normal(rng);
    const double sd = std::exp(0.25 * x(0));
    for (int i = 1; i < d; ++i) x(i) = sd * standard_normal(rng);
    return x;
  };
  std::vector<std::string> names{"theta"};
  for (int i = 1; i < d; ++i) names.push_back("z" + std::to_string(i));
  return TargetDensity("funnel", d, parts, sampler, ParameterTransform::identity(d), names);
}

inline TargetDensity make_funnel(int dim, double noise_sigma, const Eigen::VectorXd& observed) {
  return make_funnel(FunnelOptions{dim, noise_sigma, observed});
}

// ---------------------------------------------------------------------------
// Sparse (horseshoe-style) logistic regression:
//   beta_f ~ N(0, 1), lambda_f ~ HalfCauchy(1), tau ~ HalfCauchy(1),
//   y_n ~ Bernoulli(sigmoid(sum_f X_nf tau lambda_f beta_f)).
// Coordinates: beta (F), log lambda (F), log tau (1).

inline constexpr int german_credit_raw_features = 24;

inline TargetDensity make_sparse_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) {
  if (features.cols() != german_credit_raw_features)
    throw DataError("sparse logistic: expected 24 feature columns, got " + std::to_string(features.cols()));
  if (labels.size() != features.rows()) throw DataError("sparse logistic: label count does not match rows");
  for (Eigen::Index n = 0; n < labels.size(); ++n)
    if (labels(n) != 0.0 && labels(n) != 1.0)
      throw DataError("sparse logistic: label at row " + std::to_string(n + 1) + " is not in {0,1}");
  const Eigen::Index rows = features.rows();
  const int f = german_credit_raw_features + 1;
  Eigen::MatrixXd design(rows, f);
  design.leftCols(f - 1) = features;
  design.col(f - 1).setOnes();
  const int d = 2 * f + 1;

  std::vector<CoordinateTransform> coords(static_cast<std::size_t>(d));
  for (int i = f; i < d; ++i) coords[static_cast<std::size_t>(i)] = {TransformKind::log, 0.0};
  const ParameterTransform transform(coords);
  const double half_cauchy_norm = std::log(std::numbers::pi / 2.0);

  auto parts = [=](const Eigen::VectorXd& x) {
    const Eigen::VectorXd beta = x.head(f);
    const Eigen::VectorXd log_lambda = x.segment(f, f);
    const double log_tau = x(d - 1);
    const Eigen::VectorXd scale = (log_lambda.array() + log_tau).exp().matrix();  // tau * lambda
    const Eigen::VectorXd w = scale.cwiseProduct(beta);
    const Eigen::VectorXd eta = design * w;
    double lik = 0.0;
    Eigen::VectorXd resid(rows);
    for (Eigen::Index n = 0; n < rows; ++n) {
      lik += detail::softplus(eta(n)) - labels(n) * eta(n);
      resid(n) = detail::sigmoid(eta(n)) - labels(n);
    }
    const Eigen::VectorXd r = design.transpose() * resid;  // dL/dw
    PotentialParts p;
    p.likelihood = lik;
    p.grad_likelihood.resize(d);
    p.grad_likelihood.head(f) = r.cwiseProduct(scale);
    p.grad_likelihood.segment(f, f) = r.cwiseProduct(w);
    p.grad_likelihood(d - 1) = r.dot(w);

    // prior: standard normal beta; half-Cauchy scales pushed to log space,
    // p(u) = (2/pi) e^u / (1 + e^{2u})
    p.grad_prior.resize(d);
    p.prior = 0.5 * beta.squaredNorm() + 0.5 * f * detail::log_2pi;
    p.grad_prior.head(f) = beta;
    for (int i = f; i < d; ++i) {
      const double ui = x(i);
      p.prior += half_cauchy_norm - ui + detail::softplus(2.0 * ui);
      p.grad_prior(i) = std::tanh(ui);
    }
    return p;
  };
  auto sampler = [=](Rng& rng) -> Eigen::VectorXd {
    Eigen::VectorXd x(d);
    for (int i = 0; i < f; ++i) x(i) = standard_normal(rng);
    std::cauchy_distribution<double> cauchy(0.0, 1.0);
    for (int i = f; i < d; ++i) {
      double c = std::abs(cauchy(rng));
      while (!(c > 0) || !std::isfinite(c)) c = std::abs(cauchy(rng));
      x(i) = std::log(c);
    }
    return x;
  };
  std::vector<std::string> names;
  for (int i = 1; i <= f; ++i) names.push_back("beta" + std::to_string(i));
  for (int i = 1; i <= f; ++i) names.push_back("lambda" + std::to_string(i));
  names.push_back("tau");
  return TargetDensity("sparse_logistic", d, parts, sampler, transform, names);
}

}  // namespace dlmc
