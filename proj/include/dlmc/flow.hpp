#pragma once

#include "dlmc/errors.hpp"
#include "dlmc/random.hpp"
#include "dlmc/spline.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace dlmc {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

inline double standard_normal_log_density(const Eigen::VectorXd& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * 1.8378770664093454836;
}

/// x = shift + chol * u, with chol lower triangular.
struct AffineLayer {
  Eigen::VectorXd shift;
  Eigen::MatrixXd chol;
  double log_det = 0.0;  // log|det du/dx|

  static AffineLayer from_cholesky(Eigen::VectorXd shift, Eigen::MatrixXd chol) {
    AffineLayer a;
    a.log_det = -chol.diagonal().array().abs().log().sum();
    a.shift = std::move(shift);
    a.chol = std::move(chol);
    return a;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return chol.triangularView<Eigen::Lower>().solve(x - shift);
  }
  Eigen::VectorXd invert(const Eigen::VectorXd& u) const {
    return shift + chol.triangularView<Eigen::Lower>() * u;
  }
};

/// x -> x + A^T (s(A x) - A x): monotone 1-d maps along K orthonormal
/// directions (rows of A), identity on the orthogonal complement.
struct SlicedLayer {
  Eigen::MatrixXd directions;
  std::vector<RationalQuadraticSpline> maps;

  int size() const { return static_cast<int>(maps.size()); }
};

struct FlowFitOptions {
  double validation_fraction = 0.2;
  int max_layers = 40;
  int patience = 2;
  int knots = 16;
  int max_directions = 8;
  int direction_iterations = 10;
  int min_samples = 20;
  double covariance_jitter = 1e-6;  // times trace/d
  double bandwidth_factor = 3.0;
};

struct FlowFitReport {
  int layers = 0;
  int rejected_layers = 0;
  bool jittered = false;
  std::vector<double> train_log_density;       // after whitening, then per accepted layer
  std::vector<double> validation_log_density;  // same indexing
};

class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(AffineLayer affine, std::vector<SlicedLayer> layers)
      : dim_(static_cast<int>(affine.shift.size())), affine_(std::move(affine)), layers_(std::move(layers)) {}

  static FlowModel identity(int dim) {
    return FlowModel(AffineLayer::from_cholesky(Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim)), {});
  }
  /// Exact N(mean, covariance) density as a flow with no sliced layers.
  static FlowModel gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) throw DomainError("flow: covariance not positive definite");
    return FlowModel(AffineLayer::from_cholesky(mean, llt.matrixL()), {});
  }

  int dim() const { return dim_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const AffineLayer& affine() const { return affine_; }
  const std::vector<SlicedLayer>& layers() const { return layers_; }

  FlowModel truncated(int n_layers) const {
    std::vector<SlicedLayer> kept(layers_.begin(), layers_.begin() + std::clamp(n_layers, 0, num_layers()));
    return FlowModel(affine_, std::move(kept));
  }

  struct Forward {
    Eigen::VectorXd z;
    double log_det;  // log|det dz/dx|
  };

  Forward forward(const Eigen::VectorXd& x) const {
    check(x);
    Forward f = forward_layers(affine_.apply(x), 0, num_layers());
    f.log_det += affine_.log_det;
    return f;
  }

  /// Applies sliced layers [begin, end) to an already whitened point.
  Forward forward_layers(Eigen::VectorXd u, int begin, int end) const {
    double log_det = 0.0;
    for (int l = begin; l < end; ++l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      const Eigen::VectorXd y = layer.directions * u;
      Eigen::VectorXd shift(y.size());
      for (int k = 0; k < layer.size(); ++k) {
        const SplinePoint p = layer.maps[static_cast<std::size_t>(k)].evaluate(y(k));
        shift(k) = p.value - y(k);
        log_det += std::log(p.derivative);
      }
      u.noalias() += layer.directions.transpose() * shift;
    }
    return {std::move(u), log_det};
  }

  Eigen::VectorXd inverse(const Eigen::VectorXd& z) const {
    check(z);
    Eigen::VectorXd u = z;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      const Eigen::VectorXd t = layer.directions * u;
      Eigen::VectorXd shift(t.size());
      for (int k = 0; k < layer.size(); ++k) shift(k) = layer.maps[static_cast<std::size_t>(k)].inverse(t(k)) - t(k);
      u.noalias() += layer.directions.transpose() * shift;
    }
    return affine_.invert(u);
  }

  double log_density(const Eigen::VectorXd& x) const {
    const Forward f = forward(x);
    return standard_normal_log_density(f.z) + f.log_det;
  }

  struct Evaluation {
    Eigen::VectorXd z;
    double log_det = 0.0;
    double log_density = 0.0;
    Eigen::VectorXd grad_log_density;
  };

  /// Forward pass plus reverse-mode gradient of log q at x.
  Evaluation evaluate(const Eigen::VectorXd& x) const {
    check(x);
    Tape tape;
    Evaluation e;
    e.z = forward_taped(affine_.apply(x), tape, e.log_det);
    e.log_det += affine_.log_det;
    e.log_density = standard_normal_log_density(e.z) + e.log_det;
    Eigen::VectorXd g = -e.z;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      const auto& step = tape[static_cast<std::size_t>(l)];
      // J^T g with J = I + A^T (D - I) A, plus grad of sum log s'(A u)
      const Eigen::VectorXd ag = layer.directions * g;
      const Eigen::VectorXd coef = (step.derivative.array() - 1.0) * ag.array() + step.dlog_derivative.array();
      g.noalias() += layer.directions.transpose() * coef;
    }
    e.grad_log_density = affine_.chol.triangularView<Eigen::Lower>().transpose().solve(g);
    return e;
  }

  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const { return evaluate(x).grad_log_density; }

  /// (dx/dz)^T g evaluated at data point x: maps a data-space gradient to
  /// the flow's latent space.
  Eigen::VectorXd latent_pullback(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    check(x);
    Tape tape;
    double unused = 0.0;
    forward_taped(affine_.apply(x), tape, unused);
    Eigen::VectorXd h = affine_.chol.triangularView<Eigen::Lower>().transpose() * g;
    for (int l = 0; l < num_layers(); ++l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      const auto& step = tape[static_cast<std::size_t>(l)];
      const Eigen::VectorXd ah = layer.directions * h;
      const Eigen::VectorXd coef = (1.0 / step.derivative.array() - 1.0) * ah.array();
      h.noalias() += layer.directions.transpose() * coef;
    }
    return h;
  }

  Eigen::VectorXd sample_one(Rng& rng) const { return inverse(standard_normal_vector(rng, dim_)); }

  Eigen::MatrixXd sample(int n, Rng& rng) const {
    if (n < 1) throw DomainError("flow sample count must be positive");
    Eigen::MatrixXd out(n, dim_);
    for (int i = 0; i < n; ++i) out.row(i) = sample_one(rng).transpose();
    return out;
  }

  /// Smallest distance between a layer projection of x and a spline knot;
  /// finite-difference checks use it to stay clear of knots.
  double knot_distance(const Eigen::VectorXd& x) const {
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd u = affine_.apply(x);
    for (int l = 0; l < num_layers(); ++l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      const Eigen::VectorXd y = layer.directions * u;
      for (int k = 0; k < layer.size(); ++k)
        best = std::min(best, layer.maps[static_cast<std::size_t>(k)].knot_distance(y(k)));
      u = forward_layers(u, l, l + 1).z;
    }
    return best;
  }

 private:
  struct LayerTape {
    Eigen::VectorXd derivative;
    Eigen::VectorXd dlog_derivative;
  };
  using Tape = std::vector<LayerTape>;

  Eigen::VectorXd forward_taped(Eigen::VectorXd u, Tape& tape, double& log_det) const {
    tape.resize(layers_.size());
    for (int l = 0; l < num_layers(); ++l) {
      const SlicedLayer& layer = layers_[static_cast<std::size_t>(l)];
      auto& step = tape[static_cast<std::size_t>(l)];
      const Eigen::VectorXd y = layer.directions * u;
      const int k_dirs = layer.size();
      step.derivative.resize(k_dirs);
      step.dlog_derivative.resize(k_dirs);
      Eigen::VectorXd shift(k_dirs);
      for (int k = 0; k < k_dirs; ++k) {
        const SplinePoint p = layer.maps[static_cast<std::size_t>(k)].evaluate(y(k));
        shift(k) = p.value - y(k);
        step.derivative(k) = p.derivative;
        step.dlog_derivative(k) = p.dlog_derivative;
        log_det += std::log(p.derivative);
      }
      u.noalias() += layer.directions.transpose() * shift;
    }
    return u;
  }

  void check(const Eigen::VectorXd& v) const {
    if (v.size() != dim_) throw DomainError("flow: dimension mismatch");
    if (!v.allFinite()) throw DomainError("flow: non-finite input");
  }

  int dim_ = 0;
  AffineLayer affine_;
  std::vector<SlicedLayer> layers_;
};

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - f) + sorted[hi] * f;
}

/// Spline mapping a 1-d sample to approximately N(0,1): knots at sample
/// quantiles, values Phi^{-1}(F) and slopes p / phi(Phi^{-1}(F)) from a
/// Gaussian kernel estimate of the marginal.
inline RationalQuadraticSpline fit_gaussianizing_spline(const Eigen::VectorXd& y, int knots, double bw_factor) {
  const std::size_t n = static_cast<std::size_t>(y.size());
  std::vector<double> s(y.data(), y.data() + n);
  std::sort(s.begin(), s.end());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n - 1));
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = std::min(sd, iqr / 1.349);
  if (!(spread > 0)) spread = sd > 0 ? sd : 1.0;
  const double h = bw_factor * 0.9 * spread * std::pow(static_cast<double>(n), -0.2);

  const int interior = knots - 2;
  const double t_max = normal_quantile(1.0 - 0.5 / static_cast<double>(n));
  std::vector<double> kx(static_cast<std::size_t>(knots));
  kx.front() = s.front() - 2.0 * h;
  kx.back() = s.back() + 2.0 * h;
  for (int j = 0; j < interior; ++j) {
    const double t = interior == 1 ? 0.0 : -t_max + 2.0 * t_max * j / (interior - 1);
    kx[static_cast<std::size_t>(j + 1)] = quantile_sorted(s, normal_cdf(t));
  }
  const double min_gap = 1e-9 * std::max(spread, 1e-300);
  for (std::size_t j = 1; j < kx.size(); ++j)
    kx[j] = std::max(kx[j], kx[j - 1] + std::max(min_gap, 1e-12 * std::abs(kx[j - 1])));

  // kernel centres shrunk towards the mean so the smoothed density keeps the
  // sample variance
  const double shrink = sd > 0 ? 1.0 / std::sqrt(1.0 + h * h / (sd * sd)) : 1.0;
  std::vector<double> ky(kx.size()), kd(kx.size());
  for (std::size_t j = 0; j < kx.size(); ++j) {
    double cdf = 0.0, pdf = 0.0;
    for (double v : s) {
      const double r = (kx[j] - mean - shrink * (v - mean)) / h;
      cdf += normal_cdf(r);
      pdf += normal_pdf(r);
    }
    cdf /= static_cast<double>(n);
    pdf /= static_cast<double>(n) * h;
    cdf = std::clamp(cdf, 1e-15, 1.0 - 1e-15);
    ky[j] = normal_quantile(cdf);
    kd[j] = std::clamp(pdf / normal_pdf(ky[j]), 1e-4, 1e4);
    if (!std::isfinite(kd[j])) kd[j] = 1.0;
  }
  for (std::size_t j = 1; j < ky.size(); ++j) ky[j] = std::max(ky[j], ky[j - 1] + 1e-9);
  return RationalQuadraticSpline(std::move(kx), std::move(ky), std::move(kd));
}

/// Rows of a K x d matrix made orthonormal (modified Gram-Schmidt).
inline void orthonormalize_rows(Eigen::MatrixXd& a) {
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    for (Eigen::Index j = 0; j < k; ++j) a.row(k) -= a.row(k).dot(a.row(j)) * a.row(j);
    const double nrm = a.row(k).norm();
    a.row(k) /= nrm > 0 ? nrm : 1.0;
  }
}

/// K orthonormal directions along which the projected sample is furthest
/// from N(0,1) in the quantile (sliced Wasserstein) sense, by projected
/// gradient ascent from a random frame.
inline Eigen::MatrixXd find_directions(const Eigen::MatrixXd& z, int k_dirs, int iterations, Rng& rng) {
  const Eigen::Index d = z.rows();
  const Eigen::Index n = z.cols();
  Eigen::MatrixXd a(k_dirs, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(rng);
  orthonormalize_rows(a);
  if (k_dirs == d && iterations == 0) return a;
  std::vector<double> targets(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) targets[static_cast<std::size_t>(j)] = normal_quantile((j + 0.5) / n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXd y = a * z;
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(k_dirs, d);
    for (int k = 0; k < k_dirs; ++k) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::sort(order.begin(), order.end(), [&](Eigen::Index p, Eigen::Index q) { return y(k, p) < y(k, q); });
      Eigen::VectorXd r(n);
      for (Eigen::Index j = 0; j < n; ++j) r(order[static_cast<std::size_t>(j)]) = y(k, order[static_cast<std::size_t>(j)]) - targets[static_cast<std::size_t>(j)];
      grad.row(k) = (z * r).transpose() * (2.0 / static_cast<double>(n));
    }
    a += grad;
    orthonormalize_rows(a);
  }
  return a;
}

inline double mean_log_density(const Eigen::MatrixXd& z, const Eigen::VectorXd& log_det) {
  const double d = static_cast<double>(z.rows());
  return (log_det.array() - 0.5 * z.colwise().squaredNorm().transpose().array()).mean() -
         0.5 * d * 1.8378770664093454836;
}

// Applies a sliced layer to every column; returns per-column log-det increments.
inline Eigen::VectorXd apply_layer_columns(const SlicedLayer& layer, Eigen::MatrixXd& z) {
  const Eigen::MatrixXd y = layer.directions * z;
  Eigen::MatrixXd shift(y.rows(), y.cols());
  Eigen::VectorXd ld = Eigen::VectorXd::Zero(z.cols());
  for (int k = 0; k < layer.size(); ++k) {
    const auto& m = layer.maps[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const SplinePoint p = m.evaluate(y(k, j));
      shift(k, j) = p.value - y(k, j);
      ld(j) += std::log(p.derivative);
    }
  }
  z.noalias() += layer.directions.transpose() * shift;
  return ld;
}

// Spline pulled toward the identity: knots keep x, values and slopes are
// blended, which stays monotone.
inline RationalQuadraticSpline blend_with_identity(const RationalQuadraticSpline& s, double alpha) {
  std::vector<double> x = s.knots_x(), y = s.knots_y(), d = s.knot_derivatives();
  for (std::size_t j = 0; j < x.size(); ++j) {
    y[j] = alpha * y[j] + (1.0 - alpha) * x[j];
    d[j] = alpha * d[j] + (1.0 - alpha);
  }
  return RationalQuadraticSpline(std::move(x), std::move(y), std::move(d));
}

inline double median_abs_scale(const Eigen::MatrixXd& rows_by_dim) {
  const double rms = std::sqrt(rows_by_dim.array().square().mean());
  return rms > 0 && std::isfinite(rms) ? rms : 1.0;
}

/// Whitening layer from samples (columns), with the covariance shrunk toward
/// its diagonal by d/(n+d) and regularized by jitter*trace/d.
inline AffineLayer fit_whitening(const Eigen::MatrixXd& cols, double jitter) {
  const Eigen::Index d = cols.rows();
  const Eigen::Index n = cols.cols();
  const Eigen::VectorXd mean = cols.rowwise().mean();
  const Eigen::MatrixXd centered = cols.colwise() - mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  const double lambda = static_cast<double>(d) / static_cast<double>(n + d);
  const Eigen::VectorXd diag = cov.diagonal();
  cov *= (1.0 - lambda);
  cov.diagonal() += lambda * diag;
  double tr = cov.trace() / static_cast<double>(d);
  if (!(tr > 0)) tr = 1.0;
  cov.diagonal().array() += jitter * tr;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-3 * tr;
    llt.compute(cov);
  }
  return AffineLayer::from_cholesky(mean, llt.matrixL());
}

inline Eigen::MatrixXd checked_columns(const Eigen::MatrixXd& samples) {
  if (!samples.allFinite()) throw FitError("flow fit: samples must be finite");
  return samples.transpose();
}

inline bool add_jitter_if_degenerate(Eigen::MatrixXd& cols, Rng& rng) {
  const Eigen::VectorXd mean = cols.rowwise().mean();
  const Eigen::ArrayXd var = (cols.colwise() - mean).array().square().rowwise().mean();
  const double scale = std::max(std::sqrt(var.maxCoeff()), median_abs_scale(cols) * 1e-3);
  const double s = scale > 0 ? scale : 1.0;
  if ((var.sqrt() > 1e-10 * s).all()) return false;
  for (Eigen::Index i = 0; i < cols.size(); ++i) cols.data()[i] += 1e-8 * s * standard_normal(rng);
  return true;
}

}  // namespace detail

/// Gaussian (whitening-only) flow; usable down to two samples.
inline FlowModel fit_gaussian_flow(const Eigen::MatrixXd& samples, double covariance_jitter = 1e-6) {
  if (samples.rows() < 2) throw FitError("gaussian flow fit needs at least two samples");
  Eigen::MatrixXd cols = detail::checked_columns(samples);
  Rng rng(0x5eed);
  detail::add_jitter_if_degenerate(cols, rng);
  return FlowModel(detail::fit_whitening(cols, covariance_jitter), {});
}

/// Fits the sliced flow to the rows of `samples`. Layers are added until the
/// held-out log density stops improving for `patience` layers; the model is
/// truncated at the best validation layer count.
inline FlowModel fit_flow(const Eigen::MatrixXd& samples, double validation_fraction, Rng& rng,
                          FlowFitOptions options = {}, FlowFitReport* report = nullptr) {
  options.validation_fraction = validation_fraction;
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < options.min_samples) throw FitError("flow fit needs at least " + std::to_string(options.min_samples) + " samples");
  if (d < 1) throw FitError("flow fit: dimension must be positive");
  if (!(validation_fraction > 0 && validation_fraction < 1)) throw FitError("flow fit: validation fraction must lie in (0,1)");

  Eigen::MatrixXd cols = detail::checked_columns(samples);
  FlowFitReport local;
  FlowFitReport& rep = report ? *report : local;
  rep = FlowFitReport{};
  rep.jittered = detail::add_jitter_if_degenerate(cols, rng);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const Eigen::Index n_val = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(validation_fraction * static_cast<double>(n))), 1, n - 2);
  const Eigen::Index n_train = n - n_val;
  Eigen::MatrixXd train(d, n_train), val(d, n_val);
  for (Eigen::Index j = 0; j < n_train; ++j) train.col(j) = cols.col(perm[static_cast<std::size_t>(j)]);
  for (Eigen::Index j = 0; j < n_val; ++j) val.col(j) = cols.col(perm[static_cast<std::size_t>(n_train + j)]);

  AffineLayer affine = detail::fit_whitening(train, options.covariance_jitter);
  auto whiten = [&](Eigen::MatrixXd& m) {
    m = affine.chol.triangularView<Eigen::Lower>().solve(m.colwise() - affine.shift);
  };
  whiten(train);
  whiten(val);
  Eigen::VectorXd ld_train = Eigen::VectorXd::Constant(n_train, affine.log_det);
  Eigen::VectorXd ld_val = Eigen::VectorXd::Constant(n_val, affine.log_det);
  double train_ll = detail::mean_log_density(train, ld_train);
  double val_ll = detail::mean_log_density(val, ld_val);
  rep.train_log_density.push_back(train_ll);
  rep.validation_log_density.push_back(val_ll);

  const int k_dirs = static_cast<int>(std::min<Eigen::Index>(d, options.max_directions));
  std::vector<SlicedLayer> layers;
  double best_val = val_ll;
  std::size_t best_layers = 0;
  int stall = 0;
  for (int attempt = 0; attempt < options.max_layers && static_cast<int>(layers.size()) < options.max_layers; ++attempt) {
    SlicedLayer layer;
    layer.directions = detail::find_directions(train, k_dirs, options.direction_iterations, rng);
    const Eigen::MatrixXd proj = layer.directions * train;
    std::vector<RationalQuadraticSpline> full;
    for (int k = 0; k < k_dirs; ++k)
      full.push_back(detail::fit_gaussianizing_spline(proj.row(k).transpose(), options.knots, options.bandwidth_factor));

    bool accepted = false;
    Eigen::MatrixXd next_train;
    Eigen::VectorXd next_ld;
    double next_ll = train_ll;
    for (double alpha : {1.0, 0.5, 0.25}) {
      layer.maps.clear();
      for (const auto& s : full) layer.maps.push_back(alpha == 1.0 ? s : detail::blend_with_identity(s, alpha));
      next_train = train;
      next_ld = ld_train + detail::apply_layer_columns(layer, next_train);
      next_ll = detail::mean_log_density(next_train, next_ld);
      if (next_ll > train_ll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      ++rep.rejected_layers;
      if (++stall >= options.patience) break;
      continue;
    }
    train = std::move(next_train);
    ld_train = std::move(next_ld);
    train_ll = next_ll;
    ld_val += detail::apply_layer_columns(layer, val);
    val_ll = detail::mean_log_density(val, ld_val);
    layers.push_back(std::move(layer));
    rep.train_log_density.push_back(train_ll);
    rep.validation_log_density.push_back(val_ll);
    if (val_ll > best_val) {
      best_val = val_ll;
      best_layers = layers.size();
      stall = 0;
    } else if (++stall >= options.patience) {
      break;
    }
  }
  layers.resize(best_layers);
  rep.layers = static_cast<int>(best_layers);
  rep.train_log_density.resize(best_layers + 1);
  rep.validation_log_density.resize(best_layers + 1);
  return FlowModel(std::move(affine), std::move(layers));
}

// Free-function surface.

inline double flow_log_density(const FlowModel& m, const Eigen::VectorXd& x) { return m.log_density(x); }
inline Eigen::VectorXd flow_grad_log_density(const FlowModel& m, const Eigen::VectorXd& x) {
  return m.grad_log_density(x);
}
inline FlowModel::Forward flow_forward(const FlowModel& m, const Eigen::VectorXd& x) { return m.forward(x); }
inline Eigen::VectorXd flow_inverse(const FlowModel& m, const Eigen::VectorXd& z) { return m.inverse(z); }
inline Eigen::MatrixXd flow_sample(const FlowModel& m, int n, Rng& rng) { return m.sample(n, rng); }

}  // namespace dlmc
