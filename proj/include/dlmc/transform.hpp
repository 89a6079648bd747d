#pragma once

#include "dlmc/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dlmc {

enum class TransformKind { identity, logit, log };

/// One coordinate of a constrained-to-unconstrained reparametrization.
///  identity: x = u
///  logit on (lower, upper): x = lower + (upper - lower) * sigmoid(u)
///  log on (lower, inf):     x = lower + exp(u)
struct CoordinateTransform {
  TransformKind kind = TransformKind::identity;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double sigmoid(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// log(sigmoid(u)) without overflow
inline double log_sigmoid(double u) { return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

}  // namespace detail

class ParameterTransform {
 public:
  ParameterTransform() = default;
  explicit ParameterTransform(std::vector<CoordinateTransform> coords) : coords_(std::move(coords)) {
    for (const auto& c : coords_) {
      if (c.kind == TransformKind::logit && !(c.lower < c.upper && std::isfinite(c.lower) && std::isfinite(c.upper)))
        throw ConfigError("logit transform needs finite bounds lower < upper");
      if (c.kind == TransformKind::log && !std::isfinite(c.lower))
        throw ConfigError("log transform needs a finite lower bound");
    }
  }

  static ParameterTransform identity(int dim) {
    return ParameterTransform(std::vector<CoordinateTransform>(static_cast<std::size_t>(dim)));
  }
  static ParameterTransform logit_box(int dim, double lower, double upper) {
    return ParameterTransform(
        std::vector<CoordinateTransform>(static_cast<std::size_t>(dim), {TransformKind::logit, lower, upper}));
  }

  int dim() const { return static_cast<int>(coords_.size()); }
  const CoordinateTransform& coordinate(int i) const { return coords_[static_cast<std::size_t>(i)]; }
  bool is_identity() const {
    for (const auto& c : coords_)
      if (c.kind != TransformKind::identity) return false;
    return true;
  }

  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& x) const {
    check_dim(x.size());
    Eigen::VectorXd u(x.size());
    for (int i = 0; i < dim(); ++i) {
      const auto& c = coords_[static_cast<std::size_t>(i)];
      const double xi = x(i);
      switch (c.kind) {
        case TransformKind::identity:
          if (!std::isfinite(xi)) throw DomainError("non-finite coordinate " + std::to_string(i));
          u(i) = xi;
          break;
        case TransformKind::logit: {
          if (!(xi > c.lower && xi < c.upper))
            throw DomainError("coordinate " + std::to_string(i) + " outside open interval");
          // log((x-a)/(b-x)) keeps precision near both bounds
          u(i) = std::log(xi - c.lower) - std::log(c.upper - xi);
          break;
        }
        case TransformKind::log:
          if (!(xi > c.lower) || !std::isfinite(xi))
            throw DomainError("coordinate " + std::to_string(i) + " not above lower bound");
          u(i) = std::log(xi - c.lower);
          break;
      }
    }
    return u;
  }

  Eigen::VectorXd to_constrained(const Eigen::VectorXd& u) const {
    check_dim(u.size());
    Eigen::VectorXd x(u.size());
    for (int i = 0; i < dim(); ++i) {
      const auto& c = coords_[static_cast<std::size_t>(i)];
      switch (c.kind) {
        case TransformKind::identity: x(i) = u(i); break;
        case TransformKind::logit: {
          // pick the formula anchored at the nearer bound
          const double w = c.upper - c.lower;
          x(i) = u(i) <= 0 ? c.lower + w * detail::sigmoid(u(i)) : c.upper - w * detail::sigmoid(-u(i));
          break;
        }
        case TransformKind::log: x(i) = c.lower + std::exp(u(i)); break;
      }
    }
    return x;
  }

  /// Sum over coordinates of log|dx_i/du_i|.
  double log_jacobian(const Eigen::VectorXd& u) const {
    check_dim(u.size());
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) s += log_jacobian_coordinate(i, u(i));
    return s;
  }

  /// Gradient of log_jacobian with respect to u.
  Eigen::VectorXd grad_log_jacobian(const Eigen::VectorXd& u) const {
    check_dim(u.size());
    Eigen::VectorXd g(u.size());
    for (int i = 0; i < dim(); ++i) {
      const auto& c = coords_[static_cast<std::size_t>(i)];
      switch (c.kind) {
        case TransformKind::identity: g(i) = 0.0; break;
        case TransformKind::logit: g(i) = 1.0 - 2.0 * detail::sigmoid(u(i)); break;
        case TransformKind::log: g(i) = 1.0; break;
      }
    }
    return g;
  }

  double log_jacobian_coordinate(int i, double ui) const {
    const auto& c = coords_[static_cast<std::size_t>(i)];
    switch (c.kind) {
      case TransformKind::identity: return 0.0;
      case TransformKind::logit:
        return std::log(c.upper - c.lower) + detail::log_sigmoid(ui) + detail::log_sigmoid(-ui);
      case TransformKind::log: return ui;
    }
    return 0.0;
  }

 private:
  void check_dim(Eigen::Index n) const {
    if (n != dim()) throw DomainError("transform dimension mismatch");
  }

  std::vector<CoordinateTransform> coords_;
};

inline Eigen::VectorXd to_unconstrained(const ParameterTransform& t, const Eigen::VectorXd& x) {
  return t.to_unconstrained(x);
}

inline double log_jacobian_correction(const ParameterTransform& t, const Eigen::VectorXd& u) {
  return t.log_jacobian(u);
}

}  // namespace dlmc
