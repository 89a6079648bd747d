#pragma once

#include "dlmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace dlmc {

/// Value of a 1-d map with its first derivative and the derivative of the
/// log of that first derivative.
struct SplinePoint {
  double value;
  double derivative;
  double dlog_derivative;
};

/// Monotone rational-quadratic spline (Gregory-Delbourgo form) through
/// strictly increasing knots (x_k, y_k) with positive knot derivatives.
/// Beyond the outer knots the map continues linearly with the end slopes,
/// so it is a C1 bijection of the real line.
class RationalQuadraticSpline {
 public:
  RationalQuadraticSpline() = default;
  RationalQuadraticSpline(std::vector<double> x, std::vector<double> y, std::vector<double> d)
      : x_(std::move(x)), y_(std::move(y)), d_(std::move(d)) {
    if (x_.size() < 2 || y_.size() != x_.size() || d_.size() != x_.size())
      throw DomainError("spline needs at least two knots with matching arrays");
    for (std::size_t k = 0; k + 1 < x_.size(); ++k)
      if (!(x_[k + 1] > x_[k]) || !(y_[k + 1] > y_[k])) throw DomainError("spline knots must be strictly increasing");
    for (double v : d_)
      if (!(v > 0) || !std::isfinite(v)) throw DomainError("spline knot derivatives must be positive");
  }

  static RationalQuadraticSpline identity() { return {{-1.0, 1.0}, {-1.0, 1.0}, {1.0, 1.0}}; }

  const std::vector<double>& knots_x() const { return x_; }
  const std::vector<double>& knots_y() const { return y_; }
  const std::vector<double>& knot_derivatives() const { return d_; }

  /// At a knot the right-hand piece is used.
  SplinePoint evaluate(double v) const {
    if (v < x_.front()) return {y_.front() + d_.front() * (v - x_.front()), d_.front(), 0.0};
    if (v >= x_.back()) return {y_.back() + d_.back() * (v - x_.back()), d_.back(), 0.0};
    const std::size_t k = bin_of(x_, v);
    const double w = x_[k + 1] - x_[k];
    const double h = y_[k + 1] - y_[k];
    const double s = h / w;
    const double dk = d_[k], dk1 = d_[k + 1];
    const double xi = (v - x_[k]) / w;
    const double om = 1.0 - xi;
    const double c = dk1 + dk - 2.0 * s;
    const double den = s + c * xi * om;
    const double num = h * (s * xi * xi + dk * xi * om);
    const double nd = dk1 * xi * xi + 2.0 * s * xi * om + dk * om * om;
    const double deriv = s * s * nd / (den * den);
    const double nd_prime = 2.0 * dk1 * xi + 2.0 * s * (1.0 - 2.0 * xi) - 2.0 * dk * om;
    const double den_prime = c * (1.0 - 2.0 * xi);
    return {y_[k] + num / den, deriv, (nd_prime / nd - 2.0 * den_prime / den) / w};
  }

  double operator()(double v) const { return evaluate(v).value; }

  double inverse(double t) const {
    if (t < y_.front()) return x_.front() + (t - y_.front()) / d_.front();
    if (t >= y_.back()) return x_.back() + (t - y_.back()) / d_.back();
    const std::size_t k = bin_of(y_, t);
    const double w = x_[k + 1] - x_[k];
    const double h = y_[k + 1] - y_[k];
    const double s = h / w;
    const double dk = d_[k], dk1 = d_[k + 1];
    const double c = dk1 + dk - 2.0 * s;
    const double yy = t - y_[k];
    const double a = h * (s - dk) + yy * c;
    const double b = h * dk - yy * c;
    const double cc = -s * yy;
    const double disc = std::max(b * b - 4.0 * a * cc, 0.0);
    const double xi = (2.0 * cc) / (-b - std::sqrt(disc));
    return x_[k] + std::clamp(xi, 0.0, 1.0) * w;
  }

  /// Distance from v to the nearest knot.
  double knot_distance(double v) const {
    double best = std::abs(v - x_.front());
    for (double k : x_) best = std::min(best, std::abs(v - k));
    return best;
  }

 private:
  static std::size_t bin_of(const std::vector<double>& edges, double v) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t k = static_cast<std::size_t>(it - edges.begin());
    k = k == 0 ? 0 : k - 1;
    return std::min(k, edges.size() - 2);
  }

  std::vector<double> x_, y_, d_;
};

}  // namespace dlmc
