#include "dlmc/spline.hpp"
#include "dlmc/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dlmc;

namespace {

RationalQuadraticSpline sample_spline() {
  return RationalQuadraticSpline({-2.0, -0.5, 0.3, 1.0, 2.5}, {-3.0, -1.0, 0.0, 0.4, 2.0}, {0.5, 2.0, 1.0, 0.3, 1.7});
}

}  // namespace

TEST(Spline, InterpolatesKnotsAndDerivatives) {
  const auto s = sample_spline();
  for (std::size_t k = 0; k < s.knots_x().size(); ++k) {
    const SplinePoint p = s.evaluate(s.knots_x()[k]);
    EXPECT_NEAR(p.value, s.knots_y()[k], 1e-12);
    EXPECT_NEAR(p.derivative, s.knot_derivatives()[k], 1e-12);
  }
}

TEST(Spline, StrictlyIncreasingAndInvertible) {
  const auto s = sample_spline();
  double prev = -1e300;
  for (double v = -5; v <= 5; v += 1e-3) {
    const SplinePoint p = s.evaluate(v);
    EXPECT_GT(p.value, prev);
    EXPECT_GT(p.derivative, 0);
    EXPECT_NEAR(s.inverse(p.value), v, 1e-10);
    prev = p.value;
  }
}

TEST(Spline, DerivativesMatchFiniteDifferences) {
  const auto s = sample_spline();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-4, 4);
  const double h = 1e-6;
  for (int k = 0; k < 200; ++k) {
    const double v = u(rng);
    if (s.knot_distance(v) < 1e-4) continue;
    const SplinePoint p = s.evaluate(v);
    const double fd = (s(v + h) - s(v - h)) / (2 * h);
    EXPECT_NEAR(p.derivative, fd, 1e-6 * std::max(1.0, fd));
    const double fdl = (std::log(s.evaluate(v + h).derivative) - std::log(s.evaluate(v - h).derivative)) / (2 * h);
    EXPECT_NEAR(p.dlog_derivative, fdl, 1e-4 * std::max(1.0, std::abs(fdl)));
  }
}

TEST(Spline, LinearTails) {
  const auto s = sample_spline();
  EXPECT_NEAR(s(-10.0), -3.0 + 0.5 * (-8.0), 1e-12);
  EXPECT_NEAR(s(10.0), 2.0 + 1.7 * 7.5, 1e-12);
  EXPECT_EQ(s.evaluate(-10.0).dlog_derivative, 0.0);
  EXPECT_NEAR(s.inverse(s(-10.0)), -10.0, 1e-12);
}

TEST(Spline, RightDerivativeAtKnot) {
  const auto s = sample_spline();
  // the right-hand piece at an interior knot has zero gap to the knot
  const double x = s.knots_x()[2];
  const SplinePoint at = s.evaluate(x);
  const SplinePoint right = s.evaluate(x + 1e-9);
  EXPECT_NEAR(at.dlog_derivative, right.dlog_derivative, 1e-5 * std::max(1.0, std::abs(right.dlog_derivative)));
}

TEST(Spline, RejectsInvalidKnots) {
  EXPECT_THROW(RationalQuadraticSpline({0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}), DomainError);
  EXPECT_THROW(RationalQuadraticSpline({0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}), DomainError);
  EXPECT_THROW(RationalQuadraticSpline({0.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}), DomainError);
  EXPECT_THROW(RationalQuadraticSpline({0.0}, {0.0}, {1.0}), DomainError);
}
