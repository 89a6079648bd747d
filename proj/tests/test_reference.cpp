#include "dlmc/reference.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dlmc;

TEST(MixtureReference, SymmetricBoxKeepsWeights) {
  const MixtureOptions o = default_mixture_options(10);
  const auto m = mixture_component_masses(o);
  EXPECT_NEAR(m[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(m[1], 2.0 / 3.0, 1e-12);
}

TEST(MixtureReference, MatchesDirectSampling) {
  // rejection sampling from the untruncated mixture
  const MixtureOptions o = default_mixture_options(3);
  const ReferenceMoments r = mixture_reference(o);
  Rng rng(11);
  const int n = 200000;
  Eigen::MatrixXd x(n, 3);
  for (int k = 0; k < n;) {
    const int c = uniform01(rng) < o.weights[0] ? 0 : 1;
    Eigen::VectorXd v = o.means[c] + (o.variances[c].cwiseSqrt().array() * standard_normal_vector(rng, 3).array()).matrix();
    if ((v.array().abs() < 2.0).all()) x.row(k++) = v.transpose();
  }
  const MomentSummary s = summarize(x);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.mean(i), r.mean(i), 0.01);
    EXPECT_NEAR(s.second_moment(i), r.second_moment(i), 0.01);
  }
}

TEST(RosenbrockReference, GridAgreesWithSemiAnalytic) {
  const RosenbrockOptions o{2, 0.1, 6.0};
  const PairMoments g = rosenbrock_pair_quadrature(o, 2000, -6.0, 6.0, -6.0, 36.0);
  const PairMoments s = rosenbrock_pair_semi_analytic(o);
  EXPECT_NEAR(g.mean_a, s.mean_a, 1e-4);
  EXPECT_NEAR(g.second_a, s.second_a, 1e-4 * s.second_a);
  EXPECT_NEAR(g.mean_b, s.mean_b, 1e-4);
  EXPECT_NEAR(g.second_b, s.second_b, 1e-4 * s.second_b);
  const ReferenceMoments r = rosenbrock_reference({32, 0.1, 6.0});
  EXPECT_EQ(r.dim(), 32);
  EXPECT_EQ(r.second_moment(30), r.second_moment(0));
  EXPECT_EQ(r.provenance, ReferenceProvenance::quadrature_oracle);
}

TEST(FunnelReference, PriorCaseIsAnalytic) {
  const ReferenceMoments r = funnel_quadrature_reference(FunnelOptions{.dim = 6});
  EXPECT_NEAR(r.second_moment(0), 3.0, 1e-8);
  for (int i = 1; i < 6; ++i) EXPECT_NEAR(r.second_moment(i), std::exp(3.0 / 8.0), 1e-8);
  EXPECT_NEAR(r.mean(0), 0.0, 1e-10);
}

TEST(FunnelReference, ConditionalMomentsByDirectIntegration) {
  // d = 2: brute-force 2-d grid against the 1-d quadrature
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.8);
  const FunnelOptions o{2, 0.5, y};
  const ReferenceMoments r = funnel_quadrature_reference(o);
  const TargetDensity t = make_funnel(o);
  double z = 0, m0 = 0, s0 = 0, m1 = 0, s1 = 0;
  const double h = 0.01;
  for (double th = -12; th <= 12; th += h)
    for (double v = -6; v <= 6; v += h) {
      const double w = std::exp(-t.potential((Eigen::VectorXd(2) << th, v).finished()));
      z += w;
      m0 += w * th;
      s0 += w * th * th;
      m1 += w * v;
      s1 += w * v * v;
    }
  EXPECT_NEAR(m0 / z, r.mean(0), 1e-4);
  EXPECT_NEAR(s0 / z, r.second_moment(0), 1e-4);
  EXPECT_NEAR(m1 / z, r.mean(1), 1e-4);
  EXPECT_NEAR(s1 / z, r.second_moment(1), 1e-4);
}

TEST(GaussianReference, Moments) {
  Eigen::MatrixXd c(2, 2);
  c << 2, 0.5, 0.5, 1;
  const ReferenceMoments r = gaussian_reference(Eigen::Vector2d(1, -1), c);
  EXPECT_DOUBLE_EQ(r.second_moment(0), 3.0);
  EXPECT_DOUBLE_EQ(r.second_moment(1), 2.0);
}
