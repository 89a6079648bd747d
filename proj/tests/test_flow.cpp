#include "dlmc/flow.hpp"
#include "dlmc/flow_io.hpp"
#include "dlmc/latent.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dlmc;
using dlmc::test::fd_gradient;
using dlmc::test::relative_error;

namespace {

Eigen::MatrixXd gaussian_samples(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d);
  if (d > 1) a(1, 0) = 0.8;
  for (int i = 0; i < n; ++i) x.row(i) = (a * standard_normal_vector(rng, d)).transpose() + Eigen::RowVectorXd::Constant(d, 0.5);
  return x;
}

Eigen::MatrixXd mixture_samples(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    const double c = uniform01(rng) < 0.3 ? -2.0 : 1.5;
    x.row(i) = (Eigen::VectorXd::Constant(d, c) + 0.6 * standard_normal_vector(rng, d)).transpose();
  }
  return x;
}

Eigen::MatrixXd banana_samples(int n, int d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; j += 2) {
      const double a = standard_normal(rng);
      x(i, j) = a;
      if (j + 1 < d) x(i, j + 1) = a * a + 0.3 * standard_normal(rng);
    }
  return x;
}

FlowModel fitted_banana(int d, int n = 1000, std::uint64_t seed = 1, FlowFitReport* rep = nullptr) {
  Rng rng(seed);
  const Eigen::MatrixXd x = banana_samples(n, d, rng);
  return fit_flow(x, 0.2, rng, {}, rep);
}

// random points near the sample support, away from spline knots
std::vector<Eigen::VectorXd> probe_points(const FlowModel& m, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> out;
  while (static_cast<int>(out.size()) < count) {
    const Eigen::VectorXd x = m.sample_one(rng) + 0.1 * standard_normal_vector(rng, m.dim());
    if (m.knot_distance(x) > 1e-4) out.push_back(x);
  }
  return out;
}

double integrate_1d(const FlowModel& m, double lo, double hi, double h) {
  double z = 0.0;
  for (double v = lo; v <= hi; v += h) z += std::exp(m.log_density(Eigen::VectorXd::Constant(1, v))) * h;
  return z;
}

double integrate_2d(const FlowModel& m, double alo, double ahi, double blo, double bhi, double h) {
  double z = 0.0;
  Eigen::VectorXd x(2);
  for (double a = alo; a <= ahi; a += h)
    for (double b = blo; b <= bhi; b += h) {
      x << a, b;
      z += std::exp(m.log_density(x));
    }
  return z * h * h;
}

}  // namespace

TEST(Flow, NoLayersIsTheWhitenedGaussian) {
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.3, 0.3, 0.5;
  const Eigen::Vector2d mean(0.5, -1.0);
  const FlowModel m = FlowModel::gaussian(mean, cov);
  EXPECT_EQ(m.num_layers(), 0);
  const Eigen::Vector2d x(0.1, 0.7);
  const Eigen::Vector2d r = x - mean;
  const double expected = -0.5 * r.dot(cov.ldlt().solve(r)) - std::log(2 * std::numbers::pi) - 0.5 * std::log(cov.determinant());
  EXPECT_NEAR(m.log_density(x), expected, 1e-12);
  EXPECT_LT(relative_error(m.grad_log_density(x), -cov.ldlt().solve(r)), 1e-12);
}

TEST(Flow, TrainingLikelihoodNeverDecreases) {
  FlowFitReport rep;
  const FlowModel m = fitted_banana(4, 1000, 2, &rep);
  ASSERT_GT(m.num_layers(), 0);
  EXPECT_EQ(rep.layers, m.num_layers());
  for (std::size_t i = 1; i < rep.train_log_density.size(); ++i)
    EXPECT_GT(rep.train_log_density[i], rep.train_log_density[i - 1]);
  EXPECT_GT(rep.validation_log_density.back(), rep.validation_log_density.front());
}

TEST(Flow, InverseRoundTrip) {
  const FlowModel m = fitted_banana(6);
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd z = 1.5 * standard_normal_vector(rng, 6);
    EXPECT_LT((m.forward(m.inverse(z)).z - z).norm(), 1e-8);
  }
}

TEST(Flow, CompositionLaw) {
  const FlowModel m = fitted_banana(4);
  ASSERT_GE(m.num_layers(), 2);
  const int k = m.num_layers() / 2;
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd u = m.affine().apply(m.sample_one(rng));
    const auto full = m.forward_layers(u, 0, m.num_layers());
    const auto first = m.forward_layers(u, 0, k);
    const auto second = m.forward_layers(first.z, k, m.num_layers());
    EXPECT_LT((full.z - second.z).norm(), 1e-12);
    EXPECT_NEAR(full.log_det, first.log_det + second.log_det, 1e-12);
  }
}

TEST(Flow, GradLogDensityMatchesFiniteDifferences) {
  const FlowModel m = fitted_banana(6);
  for (const auto& x : probe_points(m, 100, 5)) {
    const Eigen::VectorXd fd = fd_gradient([&](const Eigen::VectorXd& v) { return flow_log_density(m, v); }, x);
    EXPECT_LT(relative_error(flow_grad_log_density(m, x), fd), 1e-4);
  }
}

TEST(Flow, EvaluateAgreesWithForward) {
  const FlowModel m = fitted_banana(4);
  for (const auto& x : probe_points(m, 20, 6)) {
    const auto e = m.evaluate(x);
    const auto f = m.forward(x);
    EXPECT_LT((e.z - f.z).norm(), 1e-12);
    EXPECT_NEAR(e.log_det, f.log_det, 1e-12);
    EXPECT_NEAR(e.log_density, m.log_density(x), 1e-12);
  }
}

TEST(Flow, LatentPullbackIsJacobianTranspose) {
  const FlowModel m = fitted_banana(4);
  Rng rng(7);
  for (const auto& x : probe_points(m, 20, 8)) {
    const Eigen::VectorXd g = standard_normal_vector(rng, 4);
    const Eigen::VectorXd z = m.forward(x).z;
    const Eigen::VectorXd fd = fd_gradient([&](const Eigen::VectorXd& w) { return g.dot(m.inverse(w)); }, z);
    EXPECT_LT(relative_error(m.latent_pullback(x, g), fd), 1e-6);
  }
}

TEST(Flow, LatentPotentialGradient) {
  const FlowModel m = fitted_banana(4);
  const TargetDensity t = make_rosenbrock(4, 0.1, 6.0);
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd z = standard_normal_vector(rng, 4);
    if (m.knot_distance(m.inverse(z)) < 1e-4) continue;
    const LatentPotential lp = latent_potential_and_grad(m, t, z);
    const Eigen::VectorXd fd =
        fd_gradient([&](const Eigen::VectorXd& w) { return latent_potential_and_grad(m, t, w).value; }, z);
    EXPECT_LT(relative_error(lp.grad, fd), 1e-4);
  }
}

TEST(Flow, LatentPotentialOfOwnDensityIsStandardNormal) {
  // target equal to the flow density: U(z) = |z|^2 / 2 + const, grad U(z) = z
  Eigen::MatrixXd cov(2, 2);
  cov << 1.5, -0.4, -0.4, 0.8;
  const Eigen::Vector2d mean(0.3, 0.1);
  const FlowModel m = FlowModel::gaussian(mean, cov);
  const TargetDensity t = make_gaussian(mean, cov);
  Rng rng(10);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd z = standard_normal_vector(rng, 2);
    EXPECT_LT((latent_potential_and_grad(m, t, z).grad - z).norm(), 1e-10);
  }
}

TEST(Flow, NormalizedIn1d) {
  Rng rng(11);
  const Eigen::MatrixXd samples[] = {gaussian_samples(1000, 1, rng), mixture_samples(1000, 1, rng),
                                     banana_samples(1000, 2, rng).col(1)};
  for (const auto& x : samples) {
    const FlowModel m = fit_flow(x, 0.2, rng);
    const double z = integrate_1d(m, x.minCoeff() - 15.0, x.maxCoeff() + 15.0, 1e-3);
    EXPECT_GE(z, 0.98);
    EXPECT_LE(z, 1.02);
  }
}

TEST(Flow, NormalizedIn2d) {
  Rng rng(12);
  const Eigen::MatrixXd samples[] = {gaussian_samples(1000, 2, rng), mixture_samples(1000, 2, rng),
                                     banana_samples(1000, 2, rng)};
  for (const auto& x : samples) {
    const FlowModel m = fit_flow(x, 0.2, rng);
    const Eigen::VectorXd lo = x.colwise().minCoeff(), hi = x.colwise().maxCoeff();
    const double z = integrate_2d(m, lo(0) - 6, hi(0) + 6, lo(1) - 6, hi(1) + 6, 0.02);
    EXPECT_GE(z, 0.98);
    EXPECT_LE(z, 1.02);
  }
}

TEST(Flow, FitIsDeterministicGivenSeed) {
  const FlowModel a = fitted_banana(4, 500, 13), b = fitted_banana(4, 500, 13);
  EXPECT_EQ(flow_to_json(a).dump(), flow_to_json(b).dump());
}

TEST(Flow, DegenerateSamplesAreJittered) {
  Rng rng(14);
  Eigen::MatrixXd x = gaussian_samples(200, 3, rng);
  x.col(2).setConstant(1.0);
  FlowFitReport rep;
  const FlowModel m = fit_flow(x, 0.2, rng, {}, &rep);
  EXPECT_TRUE(rep.jittered);
  EXPECT_TRUE(std::isfinite(m.log_density(x.row(0).transpose())));
  const FlowModel g = fit_gaussian_flow(Eigen::MatrixXd::Ones(5, 2));
  EXPECT_TRUE(std::isfinite(g.log_density(Eigen::VectorXd::Ones(2))));
}

TEST(Flow, FitErrors) {
  Rng rng(15);
  EXPECT_THROW(fit_flow(gaussian_samples(10, 2, rng), 0.2, rng), FitError);
  EXPECT_THROW(fit_flow(gaussian_samples(100, 2, rng), 1.5, rng), FitError);
  Eigen::MatrixXd bad = gaussian_samples(100, 2, rng);
  bad(3, 1) = std::nan("");
  EXPECT_THROW(fit_flow(bad, 0.2, rng), FitError);
  EXPECT_THROW(fit_gaussian_flow(Eigen::MatrixXd::Zero(1, 2)), FitError);
  const FlowModel m = fitted_banana(2, 200);
  EXPECT_THROW(m.log_density(Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(Flow, LinearTailsKeepDensityFinite) {
  const FlowModel m = fitted_banana(2);
  const Eigen::Vector2d far(40.0, -60.0);
  EXPECT_TRUE(std::isfinite(m.log_density(far)));
  EXPECT_TRUE(m.grad_log_density(far).allFinite());
  EXPECT_LT((m.forward(m.inverse(m.forward(far).z)).z - m.forward(far).z).norm(), 1e-8);
}

TEST(FlowIo, RoundTrip) {
  const FlowModel m = fitted_banana(4);
  dlmc::test::TempDir dir("flowio");
  const auto path = (dir.path / "flow.json").string();
  save_flow(m, path);
  const FlowModel r = load_flow(path);
  ASSERT_EQ(r.num_layers(), m.num_layers());
  Rng rng(16);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = m.sample_one(rng);
    EXPECT_DOUBLE_EQ(r.log_density(x), m.log_density(x));
  }
  EXPECT_EQ(flow_to_json(r).dump(), flow_to_json(m).dump());
}

TEST(FlowIo, RejectsMalformedFiles) {
  nlohmann::json j = flow_to_json(fitted_banana(2, 200));
  j["format"] = "something-else";
  EXPECT_THROW(flow_from_json(j), DataError);
  j = flow_to_json(fitted_banana(2, 200));
  j["version"] = 99;
  EXPECT_THROW(flow_from_json(j), DataError);
}
