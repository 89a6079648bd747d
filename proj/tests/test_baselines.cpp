#include "dlmc/baselines.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dlmc;
using dlmc::test::fd_gradient;
using dlmc::test::relative_error;

namespace {

TargetDensity standard_gaussian(int d) { return make_gaussian(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)); }

TargetDensity flat_target(int d) {
  auto parts = [d](const Eigen::VectorXd&) {
    PotentialParts p;
    p.grad_likelihood = Eigen::VectorXd::Zero(d);
    p.grad_prior = Eigen::VectorXd::Zero(d);
    return p;
  };
  auto sampler = [d](Rng& rng) { return standard_normal_vector(rng, d); };
  return TargetDensity("flat", d, parts, sampler, ParameterTransform::identity(d));
}

}  // namespace

TEST(Langevin, UnadjustedStationaryVarianceLaw) {
  // for a standard normal, ULA with step h has stationary variance 2 / (2 - h)
  LangevinConfig c;
  c.n_chains = 4;
  c.steps = 200000;
  c.burn_in = 1000;
  c.step_size = 0.5;
  c.adjusted = false;
  c.seed = 1;
  const LangevinResult r = run_langevin(standard_gaussian(2), c);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.moments.second_moment(i), 4.0 / 3.0, 4 * r.second_moment_stderr(i));
    EXPECT_GT(std::abs(r.moments.second_moment(i) - 1.0), 4 * r.second_moment_stderr(i));
  }
}

TEST(Langevin, AdjustedChainIsExact) {
  LangevinConfig c;
  c.n_chains = 4;
  c.steps = 200000;
  c.burn_in = 1000;
  c.step_size = 0.5;
  c.seed = 2;
  const LangevinResult r = run_langevin(standard_gaussian(2), c);
  EXPECT_GT(r.acceptance_rate, 0.5);
  EXPECT_LT(r.acceptance_rate, 1.0);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.moments.second_moment(i), 1.0, 4 * r.second_moment_stderr(i));
}

TEST(Langevin, FlatTargetAcceptsEverything) {
  LangevinConfig c;
  c.n_chains = 2;
  c.steps = 1000;
  c.burn_in = 0;
  c.seed = 3;
  EXPECT_DOUBLE_EQ(run_langevin(flat_target(3), c).acceptance_rate, 1.0);
}

TEST(Langevin, TransitionDensity) {
  const Eigen::Vector2d from(0.2, -0.1), to(0.5, 0.3), g(1.0, -2.0);
  const double dt = 0.1;
  const double expected = -(to - from + dt * g).squaredNorm() / (4 * dt);
  EXPECT_DOUBLE_EQ(detail::langevin_log_transition(to, from, g, dt), expected);
}

TEST(Langevin, LedgerCountsOneCallPerStep) {
  LangevinConfig c;
  c.n_chains = 3;
  c.steps = 500;
  c.burn_in = 100;
  c.n_batches = 10;
  const LangevinResult r = run_langevin(standard_gaussian(1), c);
  EXPECT_EQ(r.stats.ledger.likelihood_calls, 3 * (500 + 100 + 1));
  EXPECT_EQ(r.stats.ledger.rounds, 500 + 100 + 1);
  EXPECT_EQ(r.total_steps, 3 * 600);
}

TEST(Kde, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Eigen::MatrixXd x(50, 3);
  for (int i = 0; i < 50; ++i) x.row(i) = standard_normal_vector(rng, 3).transpose();
  const KdeModel m(x, 0.4);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd p = 1.5 * standard_normal_vector(rng, 3);
    const Eigen::VectorXd fd = fd_gradient([&](const Eigen::VectorXd& v) { return m.log_density(v); }, p);
    EXPECT_LT(relative_error(m.grad_log_density(p), fd), 1e-6);
  }
  EXPECT_LT(relative_error(kde_grad_log_density(m, 3), m.grad_log_density(x.row(3).transpose())), 1e-15);
}

TEST(Kde, SingleKernelIsNormalized) {
  const KdeModel m(Eigen::MatrixXd::Zero(1, 1), 0.5);
  double z = 0.0;
  for (double v = -5; v <= 5; v += 1e-3) z += std::exp(m.log_density(Eigen::VectorXd::Constant(1, v))) * 1e-3;
  EXPECT_NEAR(z, 1.0, 1e-6);
  EXPECT_THROW(KdeModel(Eigen::MatrixXd::Zero(1, 1), 0.0), ConfigError);
}

TEST(Kde, MedianBandwidth) {
  // points 0, 1, 2 on a line: squared distances 1, 1, 4, median 1
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 1.0, 2.0;
  EXPECT_NEAR(median_bandwidth(x), std::sqrt(1.0 / (2 * std::log(3.0))), 1e-14);
  // four points: squared distances 1, 1, 1, 4, 4, 9, median (1 + 4) / 2
  Eigen::MatrixXd y(4, 1);
  y << 0.0, 1.0, 2.0, 3.0;
  EXPECT_NEAR(median_bandwidth(y), std::sqrt(2.5 / (2 * std::log(4.0))), 1e-14);
  EXPECT_EQ(median_bandwidth(Eigen::MatrixXd::Zero(5, 2)), 1.0);
}

TEST(Svgd, SingleStepFormula) {
  const TargetDensity t = standard_gaussian(2);
  ParticleEnsemble e;
  e.positions.resize(3, 2);
  e.positions << 0.0, 0.0, 1.0, 0.5, -0.5, 2.0;
  evaluate_potentials(t, e.positions, e.potential_values, e.grad_potentials, nullptr);
  e.flow_log_densities = Eigen::VectorXd::Zero(3);
  const double sigma = 0.8, dt = 0.1;
  const ParticleEnsemble out = svgd_step(e, t, sigma, dt);
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector2d phi = Eigen::Vector2d::Zero();
    for (int j = 0; j < 3; ++j) {
      const Eigen::Vector2d xi = e.positions.row(i).transpose(), xj = e.positions.row(j).transpose();
      const double k = std::exp(-(xi - xj).squaredNorm() / (2 * sigma * sigma));
      phi += -e.grad_potentials.row(j).transpose() * k + (xi - xj) / (sigma * sigma) * k;
    }
    EXPECT_LT((out.positions.row(i).transpose() - (e.positions.row(i).transpose() + dt / 3 * phi)).norm(), 1e-13);
  }
}

TEST(Svgd, RecoversGaussianMoments) {
  SvgdConfig c;
  c.n_particles = 200;
  c.step_size = 0.1;
  c.max_iterations = 300;
  c.stop_on_convergence = false;
  const Eigen::Vector2d mean(1.0, -0.5);
  const TargetDensity t = make_gaussian(mean, Eigen::Matrix2d::Identity());
  const RunResult r = run_svgd(t, c);
  const MomentSummary s = summarize(r.ensemble.positions);
  EXPECT_LT((s.mean - mean).norm(), 0.1);
  EXPECT_EQ(r.stats.ledger.likelihood_calls, 200 * 301);
}

TEST(DlmcPp, RunsWithKdeModel) {
  const TargetDensity t = make_rosenbrock(2, 0.1, 6.0);
  DlmcConfig c;
  c.n_particles = 100;
  c.max_iterations = 5;
  c.stop_on_convergence = false;
  const RunResult r = run_dlmc_pp(t, c, 0.0);
  EXPECT_EQ(r.method, "dlmc_pp");
  EXPECT_EQ(r.stats.dl_updates, 5);
  EXPECT_EQ(r.stats.latent_maps, 0);
  EXPECT_EQ(r.iterations, 5);
}
