#include "dlmc/baselines.hpp"
#include "dlmc/sampler.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dlmc;

namespace {

Eigen::MatrixXd test_cov() {
  Eigen::MatrixXd c(3, 3);
  c << 2.0, 0.4, 0.0, 0.4, 1.0, -0.3, 0.0, -0.3, 0.5;
  return c;
}

ParticleEnsemble exact_ensemble(const TargetDensity& t, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, int n,
                                std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd l = cov.llt().matrixL();
  ParticleEnsemble e;
  e.positions.resize(n, mean.size());
  for (int i = 0; i < n; ++i) e.positions.row(i) = (mean + l * standard_normal_vector(rng, mean.size())).transpose();
  evaluate_potentials(t, e.positions, e.potential_values, e.grad_potentials, nullptr);
  e.flow_log_densities = Eigen::VectorXd::Zero(n);
  return e;
}

// every coordinate's second moment is consistent with the exact value
void expect_second_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const MomentSummary s = summarize(x);
  for (int i = 0; i < s.dim(); ++i) {
    const double v = cov(i, i), m = mean(i);
    const double m2 = v + m * m;
    const double var_m2 = 2 * v * v + 4 * m * m * v;  // Var[x^2] for a Gaussian
    const double z = std::abs(s.second_moment(i) - m2) / std::sqrt(var_m2 / x.rows());
    EXPECT_LT(z, 4.0) << "coordinate " << i;
  }
}

}  // namespace

TEST(Sampler, AdagradStepFormula) {
  AdagradState ada;
  ada.reset(2, 2);
  const Eigen::Vector2d g(3.0, 4.0);
  Eigen::VectorXd s = detail::optimizer_step(g, 0.1, Optimizer::adagrad, &ada, 1);
  EXPECT_NEAR(s(0), -0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(s(1), -0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  s = detail::optimizer_step(g, 0.1, Optimizer::adagrad, &ada, 1);
  EXPECT_NEAR(s(0), -0.1 * 3.0 / (std::sqrt(18.0) + 1e-8), 1e-15);
  EXPECT_NEAR(s(1), -0.1 * 4.0 / (std::sqrt(32.0) + 1e-8), 1e-15);
  EXPECT_EQ(ada.accumulator.row(0).norm(), 0.0);
  s = detail::optimizer_step(g, 0.1, Optimizer::plain_gradient, nullptr, 0);
  EXPECT_NEAR(s(0), -0.3, 1e-15);
  EXPECT_NEAR(s(1), -0.4, 1e-15);
}

TEST(Sampler, MaxStepCapsEachCoordinate) {
  const Eigen::Vector3d g(10.0, -0.5, -20.0);
  const Eigen::VectorXd s = detail::optimizer_step(g, 0.1, Optimizer::plain_gradient, nullptr, 0, 0.3);
  EXPECT_DOUBLE_EQ(s(0), -0.3);
  EXPECT_DOUBLE_EQ(s(1), 0.05);
  EXPECT_DOUBLE_EQ(s(2), 0.3);
}

TEST(Sampler, FixedPointWhenModelMatchesTarget) {
  const Eigen::Vector3d mean(0.5, -1.0, 2.0);
  const TargetDensity t = make_gaussian(mean, test_cov());
  const FlowModel m = FlowModel::gaussian(mean, test_cov());
  ParticleEnsemble e = exact_ensemble(t, mean, test_cov(), 200, 1);
  e.flow_log_densities = model_log_densities(m, e.positions, 1);
  DlmcConfig cfg;
  cfg.optimizer = Optimizer::plain_gradient;
  AdagradState ada;
  const ParticleEnsemble a = dl_update(e, t, m, cfg, ada);
  const ParticleEnsemble b = dl_update_latent(e, t, m, cfg, ada);
  EXPECT_LE((a.positions - e.positions).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((b.positions - e.positions).cwiseAbs().maxCoeff(), 1e-8);
  const MhResult r = mh_adjust(e, t, m, 7, 0);
  EXPECT_NEAR(r.acceptance_rate, 1.0, 1e-12);
}

TEST(Sampler, MhKeepsTheTargetStationary) {
  // mismatched but fixed proposal: the exact ensemble must stay exact
  const Eigen::Vector3d mean(0.5, -1.0, 2.0);
  const TargetDensity t = make_gaussian(mean, test_cov());
  const FlowModel q = FlowModel::gaussian(mean + Eigen::Vector3d(0.3, 0.0, -0.2), 1.5 * test_cov());
  ParticleEnsemble e = exact_ensemble(t, mean, test_cov(), 4000, 2);
  e.flow_log_densities = model_log_densities(q, e.positions, 1);
  SamplerStats stats;
  double acc = 0.0;
  for (int round = 0; round < 10; ++round) {
    MhResult r = mh_adjust(e, t, q, 3, round, &stats);
    acc = r.acceptance_rate;
    e = std::move(r.ensemble);
  }
  EXPECT_GT(acc, 0.2);
  EXPECT_LT(acc, 1.0);
  EXPECT_EQ(stats.mh_passes, 10);
  expect_second_moments(e.positions, mean, test_cov());
}

TEST(Sampler, CrossFittedMhKeepsTheTargetStationary) {
  // proposals refitted from the particles themselves, as inside DLMC
  const Eigen::Vector3d mean(0.5, -1.0, 2.0);
  const TargetDensity t = make_gaussian(mean, test_cov());
  ParticleEnsemble e = exact_ensemble(t, mean, test_cov(), 2000, 4);
  SamplerStats stats;
  auto fit = [](const Eigen::MatrixXd& x, int) {
    // deliberately too wide so that rejections happen
    Eigen::MatrixXd c = (x.rowwise() - x.colwise().mean()).transpose() * (x.rowwise() - x.colwise().mean());
    return FlowModel::gaussian(x.colwise().mean().transpose(), 2.0 * c / (x.rows() - 1));
  };
  for (int round = 0; round < 10; ++round) {
    MhResult r = mh_adjust_cross_fit<FlowModel>(e, t, fit, 5, round, &stats);
    e = std::move(r.ensemble);
  }
  EXPECT_EQ(stats.mh_passes, 10);
  EXPECT_EQ(stats.ledger.likelihood_calls, 10 * 2000);
  expect_second_moments(e.positions, mean, test_cov());
}

TEST(Sampler, MhRejectsNonFiniteProposals) {
  const TargetDensity t = make_rosenbrock(2, 0.1, 6.0);
  ParticleEnsemble e = exact_ensemble(t, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 50, 6);
  // proposals so far out that the potential overflows
  const FlowModel q = FlowModel::gaussian(Eigen::Vector2d(1e200, 1e200), Eigen::Matrix2d::Identity());
  e.flow_log_densities = model_log_densities(q, e.positions, 1);
  SamplerStats stats;
  const MhResult r = mh_adjust(e, t, q, 1, 0, &stats);
  EXPECT_EQ(r.acceptance_rate, 0.0);
  EXPECT_EQ(stats.rejected_nonfinite, 50);
  EXPECT_EQ((r.ensemble.positions - e.positions).norm(), 0.0);
}

TEST(Sampler, ConvergenceCheck) {
  auto summary = [](double mean, double m2) {
    MomentSummary s;
    s.mean = Eigen::VectorXd::Constant(2, mean);
    s.second_moment = Eigen::VectorXd::Constant(2, m2);
    return s;
  };
  std::vector<MomentSummary> flat(6, summary(0.1, 1.0));
  EXPECT_TRUE(check_convergence(flat, 5, 0.02));
  EXPECT_FALSE(check_convergence(std::vector<MomentSummary>(5, summary(0.1, 1.0)), 5, 0.02));
  std::vector<MomentSummary> drift;
  for (int k = 0; k < 6; ++k) drift.push_back(summary(0.1, 1.0 + 0.05 * k));
  EXPECT_FALSE(check_convergence(drift, 5, 0.02));
  std::vector<MomentSummary> slow;
  for (int k = 0; k < 6; ++k) slow.push_back(summary(0.1, 1.0 + 0.01 * k));
  EXPECT_TRUE(check_convergence(slow, 5, 0.02));
}

TEST(Sampler, ZeroLikelihoodGradientStopsAtIterationZero) {
  const TargetDensity t = make_funnel(FunnelOptions{.dim = 5});
  DlmcConfig cfg;
  cfg.n_particles = 50;
  const RunResult r = run_dlmc(t, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.stats.ledger.likelihood_calls, 50);
}

TEST(Sampler, InitialStepMovesAlongLikelihoodGradient) {
  const Eigen::VectorXd y = simulate_funnel_data(4, 1.0, 0);
  const TargetDensity t = make_funnel(FunnelOptions{4, 1.0, y});
  bool moved = false;
  SamplerStats stats;
  const ParticleEnsemble e0 = init_from_prior(t, 20, 0.0, 9, &stats);
  const ParticleEnsemble e1 = init_from_prior(t, 20, 0.05, 9, &stats, Optimizer::plain_gradient, nullptr, &moved);
  EXPECT_TRUE(moved);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = e0.positions.row(i).transpose();
    const Eigen::VectorXd expected = x - 0.05 * t.grad_likelihood(x);
    EXPECT_LT((e1.positions.row(i).transpose() - expected).norm(), 1e-12);
    EXPECT_NEAR(e1.potential_values(i), t.potential(expected), 1e-10);
  }
}

TEST(Sampler, ConfigValidation) {
  DlmcConfig c;
  EXPECT_NO_THROW(c.validate());
  c.step_size = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.allow_any_step_size = true;
  EXPECT_NO_THROW(c.validate());
  c = DlmcConfig{};
  c.n_particles = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DlmcConfig{};
  c.upsample_to = 10;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DlmcConfig{};
  c.max_step = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DlmcConfig{};
  c.convergence_window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sampler, RunIsDeterministicAcrossWorkerCounts) {
  const TargetDensity t = make_rosenbrock(4, 0.1, 6.0);
  DlmcConfig cfg;
  cfg.n_particles = 100;
  cfg.max_iterations = 4;
  cfg.stop_on_convergence = false;
  cfg.seed = 11;
  const RunResult a = run_dlmc(t, cfg);
  cfg.workers = 8;
  const RunResult b = run_dlmc(t, cfg);
  EXPECT_EQ((a.ensemble.positions - b.ensemble.positions).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.stats.ledger.likelihood_calls, b.stats.ledger.likelihood_calls);
  ASSERT_EQ(a.records.size(), 4u);
  for (const auto& r : a.records) EXPECT_TRUE(r.mh_acceptance.has_value());
}

TEST(Sampler, BurnInThenUpsample) {
  const TargetDensity t = make_rosenbrock(4, 0.1, 6.0);
  DlmcConfig cfg;
  cfg.n_particles = 10;
  cfg.burnin_iterations = 3;
  cfg.upsample_to = 200;
  cfg.max_iterations = 5;
  cfg.stop_on_convergence = false;
  const RunResult r = run_dlmc(t, cfg);
  ASSERT_EQ(r.records.size(), 5u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(r.records[k].phase, "burnin");
    EXPECT_EQ(r.records[k].n_particles, 10);
    EXPECT_FALSE(r.records[k].mh_acceptance.has_value());
  }
  EXPECT_EQ(r.records[3].phase, "main");
  EXPECT_EQ(r.records[4].n_particles, 200);
  EXPECT_EQ(r.ensemble.size(), 200);
}

TEST(Sampler, MhOnlyDoesNoDeterministicUpdates) {
  const TargetDensity t = make_rosenbrock(2, 0.1, 6.0);
  DlmcConfig cfg;
  cfg.n_particles = 100;
  cfg.max_iterations = 3;
  cfg.stop_on_convergence = false;
  const RunResult r = run_mh_only(t, cfg);
  EXPECT_EQ(r.method, "mh_only");
  EXPECT_EQ(r.stats.dl_updates, 0);
  EXPECT_EQ(r.stats.mh_passes, 3);
}
