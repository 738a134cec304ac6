#include <gtest/gtest.h>

#include <cmath>

#include "spgd/sampler.hpp"

using namespace spgd;

namespace {

ScorePrior mixture16() {
  return ScorePrior({GaussianComponent::isotropic(0.5, Vector::Constant(16, 0.3), 0.03),
                     GaussianComponent::isotropic(0.5, Vector::Constant(16, 0.7), 0.03)});
}

MeasurementModel blur_measurement(const ScorePrior& p, std::uint64_t seed) {
  return synthesize_measurement(make_gaussian_blur(ImageGeometry{4, 4, 1}, 3, 1.0), sample_prior(p, seed), 0.01,
                                seed);
}

}  // namespace

TEST(Sampler, DdimStepFixedPointAtMode) {
  ScorePrior unit({GaussianComponent::isotropic(1.0, Vector::Zero(3), 1.0)});
  const NoiseSchedule s = make_default_schedule(50);
  EXPECT_EQ(ddim_step(unit, s, Vector::Zero(3), 20).norm(), 0.0);
}

TEST(Sampler, DdimRunOnUnitGaussianContracts) {
  ScorePrior unit({GaussianComponent::isotropic(1.0, Vector::Zero(4), 1.0)});
  SamplerConfig c{Method::ddim_unconditional, make_default_schedule(100), {}, 3, false};
  const SampleResult r = run_sampler(unit, c);
  // For the unit Gaussian eps = sqrt(1 - ab) x, so each step scales x by
  // sqrt(ab_prev ab) + sqrt((1 - ab_prev)(1 - ab)).
  double gain = 1.0;
  for (int t = 1; t <= 100; ++t) {
    const double ab = c.schedule.alpha_bar(t);
    const double prev = c.schedule.alpha_bar(t - 1);
    gain *= std::sqrt(prev * ab) + std::sqrt((1 - prev) * (1 - ab));
  }
  EXPECT_TRUE(r.x0.allFinite());
  EXPECT_NEAR(r.x0.norm(), gain * initial_noise(4, 3).norm(), 1e-12);
  EXPECT_LT(gain, 1.0);
}

TEST(Sampler, DpsDecomposition) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 1);
  const NoiseSchedule s = make_default_schedule(100);
  Rng rng = make_rng(2, 0);
  for (int t : {1, 17, 64, 100}) {
    const Vector x = standard_normal(rng, 16);
    const GuidanceConfig g{1.7, 1, 0.0};
    const DdimCoefficients c = ddim_coefficients(s, t);
    const Vector expect = c.scale * x - c.denoise_coeff * epsilon(p, s, x, t) -
                          g.zeta * likelihood_gradient(p, s, meas, x, t);
    const Vector got = dps_step(p, s, meas, g, x, t);
    EXPECT_LT((got - expect).norm() / expect.norm(), 1e-10);
  }
}

TEST(Sampler, GuidedMethodsReduceToDdim) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 2);
  const NoiseSchedule s = make_default_schedule(30);
  const Vector x = initial_noise(16, 4);
  for (int t : {1, 15, 30}) {
    const Vector ddim = ddim_step(p, s, x, t);
    EXPECT_EQ(dps_step(p, s, meas, {0.0, 1, 0.0}, x, t), ddim);
    EXPECT_EQ(spgd_step(p, s, meas, {0.0, 1, 0.0}, x, t), ddim);
    EXPECT_EQ(spgd_step(p, s, meas, {0.0, 5, 0.9}, x, t), ddim);
  }
}

TEST(Sampler, ZeroResidualReducesToDdim) {
  const auto p = mixture16();
  const NoiseSchedule s = make_default_schedule(30);
  const Vector x = initial_noise(16, 4);
  const int t = 12;
  const LinearOperator op = LinearOperator::identity(16);
  const MeasurementModel meas(op, 0.0, tweedie_x0(p, s, x, t));
  EXPECT_EQ(dps_step(p, s, meas, {2.0, 1, 0.0}, x, t), ddim_step(p, s, x, t));
  EXPECT_EQ(spgd_step(p, s, meas, {2.0, 5, 0.95}, x, t), ddim_step(p, s, x, t));
  EXPECT_EQ(spgd_warmup(p, s, meas, {2.0, 5, 0.95}, x, t).x, x);
}

TEST(Sampler, SingleWarmupStepIsPlainGradientStep) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 3);
  const NoiseSchedule s = make_default_schedule(30);
  const Vector x = initial_noise(16, 5);
  const WarmupResult w = spgd_warmup(p, s, meas, {0.8, 1, 0.0}, x, 9);
  EXPECT_EQ(w.x, x - 0.8 * likelihood_gradient(p, s, meas, x, 9));
  EXPECT_EQ(w.nfe, 1);
}

TEST(Sampler, WarmupDescendsOnQuadratic) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Constant(16, 0.5), 0.05)});
  const auto meas = blur_measurement(p, 4);
  const NoiseSchedule s = make_default_schedule(50);
  const Vector x = initial_noise(16, 6);
  const int t = 5;
  // g_l is linear here; its Lipschitz constant is the top eigenvalue of 2 J A^T A J.
  const Matrix j = tweedie_jacobian(p, s, x, t);
  const Matrix a = meas.op.to_matrix();
  const double lip = 2.0 * (j * a.transpose() * a * j).eigenvalues().real().maxCoeff();
  const WarmupResult w = spgd_warmup(p, s, meas, {5 * 0.5 / lip, 5, 0.0}, x, t);
  double prev = w.inner.front().objective;
  for (std::size_t k = 1; k < w.inner.size(); ++k) {
    EXPECT_LT(w.inner[k].objective, prev);
    prev = w.inner[k].objective;
  }
  EXPECT_LT(likelihood_objective(p, s, meas, w.x, t), prev);
}

TEST(Sampler, NfeAccounting) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 5);
  SamplerConfig c{Method::spgd, make_default_schedule(20), {1.0, 5, 0.95}, 1, false};
  EXPECT_EQ(run_sampler(p, meas, c).log.nfe, 20 * 6);
  c.method = Method::dps;
  EXPECT_EQ(run_sampler(p, meas, c).log.nfe, 20);
  c.method = Method::ddim_unconditional;
  EXPECT_EQ(run_sampler(p, meas, c).log.nfe, 20);
  EXPECT_EQ(run_sampler(p, c).log.nfe, 20);
}

TEST(Sampler, Deterministic) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 6);
  SamplerConfig c{Method::spgd, make_default_schedule(30), {1.0, 5, 0.95}, 11, true};
  const SampleResult a = run_sampler(p, meas, c);
  const SampleResult b = run_sampler(p, meas, c);
  EXPECT_EQ(a.x0, b.x0);
  ASSERT_EQ(a.log.steps.size(), b.log.steps.size());
  for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
    EXPECT_EQ(a.log.steps[i].x_after, b.log.steps[i].x_after);
  }
  c.seed = 12;
  EXPECT_NE(run_sampler(p, meas, c).x0, a.x0);
}

TEST(Sampler, UnconditionalSamplingStatistics) {
  const Vector mu = Vector::LinSpaced(2, 0.2, 0.8);
  const double sd = 0.3;
  ScorePrior p({GaussianComponent::isotropic(1.0, mu, sd * sd)});
  const int n = 10000;
  Vector mean = Vector::Zero(2);
  SamplerConfig c{Method::ddim_unconditional, make_default_schedule(100), {}, 0, false};
  for (int i = 0; i < n; ++i) {
    c.seed = static_cast<std::uint64_t>(i);
    mean += run_sampler(p, c).x0;
  }
  mean /= n;
  EXPECT_LT((mean - mu).cwiseAbs().maxCoeff(), 4 * sd / std::sqrt(double(n)));
}

TEST(Sampler, GuidancePullsTowardTruth) {
  const auto p = mixture16();
  const Vector truth = sample_prior(p, 8);
  const MeasurementModel meas = synthesize_measurement(LinearOperator::identity(16), truth, 0.0, 8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SamplerConfig c{Method::spgd, make_default_schedule(50), {1.0, 5, 0.95}, seed, false};
    const double guided = (run_sampler(p, meas, c).x0 - truth).norm();
    c.method = Method::ddim_unconditional;
    const double free = (run_sampler(p, c).x0 - truth).norm();
    EXPECT_LT(guided, free);
  }
}

TEST(Sampler, DiagnosticsRecordAngles) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 9);
  SamplerConfig c{Method::spgd, make_default_schedule(10), {1.0, 3, 0.9}, 2, true};
  const SampleResult r = run_sampler(p, meas, c);
  ASSERT_EQ(r.log.steps.size(), 10u);
  EXPECT_EQ(r.log.steps.front().outer_t, 10);
  EXPECT_TRUE(std::isnan(r.log.steps.front().angle_gl_prev));
  for (std::size_t i = 1; i < r.log.steps.size(); ++i) {
    const auto& st = r.log.steps[i];
    EXPECT_EQ(st.inner.size(), 3u);
    EXPECT_FALSE(std::isnan(st.angle_gl_gd));
    EXPECT_NEAR(st.angle_gl_prev, angle_between(st.g_l, r.log.steps[i - 1].g_l), 1e-12);
    EXPECT_FALSE(st.inner[0].alpha.has_value());
    EXPECT_TRUE(st.inner[1].alpha.has_value());
    EXPECT_FALSE(std::isnan(st.final_objective));
  }
}

TEST(Sampler, DivergenceIsReported) {
  const auto p = mixture16();
  const auto meas = blur_measurement(p, 10);
  SamplerConfig c{Method::spgd, make_default_schedule(20), {1e9, 5, 0.0}, 1, false};
  EXPECT_THROW(run_sampler(p, meas, c), Error);
  // DPS has no warm-up objective to watch; it fails once the state overflows.
  c.method = Method::dps;
  c.guidance.zeta = 1e300;
  EXPECT_THROW(run_sampler(p, meas, c), NonFiniteError);
}

TEST(Sampler, RequiresMeasurementForGuidedMethods) {
  const auto p = mixture16();
  SamplerConfig c{Method::spgd, make_default_schedule(5), {}, 0, false};
  EXPECT_THROW(run_sampler(p, c), InvalidArgument);
}
