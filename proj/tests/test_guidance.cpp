#include <gtest/gtest.h>

#include <cmath>

#include "spgd/guidance.hpp"

using namespace spgd;

namespace {

struct Instance {
  ScorePrior prior;
  MeasurementModel meas;
  NoiseSchedule schedule = make_default_schedule(100);
};

Instance mixture_instance(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  const ImageGeometry g{4, 4, 1};
  Matrix b = Matrix::NullaryExpr(16, 16, [&]() { return std::normal_distribution<double>()(rng); });
  Matrix cov = 0.02 * b * b.transpose() / 16.0;
  cov.diagonal().array() += 0.01;
  ScorePrior prior({GaussianComponent::full(0.4, Vector::Constant(16, 0.3), cov),
                    GaussianComponent::isotropic(0.6, Vector::Constant(16, 0.7), 0.05)});
  MeasurementModel meas = synthesize_measurement(make_gaussian_blur(g, 3, 1.0), prior.sample(rng), 0.01, seed);
  return {std::move(prior), std::move(meas)};
}

}  // namespace

TEST(Guidance, ObjectiveExamples) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Zero(2), 1.0)});
  const NoiseSchedule s = make_default_schedule(100);
  const Vector x = Vector::Constant(2, 0.3);
  const Vector x0 = tweedie_x0(p, s, x, 40);
  const MeasurementModel exact(LinearOperator::identity(2), 0.0, x0);
  EXPECT_EQ(likelihood_objective(p, s, exact, x, 40), 0.0);
  EXPECT_EQ(likelihood_gradient(p, s, exact, x, 40).norm(), 0.0);
  Vector off = x0;
  off[0] -= 0.1;
  const MeasurementModel shifted(LinearOperator::identity(2), 0.0, off);
  EXPECT_NEAR(likelihood_objective(p, s, shifted, x, 40), 0.005, 1e-15);
}

TEST(Guidance, ObjectiveIsHalfSquaredResidual) {
  const auto inst = mixture_instance(1);
  const Vector x = Vector::LinSpaced(16, -1, 1);
  const Vector r = inst.meas.measurement - inst.meas.op.apply(tweedie_x0(inst.prior, inst.schedule, x, 30));
  double direct = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) direct += r[i] * r[i];
  EXPECT_NEAR(likelihood_objective(inst.prior, inst.schedule, inst.meas, x, 30), 0.5 * direct, 1e-14);
}

TEST(Guidance, GradientMatchesFiniteDifferencesInBothModes) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inst = mixture_instance(seed);
    Rng rng = make_rng(seed, 9);
    for (int t : {3, 40, 90}) {
      const Vector x = standard_normal(rng, 16) * 0.7;
      const Vector fd = likelihood_gradient_fd(inst.prior, inst.schedule, inst.meas, x, t, 1e-5);
      for (JacobianMode mode : {JacobianMode::dense, JacobianMode::matrix_free}) {
        const Vector g = likelihood_gradient(inst.prior, inst.schedule, inst.meas, x, t, mode);
        EXPECT_LT((g - fd).norm() / g.norm(), 1e-5);
      }
    }
  }
}

TEST(Guidance, DenseAndMatrixFreeAgree) {
  const auto inst = mixture_instance(4);
  const Vector x = Vector::LinSpaced(16, 1, -1);
  const Vector a = likelihood_gradient(inst.prior, inst.schedule, inst.meas, x, 20, JacobianMode::dense);
  const Vector b = likelihood_gradient(inst.prior, inst.schedule, inst.meas, x, 20, JacobianMode::matrix_free);
  EXPECT_LT((a - b).norm(), 1e-12 * a.norm());
}

TEST(Guidance, GradientIsTwiceObjectiveGradient) {
  // g_l is the gradient of ||y - A x0||^2 = 2 L_t.
  const auto inst = mixture_instance(5);
  const Vector x = Vector::Constant(16, 0.2);
  const int t = 25;
  const Vector g = likelihood_gradient(inst.prior, inst.schedule, inst.meas, x, t);
  Vector half(16);
  const double h = 1e-5;
  for (int i = 0; i < 16; ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    half[i] = (likelihood_objective(inst.prior, inst.schedule, inst.meas, a, t) -
               likelihood_objective(inst.prior, inst.schedule, inst.meas, b, t)) / (2 * h);
  }
  EXPECT_LT((g - 2.0 * half).norm() / g.norm(), 1e-6);
}

TEST(Guidance, QuadraticGradientClosedForm) {
  // Single Gaussian, identity A: x0_hat = mu + k (x - sqrt(ab) mu) with k scalar, so
  // g_l = 2 k (x0_hat - y).
  const double s2 = 0.2;
  const Vector mu = Vector::Constant(3, 0.5);
  ScorePrior p({GaussianComponent::isotropic(1.0, mu, s2)});
  const NoiseSchedule s = make_default_schedule(100);
  const int t = 50;
  const double ab = s.alpha_bar(t);
  const double k = s2 * std::sqrt(ab) / (ab * s2 + 1 - ab);
  const Vector y = Vector::LinSpaced(3, 0, 1);
  const MeasurementModel meas(LinearOperator::identity(3), 0.0, y);
  const Vector x = Vector::LinSpaced(3, 1, -1);
  const Vector x0 = mu + k * (x - std::sqrt(ab) * mu);
  const Vector expect = 2 * k * (x0 - y);
  EXPECT_LT((likelihood_gradient(p, s, meas, x, t) - expect).norm(), 1e-13);
  EXPECT_LT((likelihood_gradient_fd(p, s, meas, x, t, 1e-5) - expect).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Guidance, ZeroResidualGivesZeroFdGradient) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Zero(2), 0.3)});
  const NoiseSchedule s = make_default_schedule(100);
  const Vector x = Vector::Constant(2, 0.1);
  const MeasurementModel meas(LinearOperator::identity(2), 0.0, tweedie_x0(p, s, x, 10));
  EXPECT_LT(likelihood_gradient_fd(p, s, meas, x, 10, 1e-5).norm(), 1e-9);
}

TEST(Guidance, ConfigValidation) {
  GuidanceConfig c;
  EXPECT_EQ(c.warmup_steps, 5);
  EXPECT_DOUBLE_EQ(c.momentum_beta, 0.95);
  EXPECT_DOUBLE_EQ((GuidanceConfig{2.5, 5, 0.9}.inner_step()), 0.5);
  EXPECT_NO_THROW((GuidanceConfig{0.0, 5, 0.9}.validate()));
  EXPECT_THROW((GuidanceConfig{-1.0, 5, 0.9}.validate()), InvalidArgument);
  EXPECT_THROW((GuidanceConfig{1.0, 0, 0.9}.validate()), InvalidArgument);
  EXPECT_THROW((GuidanceConfig{1.0, 5, 1.0}.validate()), InvalidArgument);
}

TEST(Cosine, Cases) {
  Vector u(3), v(3);
  u << 1, 2, 3;
  v << -2, 1, 0;
  EXPECT_NEAR(cosine_sim(u, u), 1.0, 1e-15);
  EXPECT_NEAR(cosine_sim(u, -u), -1.0, 1e-15);
  EXPECT_NEAR(cosine_sim(u, v), 0.0, 1e-15);
  EXPECT_EQ(cosine_sim(u, Vector::Zero(3)), 0.0);
}

TEST(Adm, FirstCallPassesThrough) {
  Vector v = Vector::LinSpaced(4, 1, 4);
  const AdmUpdate u = adm_update(AdmState{}, v, 0.95);
  EXPECT_EQ(u.smoothed_gradient, v);
  EXPECT_FALSE(u.state.last_alpha.has_value());
  EXPECT_FALSE(u.state.empty());
}

TEST(Adm, AlignedIsFixedPoint) {
  Vector v = Vector::LinSpaced(4, 1, 4);
  const AdmUpdate first = adm_update(AdmState{}, v, 0.95);
  const AdmUpdate second = adm_update(first.state, v, 0.95);
  EXPECT_NEAR(*second.state.last_alpha, 1.0, 1e-15);
  EXPECT_LT((second.smoothed_gradient - v).norm(), 1e-14);
}

TEST(Adm, AntiparallelDiscardsHistory) {
  Vector v = Vector::LinSpaced(4, 1, 4);
  const AdmUpdate first = adm_update(AdmState{}, v, 0.95);
  const AdmUpdate second = adm_update(first.state, -v, 0.95);
  EXPECT_NEAR(*second.state.last_alpha, 0.0, 1e-15);
  EXPECT_LT((second.smoothed_gradient + v).norm(), 1e-15);
}

TEST(Adm, OrthogonalHalvesMomentum) {
  Vector u(2), v(2);
  u << 1, 0;
  v << 0, 1;
  const AdmUpdate first = adm_update(AdmState{}, u, 0.8);
  const AdmUpdate second = adm_update(first.state, v, 0.8);
  EXPECT_NEAR(*second.state.last_alpha, 0.5, 1e-15);
  EXPECT_NEAR(second.smoothed_gradient[0], 0.4, 1e-15);
  EXPECT_NEAR(second.smoothed_gradient[1], 0.6, 1e-15);
}

TEST(Adm, ZeroBetaIsPassThrough) {
  Rng rng = make_rng(3, 0);
  AdmState st;
  for (int j = 0; j < 5; ++j) {
    const Vector g = standard_normal(rng, 6);
    AdmUpdate u = adm_update(st, g, 0.0);
    EXPECT_EQ(u.smoothed_gradient, g);
    st = std::move(u.state);
  }
}

TEST(Adm, EffectiveMomentumBounded) {
  Rng rng = make_rng(8, 0);
  AdmState st;
  for (int j = 0; j < 50; ++j) {
    AdmUpdate u = adm_update(st, standard_normal(rng, 5), 0.9);
    if (u.state.last_alpha) {
      EXPECT_GE(*u.state.last_alpha, 0.0);
      EXPECT_LE(*u.state.last_alpha * 0.9, 0.9);
    }
    st = std::move(u.state);
  }
  EXPECT_THROW(adm_update(st, Vector::Zero(4), 0.9), DimensionMismatch);
  EXPECT_THROW(adm_update(st, Vector::Zero(5), 1.0), InvalidArgument);
}
