#include <gtest/gtest.h>

#include <cmath>

#include "spgd/prior.hpp"
#include "spgd/schedule.hpp"

using namespace spgd;

namespace {

ScorePrior two_component_2d() {
  Matrix cov(2, 2);
  cov << 0.3, 0.1, 0.1, 0.2;
  Vector m1(2), m2(2);
  m1 << 1.0, -0.5;
  m2 << -0.8, 0.6;
  return ScorePrior({GaussianComponent::full(0.35, m1, cov), GaussianComponent::isotropic(0.65, m2, 0.15)});
}

ScorePrior symmetric_pair(double m) {
  return ScorePrior({GaussianComponent::isotropic(0.5, Vector::Constant(3, m), 0.2),
                     GaussianComponent::isotropic(0.5, Vector::Constant(3, -m), 0.2)});
}

Vector fd_score(const ScorePrior& p, const Vector& x, double ab, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (p.log_density(a, ab) - p.log_density(b, ab)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Prior, UnitGaussianScoreIsMinusX) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Zero(4), 1.0)});
  const NoiseSchedule s = make_default_schedule(100);
  const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
  for (int t : {1, 30, 100}) EXPECT_LT((score(p, s, x, t) + x).norm(), 1e-14);
}

TEST(Prior, SymmetricMixtureScoreVanishesAtOrigin) {
  const auto p = symmetric_pair(1.0);
  EXPECT_LT(p.score(Vector::Zero(3), 0.4).norm(), 1e-15);
}

TEST(Prior, ScoreMatchesFiniteDifferences) {
  const auto p = two_component_2d();
  Vector x(2);
  x << 0.3, 0.2;
  for (double ab : {0.05, 0.5, 0.95}) {
    const Vector fd = fd_score(p, x, ab, 1e-5);
    EXPECT_LT((p.score(x, ab) - fd).norm() / fd.norm(), 1e-6);
  }
}

TEST(Prior, LogDensityOfSingleGaussian) {
  // log N(x; sqrt(ab) mu, (ab s2 + 1 - ab) I) written out directly.
  const double s2 = 0.3;
  const double ab = 0.4;
  const Vector mu = Vector::LinSpaced(3, 0.0, 1.0);
  ScorePrior p({GaussianComponent::isotropic(1.0, mu, s2)});
  const Vector x = Vector::LinSpaced(3, 1.0, -1.0);
  const double v = ab * s2 + 1 - ab;
  const double expect = -0.5 * (x - std::sqrt(ab) * mu).squaredNorm() / v - 1.5 * std::log(2 * M_PI * v);
  EXPECT_NEAR(p.log_density(x, ab), expect, 1e-13);
}

TEST(Prior, FarFromModesStaysFinite) {
  const auto p = symmetric_pair(1.0);
  const Vector x = Vector::Constant(3, 400.0);
  const Vector sc = p.score(x, 0.9);
  EXPECT_TRUE(sc.allFinite());
  EXPECT_TRUE(std::isfinite(p.log_density(x, 0.9)));
}

TEST(Prior, UnitGaussianHessianIsMinusIdentity) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Zero(3), 1.0)});
  const Vector x = Vector::Constant(3, 0.7);
  const double ab = 0.3;
  EXPECT_LT((p.score_hessian(p.evaluate(x, ab), ab) + Matrix::Identity(3, 3)).norm(), 1e-14);
}

TEST(Prior, HessianMatchesFiniteDifferenceOfScore) {
  for (const auto& p : {symmetric_pair(0.8), two_component_2d()}) {
    const Eigen::Index d = p.dim();
    Vector x = d == 3 ? Vector::Zero(3) : Vector(Vector::LinSpaced(2, 0.1, -0.4));
    const double ab = 0.6;
    const Matrix h = p.score_hessian(p.evaluate(x, ab), ab);
    EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Matrix fd(d, d);
    const double step = 1e-6;
    for (Eigen::Index i = 0; i < d; ++i) {
      Vector a = x, b = x;
      a[i] += step;
      b[i] -= step;
      fd.col(i) = (p.score(a, ab) - p.score(b, ab)) / (2 * step);
    }
    EXPECT_LT((h - fd).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Prior, HessianVectorProductMatchesDense) {
  const auto p = two_component_2d();
  Vector x(2), v(2);
  x << -0.2, 0.9;
  v << 0.4, -1.1;
  const auto ev = p.evaluate(x, 0.3);
  EXPECT_LT((p.score_hessian(ev, 0.3) * v - p.score_hessian_times(ev, 0.3, v)).norm(), 1e-13);
}

TEST(Prior, EpsilonRelations) {
  const NoiseSchedule s = make_default_schedule(100);
  EXPECT_LT(epsilon(symmetric_pair(1.0), s, Vector::Zero(3), 50).norm(), 1e-15);
  ScorePrior unit({GaussianComponent::isotropic(1.0, Vector::Zero(4), 1.0)});
  const double c = 0.8;
  const Vector e = epsilon(unit, s, Vector::Constant(4, c), 40);
  EXPECT_LT((e - Vector::Constant(4, std::sqrt(1 - s.alpha_bar(40)) * c)).norm(), 1e-14);
}

TEST(Prior, EpsilonMatchesInjectedNoiseOnAverage) {
  // eps(x_t) = E[noise | x_t]; averaging the prediction error over draws of x_t gives ~0.
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Constant(2, 0.5), 0.2)});
  const NoiseSchedule s = make_default_schedule(100);
  const int t = 60;
  const double ab = s.alpha_bar(t);
  Rng rng = make_rng(5, 0);
  Vector acc = Vector::Zero(2);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vector x0 = p.sample(rng);
    const Vector z = standard_normal(rng, 2);
    acc += epsilon(p, s, std::sqrt(ab) * x0 + std::sqrt(1 - ab) * z, t) - z;
  }
  EXPECT_LT((acc / n).cwiseAbs().maxCoeff(), 4.0 / std::sqrt(n));
}

TEST(Prior, TweedieMatchesConjugateClosedForm) {
  const double s2 = 0.25;
  const Vector mu = Vector::LinSpaced(4, -0.5, 0.5);
  ScorePrior p({GaussianComponent::isotropic(1.0, mu, s2)});
  const NoiseSchedule s = make_default_schedule(100);
  const Vector x = Vector::LinSpaced(4, 1.0, -2.0);
  for (int t : {1, 20, 100}) {
    const double ab = s.alpha_bar(t);
    const Vector expect = mu + (s2 * std::sqrt(ab) / (ab * s2 + 1 - ab)) * (x - std::sqrt(ab) * mu);
    EXPECT_LT((tweedie_x0(p, s, x, t) - expect).norm(), 1e-12 * (1 + expect.norm()) / std::sqrt(ab));
    EXPECT_LT((tweedie_x0_from_epsilon(s, x, epsilon(p, s, x, t), t) - expect).norm(), 1e-10);
  }
}

TEST(Prior, TweedieNearIdentityWithoutNoise) {
  ScorePrior p({GaussianComponent::isotropic(1.0, Vector::Zero(3), 0.5)});
  const NoiseSchedule s = make_linear_schedule(10, 1e-6, 1e-5);
  const Vector x = Vector::Constant(3, 0.4);
  EXPECT_LT((tweedie_x0(p, s, x, 1) - x).norm(), 1e-5);
}

TEST(Prior, JacobianClosedFormAndFiniteDifferences) {
  const NoiseSchedule s = make_default_schedule(100);
  ScorePrior unit({GaussianComponent::isotropic(1.0, Vector::Zero(3), 1.0)});
  const Matrix j = tweedie_jacobian(unit, s, Vector::Constant(3, 0.2), 30);
  EXPECT_LT((j - std::sqrt(s.alpha_bar(30)) * Matrix::Identity(3, 3)).norm(), 1e-13);

  const auto p = two_component_2d();
  Vector x(2);
  x << 0.4, -0.1;
  const int t = 10;
  const Matrix jm = tweedie_jacobian(p, s, x, t);
  Matrix fd(2, 2);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    fd.col(i) = (tweedie_x0(p, s, a, t) - tweedie_x0(p, s, b, t)) / (2 * h);
  }
  EXPECT_LT((jm - fd).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Prior, SamplingStatistics) {
  const Vector mu = Vector::LinSpaced(3, 0.0, 1.0);
  const double var = 0.09;
  ScorePrior p({GaussianComponent::isotropic(1.0, mu, var)});
  Rng rng = make_rng(1, 0);
  const int n = 100000;
  Vector mean = Vector::Zero(3);
  for (int i = 0; i < n; ++i) mean += p.sample(rng);
  mean /= n;
  EXPECT_LT((mean - mu).cwiseAbs().maxCoeff(), 4 * std::sqrt(var / n));
}

TEST(Prior, FullCovarianceSampleCovariance) {
  const auto p = two_component_2d();
  const GaussianComponent& c = p.components().front();
  Rng rng = make_rng(2, 0);
  const int n = 40000;
  Matrix acc = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector d = c.sample(rng) - c.mean();
    acc += d * d.transpose();
  }
  EXPECT_LT((acc / n - c.covariance()).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Prior, SamplingIsDeterministic) {
  const auto p = two_component_2d();
  EXPECT_EQ(sample_prior(p, 9), sample_prior(p, 9));
  EXPECT_NE(sample_prior(p, 9), sample_prior(p, 10));
}

TEST(Prior, Validation) {
  EXPECT_THROW(ScorePrior({}), InvalidArgument);
  EXPECT_THROW(ScorePrior({GaussianComponent::isotropic(0.5, Vector::Zero(2), 1.0)}), InvalidArgument);
  EXPECT_THROW(ScorePrior({GaussianComponent::isotropic(0.5, Vector::Zero(2), 1.0),
                           GaussianComponent::isotropic(0.5, Vector::Zero(3), 1.0)}),
               DimensionMismatch);
  EXPECT_THROW(GaussianComponent::isotropic(1.0, Vector::Zero(2), -1.0), InvalidArgument);
  Matrix notpd(2, 2);
  notpd << 1, 2, 2, 1;
  EXPECT_THROW(GaussianComponent::full(1.0, Vector::Zero(2), notpd), InvalidArgument);
}
