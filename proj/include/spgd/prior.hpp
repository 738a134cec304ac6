#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/rng.hpp"
#include "spgd/schedule.hpp"
#include "spgd/types.hpp"

namespace spgd {

/// One Gaussian of a mixture prior over clean signals x_0.
///
/// The covariance is either sigma^2 * I (isotropic) or a full SPD matrix. A
/// full covariance is eigendecomposed once so that the noised covariance
/// alpha_bar * Sigma + (1 - alpha_bar) * I at any timestep shares the same
/// eigenvectors and needs no refactorisation.
class GaussianComponent {
 public:
  static GaussianComponent isotropic(double weight, Vector mean, double variance) {
    detail::require(variance > 0.0, "isotropic variance must be positive");
    GaussianComponent c(weight, std::move(mean));
    c.variance_ = variance;
    return c;
  }

  static GaussianComponent full(double weight, Vector mean, const Matrix& covariance) {
    detail::require_dim("covariance rows", mean.size(), covariance.rows());
    detail::require_dim("covariance cols", mean.size(), covariance.cols());
    detail::require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <=
                        1e-12 * (1.0 + covariance.cwiseAbs().maxCoeff()),
                    "covariance must be symmetric");
    GaussianComponent c(weight, std::move(mean));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
    detail::require(eig.info() == Eigen::Success, "covariance eigendecomposition failed");
    detail::require(eig.eigenvalues().minCoeff() > 0.0, "covariance must be positive definite");
    c.eigenvalues_ = eig.eigenvalues();
    c.eigenvectors_ = eig.eigenvectors();
    return c;
  }

  double weight() const { return weight_; }
  const Vector& mean() const { return mean_; }
  Eigen::Index dim() const { return mean_.size(); }
  bool is_isotropic() const { return eigenvalues_.size() == 0; }
  double variance() const { return variance_; }

  Matrix covariance() const {
    if (is_isotropic()) return variance_ * Matrix::Identity(dim(), dim());
    return eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
  }

  /// Eigenvalues of alpha_bar * Sigma + (1 - alpha_bar) * I.
  Vector noised_eigenvalues(double alpha_bar) const {
    if (is_isotropic()) {
      return Vector::Constant(dim(), alpha_bar * variance_ + (1.0 - alpha_bar));
    }
    return (alpha_bar * eigenvalues_.array() + (1.0 - alpha_bar)).matrix();
  }

  /// Applies the inverse noised covariance to v.
  Vector apply_precision(double alpha_bar, const Vector& v) const {
    if (is_isotropic()) return v / (alpha_bar * variance_ + (1.0 - alpha_bar));
    const Vector c = noised_eigenvalues(alpha_bar);
    return eigenvectors_ * (eigenvectors_.transpose() * v).cwiseQuotient(c);
  }

  Matrix precision(double alpha_bar) const {
    if (is_isotropic()) {
      return Matrix::Identity(dim(), dim()) / (alpha_bar * variance_ + (1.0 - alpha_bar));
    }
    const Vector c = noised_eigenvalues(alpha_bar);
    return eigenvectors_ * c.cwiseInverse().asDiagonal() * eigenvectors_.transpose();
  }

  double noised_log_det(double alpha_bar) const {
    if (is_isotropic()) {
      return static_cast<double>(dim()) * std::log(alpha_bar * variance_ + (1.0 - alpha_bar));
    }
    return noised_eigenvalues(alpha_bar).array().log().sum();
  }

  /// Draws mean + Sigma^{1/2} z.
  Vector sample(Rng& rng) const {
    const Vector z = standard_normal(rng, dim());
    if (is_isotropic()) return mean_ + std::sqrt(variance_) * z;
    return mean_ + eigenvectors_ * eigenvalues_.cwiseSqrt().cwiseProduct(z);
  }

 private:
  GaussianComponent(double weight, Vector mean) : weight_(weight), mean_(std::move(mean)) {
    detail::require(weight > 0.0 && weight <= 1.0, "component weight must lie in (0,1]");
    detail::require(mean_.size() > 0, "component mean must be non-empty");
  }

  double weight_ = 1.0;
  Vector mean_;
  double variance_ = 0.0;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

/// Per-component quantities of the noised mixture at one (x_t, alpha_bar).
struct MixtureEvaluation {
  std::vector<double> responsibilities;
  /// Column k holds P_k (x_t - sqrt(alpha_bar) mu_k); the component score is its negation.
  Matrix precision_deltas;
  Vector score;
  double log_density = 0.0;
};

/// Gaussian-mixture prior whose noised marginals are available in closed form:
/// p_t(x) = sum_k w_k N(x; sqrt(ab) mu_k, ab Sigma_k + (1 - ab) I).
class ScorePrior {
 public:
  explicit ScorePrior(std::vector<GaussianComponent> components)
      : components_(std::move(components)) {
    detail::require(!components_.empty(), "prior needs at least one component");
    const Eigen::Index d = components_.front().dim();
    double total = 0.0;
    for (const auto& c : components_) {
      detail::require_dim("prior component", d, c.dim());
      total += c.weight();
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
  }

  Eigen::Index dim() const { return components_.front().dim(); }
  const std::vector<GaussianComponent>& components() const { return components_; }

  MixtureEvaluation evaluate(const Vector& x, double alpha_bar) const {
    detail::require_dim("x_t", dim(), x.size());
    const std::size_t k_count = components_.size();
    const double sqrt_ab = std::sqrt(alpha_bar);
    const double log_2pi = std::log(2.0 * std::numbers::pi);

    MixtureEvaluation out;
    out.responsibilities.resize(k_count);
    out.precision_deltas.resize(dim(), static_cast<Eigen::Index>(k_count));
    std::vector<double> log_terms(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& c = components_[k];
      const Vector delta = x - sqrt_ab * c.mean();
      const Vector pd = c.apply_precision(alpha_bar, delta);
      out.precision_deltas.col(static_cast<Eigen::Index>(k)) = pd;
      log_terms[k] = std::log(c.weight()) - 0.5 * delta.dot(pd) -
                     0.5 * c.noised_log_det(alpha_bar) -
                     0.5 * static_cast<double>(dim()) * log_2pi;
    }
    // Log-sum-exp with max subtraction; responsibilities span many decades.
    const double max_log = *std::max_element(log_terms.begin(), log_terms.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      out.responsibilities[k] = std::exp(log_terms[k] - max_log);
      sum += out.responsibilities[k];
    }
    out.score = Vector::Zero(dim());
    for (std::size_t k = 0; k < k_count; ++k) {
      out.responsibilities[k] /= sum;
      out.score -= out.responsibilities[k] * out.precision_deltas.col(static_cast<Eigen::Index>(k));
    }
    out.log_density = max_log + std::log(sum);
    return out;
  }

  double log_density(const Vector& x, double alpha_bar) const {
    return evaluate(x, alpha_bar).log_density;
  }

  Vector score(const Vector& x, double alpha_bar) const { return evaluate(x, alpha_bar).score; }

  /// Hessian of log p_t:  sum_k r_k (-P_k + q_k q_k^T) - s s^T  with q_k = P_k delta_k.
  Matrix score_hessian(const MixtureEvaluation& ev, double alpha_bar) const {
    Matrix h = -ev.score * ev.score.transpose();
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double r = ev.responsibilities[k];
      if (r == 0.0) continue;
      const auto q = ev.precision_deltas.col(static_cast<Eigen::Index>(k));
      h.noalias() += r * (q * q.transpose());
      h -= r * components_[k].precision(alpha_bar);
    }
    return 0.5 * (h + h.transpose());
  }

  /// Hessian-vector product without forming the d x d Hessian.
  Vector score_hessian_times(const MixtureEvaluation& ev, double alpha_bar, const Vector& v) const {
    Vector out = -ev.score * ev.score.dot(v);
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double r = ev.responsibilities[k];
      if (r == 0.0) continue;
      const auto q = ev.precision_deltas.col(static_cast<Eigen::Index>(k));
      out += r * (q * q.dot(v) - components_[k].apply_precision(alpha_bar, v));
    }
    return out;
  }

  Vector sample(Rng& rng) const {
    std::vector<double> weights;
    weights.reserve(components_.size());
    for (const auto& c : components_) weights.push_back(c.weight());
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    return components_[pick(rng)].sample(rng);
  }

 private:
  std::vector<GaussianComponent> components_;
};

// Timestep-indexed operations. The noised marginal at t depends on the
// schedule only through alpha_bar(t).

inline Vector score(const ScorePrior& prior, const NoiseSchedule& schedule, const Vector& x_t,
                    Timestep t) {
  return prior.score(x_t, schedule.alpha_bar(t));
}

inline Matrix score_hessian(const ScorePrior& prior, const NoiseSchedule& schedule,
                            const Vector& x_t, Timestep t) {
  const double ab = schedule.alpha_bar(t);
  return prior.score_hessian(prior.evaluate(x_t, ab), ab);
}

/// Noise prediction eps(x_t, t) = -sqrt(1 - alpha_bar) * score.
inline Vector epsilon(const ScorePrior& prior, const NoiseSchedule& schedule, const Vector& x_t,
                      Timestep t) {
  const double ab = schedule.alpha_bar(t);
  return -std::sqrt(1.0 - ab) * prior.score(x_t, ab);
}

/// Posterior mean E[x_0 | x_t] = (x_t + (1 - alpha_bar) * score) / sqrt(alpha_bar).
inline Vector tweedie_x0(const ScorePrior& prior, const NoiseSchedule& schedule, const Vector& x_t,
                         Timestep t) {
  const double ab = schedule.alpha_bar(t);
  return (x_t + (1.0 - ab) * prior.score(x_t, ab)) / std::sqrt(ab);
}

/// The same estimate through the noise prediction: (x_t - sqrt(1 - ab) eps) / sqrt(ab).
inline Vector tweedie_x0_from_epsilon(const NoiseSchedule& schedule, const Vector& x_t,
                                      const Vector& eps, Timestep t) {
  const double ab = schedule.alpha_bar(t);
  return (x_t - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

/// d x0_hat / d x_t = (I + (1 - ab) * Hessian) / sqrt(ab). Symmetric.
inline Matrix tweedie_jacobian(const ScorePrior& prior, const NoiseSchedule& schedule,
                               const Vector& x_t, Timestep t) {
  const double ab = schedule.alpha_bar(t);
  Matrix j = (1.0 - ab) * score_hessian(prior, schedule, x_t, t);
  j.diagonal().array() += 1.0;
  return j / std::sqrt(ab);
}

inline Vector sample_prior(const ScorePrior& prior, std::uint64_t seed) {
  Rng rng = make_rng(seed, streams::kGroundTruth);
  return prior.sample(rng);
}

}  // namespace spgd
