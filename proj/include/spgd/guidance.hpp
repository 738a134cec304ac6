#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "spgd/error.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/schedule.hpp"
#include "spgd/types.hpp"

namespace spgd {

/// Likelihood-guidance hyperparameters.
struct GuidanceConfig {
  double zeta = 1.0;          // total step per outer timestep; each warm-up step uses zeta / N
  int warmup_steps = 5;       // N
  double momentum_beta = 0.95;

  void validate() const {
    detail::require(zeta >= 0.0, "zeta must be non-negative");
    detail::require(warmup_steps >= 1, "warmup_steps must be at least 1");
    detail::require(momentum_beta >= 0.0 && momentum_beta < 1.0, "momentum_beta must lie in [0,1)");
  }

  double inner_step() const { return zeta / warmup_steps; }
};

/// Task defaults for zeta at image scale (inpainting, Gaussian deblur, motion deblur, 4x SR).
namespace default_zeta {
inline constexpr double kInpainting = 2.5;
inline constexpr double kGaussianDeblur = 1.5;
inline constexpr double kMotionDeblur = 1.0;
inline constexpr double kSuperResolution = 8.0;
}  // namespace default_zeta

/// How J^T v is formed inside the likelihood gradient.
enum class JacobianMode {
  automatic,    // dense below kDenseJacobianLimit, matrix-free above
  dense,
  matrix_free,
};

inline constexpr Eigen::Index kDenseJacobianLimit = 256;

/// Everything a single prior evaluation at x_t yields for guidance.
struct LikelihoodEvaluation {
  Vector eps;
  Vector x0_hat;
  Vector residual;   // A x0_hat - y
  double objective;  // 0.5 * ||residual||^2
  Vector gradient;   // 2 J^T A^T residual, the gradient of ||y - A x0_hat||^2
};

inline LikelihoodEvaluation evaluate_likelihood(const ScorePrior& prior,
                                                const NoiseSchedule& schedule,
                                                const MeasurementModel& meas, const Vector& x_t,
                                                Timestep t,
                                                JacobianMode mode = JacobianMode::automatic) {
  detail::require_dim("x_t", prior.dim(), x_t.size());
  detail::require_dim("operator input", prior.dim(), meas.op.input_dim());
  const double ab = schedule.alpha_bar(t);
  schedule.check_timestep(t);
  const MixtureEvaluation ev = prior.evaluate(x_t, ab);
  const double sqrt_ab = std::sqrt(ab);

  LikelihoodEvaluation out;
  out.eps = -std::sqrt(1.0 - ab) * ev.score;
  out.x0_hat = (x_t + (1.0 - ab) * ev.score) / sqrt_ab;
  out.residual = meas.op.apply(out.x0_hat) - meas.measurement;
  out.objective = 0.5 * out.residual.squaredNorm();

  const Vector v = meas.op.adjoint(out.residual);
  const bool use_dense = mode == JacobianMode::dense ||
                         (mode == JacobianMode::automatic && prior.dim() <= kDenseJacobianLimit);
  if (use_dense) {
    Matrix j = (1.0 - ab) * prior.score_hessian(ev, ab);
    j.diagonal().array() += 1.0;
    out.gradient = (2.0 / sqrt_ab) * (j.transpose() * v);
  } else {
    // J is symmetric, so J^T v = (v + (1 - ab) H v) / sqrt(ab).
    out.gradient = (2.0 / sqrt_ab) * (v + (1.0 - ab) * prior.score_hessian_times(ev, ab, v));
  }
  return out;
}

/// L_t(x_t) = 0.5 * ||y - A x0_hat(x_t)||^2.
inline double likelihood_objective(const ScorePrior& prior, const NoiseSchedule& schedule,
                                   const MeasurementModel& meas, const Vector& x_t, Timestep t) {
  const Vector x0 = tweedie_x0(prior, schedule, x_t, t);
  return 0.5 * (meas.measurement - meas.op.apply(x0)).squaredNorm();
}

/// g_l = grad ||y - A x0_hat(x_t)||^2, i.e. twice the gradient of L_t.
inline Vector likelihood_gradient(const ScorePrior& prior, const NoiseSchedule& schedule,
                                  const MeasurementModel& meas, const Vector& x_t, Timestep t,
                                  JacobianMode mode = JacobianMode::automatic) {
  return evaluate_likelihood(prior, schedule, meas, x_t, t, mode).gradient;
}

/// Central finite differences of ||y - A x0_hat||^2; 2d objective evaluations.
inline Vector likelihood_gradient_fd(const ScorePrior& prior, const NoiseSchedule& schedule,
                                     const MeasurementModel& meas, const Vector& x_t, Timestep t,
                                     double step) {
  detail::require(step > 0.0, "finite-difference step must be positive");
  Vector g(x_t.size());
  Vector probe = x_t;
  for (Eigen::Index i = 0; i < x_t.size(); ++i) {
    probe[i] = x_t[i] + step;
    const double up = 2.0 * likelihood_objective(prior, schedule, meas, probe, t);
    probe[i] = x_t[i] - step;
    const double down = 2.0 * likelihood_objective(prior, schedule, meas, probe, t);
    probe[i] = x_t[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Cosine similarity; 0 when either vector is (numerically) zero.
inline double cosine_sim(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// Adaptive directional momentum state for one warm-up loop.
struct AdmState {
  std::optional<Vector> smoothed;
  std::optional<double> last_alpha;

  bool empty() const { return !smoothed.has_value(); }
  void reset() {
    smoothed.reset();
    last_alpha.reset();
  }
};

struct AdmUpdate {
  AdmState state;
  Vector smoothed_gradient;
};

/// One momentum step: the first call passes the raw gradient through; later calls blend
///   g~ = a*beta*g~_prev + (1 - a*beta)*g,   a = (cos(g~_prev, g) + 1) / 2.
inline AdmUpdate adm_update(const AdmState& state, const Vector& g_raw, double beta) {
  detail::require(beta >= 0.0 && beta < 1.0, "momentum_beta must lie in [0,1)");
  AdmUpdate out;
  if (state.empty()) {
    out.state.smoothed = g_raw;
    out.smoothed_gradient = g_raw;
    return out;
  }
  const Vector& prev = *state.smoothed;
  detail::require_dim("ADM gradient", prev.size(), g_raw.size());
  const double alpha = (cosine_sim(prev, g_raw) + 1.0) / 2.0;
  const double mix = alpha * beta;
  out.smoothed_gradient = mix * prev + (1.0 - mix) * g_raw;
  out.state.smoothed = out.smoothed_gradient;
  out.state.last_alpha = alpha;
  return out;
}

}  // namespace spgd
