#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/guidance.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/rng.hpp"
#include "spgd/trajectory.hpp"
#include "spgd/types.hpp"

namespace spgd {

// ---------------------------------------------------------------------------
// Local smoothness of the likelihood gradient

inline double default_lipschitz_radius(const Vector& x_t) { return 0.1 * x_t.norm() + 0.01; }
inline constexpr int kDefaultLipschitzProbes = 32;

/// Largest ||g_l(u) - g_l(v)|| / ||u - v|| over all pairs of `probes` points drawn
/// uniformly from the ball of `radius` around x_t. Estimates the Lipschitz constant
/// of the un-halved gradient g_l. Points are drawn sequentially, so for a fixed seed
/// adding probes can only raise the estimate.
inline double estimate_lipschitz(const ScorePrior& prior, const NoiseSchedule& schedule,
                                 const MeasurementModel& meas, const Vector& x_t, Timestep t,
                                 int probes = kDefaultLipschitzProbes,
                                 std::optional<double> radius = std::nullopt,
                                 std::uint64_t seed = 0) {
  detail::require(probes >= 2, "lipschitz estimate needs at least two probes");
  const double r = radius.value_or(default_lipschitz_radius(x_t));
  detail::require(r > 0.0, "lipschitz radius must be positive");
  Rng rng = make_rng(seed, streams::kLipschitzProbes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto d = static_cast<double>(x_t.size());

  std::vector<Vector> points;
  std::vector<Vector> grads;
  points.reserve(static_cast<std::size_t>(probes));
  grads.reserve(static_cast<std::size_t>(probes));
  double best = 0.0;
  for (int i = 0; i < probes; ++i) {
    Vector dir = standard_normal(rng, x_t.size());
    dir.normalize();
    const double rho = r * std::pow(unit(rng), 1.0 / d);
    Vector p = x_t + rho * dir;
    Vector g = likelihood_gradient(prior, schedule, meas, p, t);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double dist = (p - points[k]).norm();
      if (dist > 0.0) best = std::max(best, (g - grads[k]).norm() / dist);
    }
    points.push_back(std::move(p));
    grads.push_back(std::move(g));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Descent-lemma check for the warm-up loop

/// Objective values L_t(x^(0..N)) and halved-gradient norms ||grad L_t(x^(0..N-1))||.
struct DescentTrace {
  std::vector<double> objectives;
  std::vector<double> gradient_norms;
};

/// Builds a trace from warm-up records. grad L_t = g_l / 2 because L_t carries a 1/2.
inline DescentTrace make_descent_trace(const std::vector<InnerRecord>& inner,
                                       double final_objective) {
  DescentTrace trace;
  for (const auto& rec : inner) {
    trace.objectives.push_back(rec.objective);
    trace.gradient_norms.push_back(0.5 * rec.raw_norm);
  }
  trace.objectives.push_back(final_objective);
  return trace;
}

struct DescentReport {
  /// L(x^(j+1)) <= L(x^(j)) - eta (1 - L eta / 2) ||grad L(x^(j))||^2 + tol
  std::vector<bool> per_step_bound;
  /// L(x^(j+1)) <= L(x^(j)) + tol
  std::vector<bool> per_step_decrease;
  bool telescoped_bound = false;
  /// eta < 1 / L: the precondition under which the bound certifies descent.
  bool step_condition = false;
  double tolerance = 0.0;
  /// Right-hand side minus left-hand side of the telescoped inequality.
  double telescoped_slack = 0.0;

  bool bounds_hold() const {
    return telescoped_bound &&
           std::all_of(per_step_bound.begin(), per_step_bound.end(), [](bool b) { return b; });
  }
  bool monotone() const {
    return std::all_of(per_step_decrease.begin(), per_step_decrease.end(),
                       [](bool b) { return b; });
  }
  bool passed() const { return step_condition && bounds_hold() && monotone(); }
};

/// Checks the L-smooth descent inequalities along a warm-up trace.
///
/// `inner_step` is the step zeta / N applied to the un-halved g_l and
/// `lipschitz` a Lipschitz constant of g_l, the same quantities the sampler and
/// estimate_lipschitz use. They are converted to the halved objective
/// (eta = 2 * inner_step, L = lipschitz / 2); the product eta * L is unchanged.
inline DescentReport descent_check(const DescentTrace& trace, double inner_step, double lipschitz) {
  const std::size_t n = trace.gradient_norms.size();
  if (n == 0 || trace.objectives.size() != n + 1) {
    throw InvalidArgument("descent check needs N gradient norms and N + 1 objective values");
  }
  detail::require(inner_step > 0.0, "step size must be positive");
  const double eta = 2.0 * inner_step;
  const double l_half = 0.5 * lipschitz;
  const double factor = eta * (1.0 - l_half * eta / 2.0);

  DescentReport rep;
  rep.tolerance = 1e-10 * (1.0 + std::abs(trace.objectives.front()));
  rep.step_condition = eta * l_half < 1.0;
  double sum_sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double g2 = trace.gradient_norms[j] * trace.gradient_norms[j];
    sum_sq += g2;
    const double lhs = trace.objectives[j + 1];
    rep.per_step_bound.push_back(lhs <= trace.objectives[j] - factor * g2 + rep.tolerance);
    rep.per_step_decrease.push_back(lhs <= trace.objectives[j] + rep.tolerance);
  }
  rep.telescoped_slack = trace.objectives.front() - factor * sum_sq - trace.objectives.back();
  rep.telescoped_bound = rep.telescoped_slack >= -rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian posterior

/// E[x_0 | y] for x_0 ~ N(mu, Sigma), y = A x_0 + N(0, sigma_y^2 I):
/// mu + Sigma A^T (A Sigma A^T + sigma_y^2 I)^{-1} (y - A mu).
inline Vector gaussian_posterior_mean(const GaussianComponent& prior, const LinearOperator& op,
                                      const Vector& y, double noise_std) {
  detail::require_dim("operator input", prior.dim(), op.input_dim());
  detail::require_dim("measurement", op.output_dim(), y.size());
  detail::require(noise_std >= 0.0, "noise_std must be non-negative");
  const Matrix a = op.to_matrix();
  const Matrix sigma = prior.covariance();
  const Matrix sigma_at = sigma * a.transpose();
  Matrix s = a * sigma_at;
  s.diagonal().array() += noise_std * noise_std;
  Eigen::LDLT<Matrix> ldlt(s);
  // rcond() is unreliable for exactly singular pivots, so compare the pivots directly.
  const Vector d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      d.minCoeff() <= 1e-13 * d.cwiseAbs().maxCoeff()) {
    throw SingularSystem("posterior system A Sigma A^T + sigma_y^2 I is singular");
  }
  return prior.mean() + sigma_at * ldlt.solve(y - a * prior.mean());
}

// ---------------------------------------------------------------------------
// Gradient-angle curves

struct AngleCurve {
  std::vector<int> timesteps;
  std::vector<double> degrees;  // NaN where undefined
  double mean = kNaN;
  double max = kNaN;
};

struct AngleSummary {
  AngleCurve likelihood_vs_denoising;  // angle(g_l(x_t), g_d(x_t))
  AngleCurve likelihood_temporal;      // angle(g_l(x_t), g_l(x_{t+1}))
  AngleCurve denoising_temporal;       // angle(g_d(x_t), g_d(x_{t+1}))
};

namespace detail {

inline void finish_curve(AngleCurve& c) {
  double sum = 0.0;
  long count = 0;
  for (double v : c.degrees) {
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
    c.max = std::isnan(c.max) ? v : std::max(c.max, v);
  }
  if (count > 0) c.mean = sum / static_cast<double>(count);
}

}  // namespace detail

inline AngleSummary angle_summary(const TrajectoryLog& log) {
  AngleSummary s;
  for (const auto& step : log.steps) {
    for (AngleCurve* c :
         {&s.likelihood_vs_denoising, &s.likelihood_temporal, &s.denoising_temporal}) {
      c->timesteps.push_back(step.outer_t);
    }
    s.likelihood_vs_denoising.degrees.push_back(step.angle_gl_gd);
    s.likelihood_temporal.degrees.push_back(step.angle_gl_prev);
    s.denoising_temporal.degrees.push_back(step.angle_gd_prev);
  }
  detail::finish_curve(s.likelihood_vs_denoising);
  detail::finish_curve(s.likelihood_temporal);
  detail::finish_curve(s.denoising_temporal);
  return s;
}

/// Mean angle between consecutive warm-up directions, raw versus ADM-smoothed.
struct WarmupAngleSummary {
  double raw_mean = kNaN;
  double smoothed_mean = kNaN;
  long pairs = 0;
};

inline WarmupAngleSummary warmup_angle_summary(const TrajectoryLog& log) {
  WarmupAngleSummary s;
  double raw = 0.0;
  double smooth = 0.0;
  for (const auto& step : log.steps) {
    for (std::size_t j = 1; j < step.inner.size(); ++j) {
      const auto& a = step.inner[j - 1];
      const auto& b = step.inner[j];
      if (a.raw_gradient.size() == 0 || b.raw_gradient.size() == 0) continue;
      raw += angle_between(a.raw_gradient, b.raw_gradient);
      smooth += angle_between(a.smoothed_gradient, b.smoothed_gradient);
      ++s.pairs;
    }
  }
  if (s.pairs > 0) {
    s.raw_mean = raw / static_cast<double>(s.pairs);
    s.smoothed_mean = smooth / static_cast<double>(s.pairs);
  }
  return s;
}

}  // namespace spgd
