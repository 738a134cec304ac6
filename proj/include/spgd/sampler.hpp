#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/guidance.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/rng.hpp"
#include "spgd/schedule.hpp"
#include "spgd/trajectory.hpp"
#include "spgd/types.hpp"

namespace spgd {

enum class Method { ddim_unconditional, dps, spgd };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ddim_unconditional: return "ddim_unconditional";
    case Method::dps: return "dps";
    case Method::spgd: return "spgd";
  }
  return "unknown";
}

/// L_t may grow by at most this factor inside one warm-up loop.
inline constexpr double kDivergenceFactor = 1e6;

namespace detail {

inline void require_finite(const Vector& x, Timestep t, const char* what) {
  if (!x.allFinite()) {
    throw NonFiniteError(std::string("non-finite ") + what + " at t = " + std::to_string(t) +
                         "; reduce zeta");
  }
}

/// x_{t-1} = sqrt(ab_{t-1}) x0_hat + sqrt(1 - ab_{t-1}) eps, given eps at x_t.
inline Vector ddim_from_eps(const NoiseSchedule& schedule, const Vector& x_t, const Vector& eps,
                            Timestep t) {
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - 1);
  const Vector x0 = (x_t - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
  return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
}

}  // namespace detail

/// Deterministic DDIM update.
inline Vector ddim_step(const ScorePrior& prior, const NoiseSchedule& schedule, const Vector& x_t,
                        Timestep t) {
  schedule.check_timestep(t);
  return detail::ddim_from_eps(schedule, x_t, epsilon(prior, schedule, x_t, t), t);
}

/// g_d(x_t) = denoise_coeff * eps(x_t, t).
inline Vector denoising_gradient(const ScorePrior& prior, const NoiseSchedule& schedule,
                                 const Vector& x_t, Timestep t) {
  return ddim_coefficients(schedule, t).denoise_coeff * epsilon(prior, schedule, x_t, t);
}

/// Denoise first, then subtract zeta * g_l evaluated at the pre-denoising state x_t.
inline Vector dps_step(const ScorePrior& prior, const NoiseSchedule& schedule,
                       const MeasurementModel& meas, const GuidanceConfig& guidance,
                       const Vector& x_t, Timestep t) {
  const LikelihoodEvaluation ev = evaluate_likelihood(prior, schedule, meas, x_t, t);
  return detail::ddim_from_eps(schedule, x_t, ev.eps, t) - guidance.zeta * ev.gradient;
}

struct WarmupResult {
  Vector x;  // x_t^(N)
  AdmState state;
  std::vector<InnerRecord> inner;
  long nfe = 0;
  Vector eps_at_start;  // eps(x_t^(0), t), free by-product of the first evaluation
};

/// N likelihood-only steps x^(j+1) = x^(j) - (zeta / N) * g~_l(x^(j)) with ADM smoothing.
/// The momentum state starts empty: it never carries over from a previous timestep.
inline WarmupResult spgd_warmup(const ScorePrior& prior, const NoiseSchedule& schedule,
                                const MeasurementModel& meas, const GuidanceConfig& guidance,
                                const Vector& x_t, Timestep t, bool record_vectors = false) {
  guidance.validate();
  schedule.check_timestep(t);
  const double step = guidance.inner_step();
  WarmupResult out;
  out.x = x_t;
  out.inner.reserve(static_cast<std::size_t>(guidance.warmup_steps));
  double initial_objective = 0.0;
  for (int j = 0; j < guidance.warmup_steps; ++j) {
    const LikelihoodEvaluation ev = evaluate_likelihood(prior, schedule, meas, out.x, t);
    ++out.nfe;
    if (j == 0) {
      initial_objective = ev.objective;
      out.eps_at_start = ev.eps;
    } else if (initial_objective > 0.0 && ev.objective > kDivergenceFactor * initial_objective) {
      throw DivergenceError("warm-up objective grew by more than 1e6x at t = " +
                            std::to_string(t) + ", j = " + std::to_string(j) +
                            "; reduce zeta (inner step " + std::to_string(step) + ")");
    }
    detail::require_finite(ev.gradient, t, "likelihood gradient");
    AdmUpdate upd = adm_update(out.state, ev.gradient, guidance.momentum_beta);
    InnerRecord rec;
    rec.j = j;
    rec.objective = ev.objective;
    rec.raw_norm = ev.gradient.norm();
    rec.smoothed_norm = upd.smoothed_gradient.norm();
    rec.alpha = upd.state.last_alpha;
    out.x -= step * upd.smoothed_gradient;
    if (record_vectors) {
      rec.raw_gradient = ev.gradient;
      rec.smoothed_gradient = upd.smoothed_gradient;
    }
    out.inner.push_back(std::move(rec));
    out.state = std::move(upd.state);
    detail::require_finite(out.x, t, "warm-up state");
  }
  return out;
}

struct SpgdStepResult {
  Vector x_next;
  WarmupResult warmup;
};

inline SpgdStepResult spgd_step_detailed(const ScorePrior& prior, const NoiseSchedule& schedule,
                                         const MeasurementModel& meas,
                                         const GuidanceConfig& guidance, const Vector& x_t,
                                         Timestep t, bool record_vectors = false) {
  SpgdStepResult out{Vector(), spgd_warmup(prior, schedule, meas, guidance, x_t, t, record_vectors)};
  const Vector eps = epsilon(prior, schedule, out.warmup.x, t);
  ++out.warmup.nfe;
  out.x_next = detail::ddim_from_eps(schedule, out.warmup.x, eps, t);
  return out;
}

/// Warm-up followed by the DDIM denoising update applied to x_t^(N).
inline Vector spgd_step(const ScorePrior& prior, const NoiseSchedule& schedule,
                        const MeasurementModel& meas, const GuidanceConfig& guidance,
                        const Vector& x_t, Timestep t) {
  return spgd_step_detailed(prior, schedule, meas, guidance, x_t, t).x_next;
}

struct SamplerConfig {
  Method method = Method::spgd;
  NoiseSchedule schedule = make_default_schedule(100);
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  bool record_diagnostics = false;
};

struct SampleResult {
  Vector x0;
  TrajectoryLog log;
};

/// Initial state x_T ~ N(0, I) for a seed.
inline Vector initial_noise(Eigen::Index dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, streams::kInitialNoise);
  return standard_normal(rng, dim);
}

namespace detail {

inline SampleResult run_sampler_impl(const ScorePrior& prior, const MeasurementModel* meas,
                                     const SamplerConfig& config) {
  const NoiseSchedule& schedule = config.schedule;
  if (config.method != Method::ddim_unconditional) {
    require(meas != nullptr, "guided sampling requires a measurement model");
    config.guidance.validate();
  }
  if (meas != nullptr) require_dim("operator input", prior.dim(), meas->op.input_dim());

  SampleResult out;
  Vector x = initial_noise(prior.dim(), config.seed);
  const bool diag = config.record_diagnostics;
  const StepRecord* prev = nullptr;
  if (diag) out.log.steps.reserve(static_cast<std::size_t>(schedule.num_steps()));
  for (Timestep t = schedule.num_steps(); t >= 1; --t) {
    StepRecord rec;
    rec.outer_t = t;
    const DdimCoefficients c = ddim_coefficients(schedule, t);
    if (diag) rec.x_before = x;

    Vector next;
    switch (config.method) {
      case Method::ddim_unconditional: {
        const Vector eps = epsilon(prior, schedule, x, t);
        ++out.log.nfe;
        next = ddim_from_eps(schedule, x, eps, t);
        if (diag) {
          rec.g_d = c.denoise_coeff * eps;
          if (meas != nullptr) rec.g_l = likelihood_gradient(prior, schedule, *meas, x, t);
        }
        break;
      }
      case Method::dps: {
        const LikelihoodEvaluation ev = evaluate_likelihood(prior, schedule, *meas, x, t);
        ++out.log.nfe;
        require_finite(ev.gradient, t, "likelihood gradient");
        next = ddim_from_eps(schedule, x, ev.eps, t) - config.guidance.zeta * ev.gradient;
        if (diag) {
          rec.g_d = c.denoise_coeff * ev.eps;
          rec.g_l = ev.gradient;
          InnerRecord inner;
          inner.objective = ev.objective;
          inner.raw_norm = inner.smoothed_norm = ev.gradient.norm();
          inner.raw_gradient = inner.smoothed_gradient = ev.gradient;
          rec.inner.push_back(std::move(inner));
        }
        break;
      }
      case Method::spgd: {
        SpgdStepResult step =
            spgd_step_detailed(prior, schedule, *meas, config.guidance, x, t, diag);
        out.log.nfe += step.warmup.nfe;
        next = std::move(step.x_next);
        if (diag) {
          rec.g_d = c.denoise_coeff * step.warmup.eps_at_start;
          rec.g_l = step.warmup.inner.front().raw_gradient;
          rec.final_objective = likelihood_objective(prior, schedule, *meas, step.warmup.x, t);
          rec.inner = std::move(step.warmup.inner);
        }
        break;
      }
    }
    require_finite(next, t, "sampler state");

    if (diag) {
      rec.x_after = next;
      if (rec.g_l.size() > 0) rec.angle_gl_gd = angle_between(rec.g_l, rec.g_d);
      if (prev != nullptr) {
        rec.angle_gd_prev = angle_between(rec.g_d, prev->g_d);
        if (rec.g_l.size() > 0 && prev->g_l.size() > 0) {
          rec.angle_gl_prev = angle_between(rec.g_l, prev->g_l);
        }
      }
      out.log.steps.push_back(std::move(rec));
      prev = &out.log.steps.back();
    }
    x = std::move(next);
  }
  out.x0 = std::move(x);
  return out;
}

}  // namespace detail

/// Runs the configured reverse process from x_T ~ N(0, I) down to x_0.
inline SampleResult run_sampler(const ScorePrior& prior, const MeasurementModel& meas,
                                const SamplerConfig& config) {
  return detail::run_sampler_impl(prior, &meas, config);
}

/// Unconditional DDIM sampling; no measurement involved.
inline SampleResult run_sampler(const ScorePrior& prior, const SamplerConfig& config) {
  detail::require(config.method == Method::ddim_unconditional,
                  "guided sampling requires a measurement model");
  return detail::run_sampler_impl(prior, nullptr, config);
}

}  // namespace spgd
