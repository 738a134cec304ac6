#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spgd/error.hpp"
#include "spgd/types.hpp"

namespace spgd {

/// Discrete variance schedule of a T-step diffusion process.
///
/// Timesteps are indexed t = 1..T. The cumulative product is stored with a
/// leading boundary entry so that alpha_bar(0) == 1 and the final reverse step
/// (t = 1) needs no special casing.
class NoiseSchedule {
 public:
  /// Builds a schedule from explicit betas (beta_1 .. beta_T).
  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    detail::require(!betas_.empty(), "noise schedule needs at least one step");
    for (std::size_t i = 0; i < betas_.size(); ++i) {
      const double b = betas_[i];
      detail::require(b > 0.0 && b < 1.0, "beta must lie in (0,1)");
      if (i > 0) detail::require(betas_[i - 1] <= b, "betas must be non-decreasing");
    }
    alphas_.reserve(betas_.size());
    alpha_bars_.reserve(betas_.size() + 1);
    alpha_bars_.push_back(1.0);
    for (double b : betas_) {
      alphas_.push_back(1.0 - b);
      alpha_bars_.push_back(alpha_bars_.back() * alphas_.back());
    }
  }

  int num_steps() const { return static_cast<int>(betas_.size()); }

  double beta(Timestep t) const { return betas_[index(t)]; }
  double alpha(Timestep t) const { return alphas_[index(t)]; }

  /// Cumulative product up to t; defined for t in 0..T with alpha_bar(0) == 1.
  double alpha_bar(Timestep t) const {
    detail::require(t >= 0 && t <= num_steps(), "timestep out of range: " + std::to_string(t));
    return alpha_bars_[static_cast<std::size_t>(t)];
  }

  const std::vector<double>& betas() const { return betas_; }

  void check_timestep(Timestep t) const { (void)index(t); }

 private:
  std::size_t index(Timestep t) const {
    detail::require(t >= 1 && t <= num_steps(),
                    "timestep out of range: " + std::to_string(t) + " not in [1, " +
                        std::to_string(num_steps()) + "]");
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// Betas linearly interpolated from beta_start (t = 1) to beta_end (t = T).
inline NoiseSchedule make_linear_schedule(int num_steps, double beta_start, double beta_end) {
  detail::require(num_steps >= 1, "num_steps must be positive");
  detail::require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                  "require 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(num_steps));
  for (int i = 0; i < num_steps; ++i) {
    const double frac = num_steps > 1 ? static_cast<double>(i) / (num_steps - 1) : 0.0;
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

/// Default beta range for a T-step process: the 1000-step DDPM range
/// [1e-4, 0.02] scaled by 1000/T so the summed noise is roughly T-invariant.
/// Both ends are capped at 0.999, which only bites for T <= 20.
inline constexpr double kMaxBeta = 0.999;

struct BetaRange {
  double start;
  double end;
};

inline BetaRange default_beta_range(int num_steps) {
  detail::require(num_steps >= 1, "num_steps must be positive");
  const double scale = 1000.0 / num_steps;
  return {std::min(1e-4 * scale, kMaxBeta), std::min(0.02 * scale, kMaxBeta)};
}

inline NoiseSchedule make_default_schedule(int num_steps) {
  const BetaRange r = default_beta_range(num_steps);
  return make_linear_schedule(num_steps, r.start, r.end);
}

/// Coefficients of the deterministic DDIM step written as
/// x_{t-1} = scale * x_t - denoise_coeff * eps(x_t, t).
struct DdimCoefficients {
  double scale;
  double denoise_coeff;
  double sigma_t;  // always 0: only the deterministic sampler is implemented
};

inline DdimCoefficients ddim_coefficients(double alpha, double alpha_bar, double alpha_bar_prev) {
  return {1.0 / std::sqrt(alpha),
          std::sqrt(1.0 - alpha_bar) / std::sqrt(alpha) - std::sqrt(1.0 - alpha_bar_prev), 0.0};
}

inline DdimCoefficients ddim_coefficients(const NoiseSchedule& schedule, Timestep t) {
  return ddim_coefficients(schedule.alpha(t), schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
}

}  // namespace spgd
