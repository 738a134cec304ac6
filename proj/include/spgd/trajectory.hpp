#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "spgd/guidance.hpp"
#include "spgd/types.hpp"

namespace spgd {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Unsigned angle in degrees; 90 when either vector is zero.
inline double angle_between(const Vector& u, const Vector& v) {
  return std::acos(std::clamp(cosine_sim(u, v), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// One warm-up iteration j at a fixed outer timestep.
struct InnerRecord {
  int j = 0;
  double objective = 0.0;       // L_t(x_t^(j)), halved convention
  double raw_norm = 0.0;        // ||g_l(x_t^(j))||
  double smoothed_norm = 0.0;   // ||g~_l(x_t^(j))||
  std::optional<double> alpha;  // absent at j = 0
  // Populated only when diagnostics are recorded.
  Vector raw_gradient;
  Vector smoothed_gradient;
};

/// One outer reverse step t -> t-1.
///
/// Gradient fields are evaluated at the outer iterate x_t (before any warm-up),
/// so the three angle curves compare like with like across methods.
struct StepRecord {
  int outer_t = 0;
  Vector x_before;
  Vector x_after;
  Vector g_d;  // denoise_coeff * eps(x_t, t)
  Vector g_l;  // raw likelihood gradient at x_t; empty without a measurement
  std::vector<InnerRecord> inner;
  double angle_gl_gd = kNaN;    // angle(g_l(x_t), g_d(x_t))
  double angle_gl_prev = kNaN;  // angle(g_l(x_t), g_l(x_{t+1})); NaN at t = T
  double angle_gd_prev = kNaN;  // angle(g_d(x_t), g_d(x_{t+1})); NaN at t = T
  /// L_t(x_t^(N)) after the warm-up; NaN unless diagnostics are recorded.
  double final_objective = kNaN;
};

/// Per-step record of a reverse trajectory, ordered by decreasing outer_t.
struct TrajectoryLog {
  std::vector<StepRecord> steps;
  long nfe = 0;  // eps-model evaluations performed
};

}  // namespace spgd
